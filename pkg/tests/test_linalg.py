from collections import Counter

import numpy as np
import pytest

from etpir.field import DEFAULT_Q, PrimeField
from etpir.linalg import (
    BLOCK_INVERSE_MIN,
    Matrix,
    ShapeError,
    SingularMatrixError,
    det,
    first_singular_block_rows,
    first_singular_rows,
    from_text,
    identity,
    invert,
    is_invertible,
    is_mds,
    kron,
    matmul,
    matrix,
    nullspace_systematic,
    random_full_rank,
    random_matrix,
    rank,
    solve,
    to_text,
    vandermonde,
    zeros,
    _eliminate,
    invert_array,
    left_nullspace,
    mat_mod,
)

F3, F7 = PrimeField(3), PrimeField(7)


def test_identity_is_neutral():
    M = random_matrix(3, 3, F7, np.random.default_rng(0))
    assert matmul(identity(3, F7), M) == M
    assert matmul(M, identity(3, F7)) == M


def test_hand_multiplication_mod_3():
    A = matrix([[1, 2], [0, 1]], F3)
    B = matrix([[1, 0], [1, 1]], F3)
    assert matmul(A, B).tolist() == [[0, 2], [1, 1]]
    assert (A @ B).tolist() == [[0, 2], [1, 1]]


@pytest.mark.parametrize("q", [7, DEFAULT_Q])
def test_associativity(q):
    F = PrimeField(q)
    rng = np.random.default_rng(q % 1000)
    for _ in range(5):
        A, B, C = (random_matrix(4, 4, F, rng) for _ in range(3))
        assert matmul(A, matmul(B, C)) == matmul(matmul(A, B), C)


@pytest.mark.parametrize("q", [DEFAULT_Q, 2**61 - 1])
def test_large_field_products_are_exact(q):
    F = PrimeField(q)
    rng = np.random.default_rng(9)
    A, B = random_matrix(5, 40, F, rng), random_matrix(40, 3, F, rng)
    want = [[sum(int(A.data[i, t]) * int(B.data[t, j]) for t in range(40)) % q for j in range(3)]
            for i in range(5)]
    assert matmul(A, B).tolist() == want


def test_shape_and_field_mismatch():
    with pytest.raises(ShapeError):
        matmul(identity(2, F7), identity(3, F7))
    with pytest.raises(ValueError):
        matmul(identity(2, F7), identity(2, F3))


def test_rank_examples():
    assert rank(zeros(3, 5, F7)) == 0
    assert rank(identity(4, F7)) == 4
    assert rank(vandermonde(3, (1, 2, 3), F7)) == 3


def test_determinant_examples():
    assert det(identity(5, F7)) == 1
    assert det(matrix([[1, 2, 3], [1, 2, 3], [0, 1, 1]], F7)) == 0
    assert det(vandermonde(3, (1, 2, 3), F7)) == 2


def test_determinant_matches_vandermonde_formula():
    F = PrimeField(101)
    pts = (3, 8, 20, 44)
    want = 1
    for i in range(4):
        for j in range(i + 1, 4):
            want = want * (pts[j] - pts[i]) % 101
    assert det(vandermonde(4, pts, F)) == want


def test_inverse_examples():
    assert invert(identity(3, F7)) == identity(3, F7)
    assert invert(matrix([[1, 1], [0, 1]], F3)).tolist() == [[1, 2], [0, 1]]


def test_random_inverse_roundtrip():
    rng = np.random.default_rng(4)
    for _ in range(10):
        M = random_full_rank(4, F7, rng)
        assert matmul(M, invert(M)) == identity(4, F7)


def test_singular_inverse_raises():
    with pytest.raises(SingularMatrixError):
        invert(matrix([[1, 2], [2, 4]], F7))
    assert not is_invertible(matrix([[1, 2], [2, 4]], F7))


def test_solve():
    rng = np.random.default_rng(2)
    A = random_full_rank(3, F7, rng)
    X = random_matrix(3, 2, F7, rng)
    assert solve(A, matmul(A, X)) == X


def test_kronecker_identities():
    rng = np.random.default_rng(5)
    A = random_matrix(2, 3, F7, rng)
    assert kron(A, identity(1, F7)) == A
    assert kron(identity(2, F7), identity(3, F7)) == identity(6, F7)


def test_kronecker_rank_is_multiplicative():
    rng = np.random.default_rng(6)
    for _ in range(10):
        A, B = random_matrix(3, 3, F3, rng), random_matrix(3, 3, F3, rng)
        assert rank(kron(A, B)) == rank(A) * rank(B)


def test_vandermonde_layout():
    F = PrimeField(11)
    assert vandermonde(1, (2, 3, 4), F).tolist() == [[1, 1, 1]]
    # four servers, Vandermonde in three distinct nonzero points: rows are the powers
    V = vandermonde(4, (2, 3, 4), F)
    assert V.tolist() == [[1, 1, 1], [2, 3, 4], [4, 9, 5], [8, 5, 9]]
    with pytest.raises(ValueError):
        vandermonde(2, (1, 1), F)


def test_nullspace_of_explicit_generators():
    F = PrimeField(101)
    C5 = matrix([[1, 0], [0, 1], [1, 1], [1, 2], [2, 3]], F)
    assert nullspace_systematic(C5) == matrix([[-1, -1, 1, 0, 0], [-1, -2, 0, 1, 0], [-2, -3, 0, 0, 1]], F)
    C4 = matrix([[1, 0], [0, 1], [1, 1], [1, 2]], F)
    H4 = nullspace_systematic(C4)
    assert H4 == matrix([[-1, -1, 1, 0], [-1, -2, 0, 1]], F)
    assert matmul(H4, C4) == zeros(2, 2, F)


def test_nullspace_without_noise_is_identity():
    assert nullspace_systematic(zeros(4, 0, F7)) == identity(4, F7)


def test_mds_examples():
    F = PrimeField(13)
    G = matmul(vandermonde(2, (1, 2, 3, 4, 5), F).T, matrix(np.diag([1, 3]).tolist(), F))
    assert is_mds(G)
    assert not is_mds(matrix([[1, 0], [0, 0], [1, 1]], F))
    assert first_singular_rows(matrix([[1, 0], [0, 0], [1, 1]], F)) == (0, 1)


def test_grs_style_matrix_is_mds():
    F = PrimeField(31)
    lam, phi = (1, 2, 3, 5, 7, 11), (2, 3, 4, 5, 6, 7)
    V = vandermonde(3, lam, F)
    G = matrix([[v * p for v, p in zip(row, phi)] for row in V.tolist()], F)
    assert is_mds(G.T)


def test_mds_limit_guard():
    with pytest.raises(ValueError):
        is_mds(vandermonde(10, range(1, 21), PrimeField(23)).T, limit=10)


def test_block_row_check():
    G = matrix([[1, 0], [0, 1], [1, 1], [2, 2]], F7)
    assert first_singular_block_rows(G, 1, 2) == (3, 4)
    assert first_singular_block_rows(G, 2, 1) == (2,)
    assert first_singular_block_rows(identity(4, F7), 2, 2) is None


def test_full_rank_sampler_trivial_case():
    rng = np.random.default_rng(0)
    assert all(random_full_rank(1, PrimeField(2), rng).tolist() == [[1]] for _ in range(20))


def test_full_rank_sampler_is_uniform_on_gl2_f2():
    rng = np.random.default_rng(21)
    F2 = PrimeField(2)
    draws = Counter(tuple(map(tuple, random_full_rank(2, F2, rng).tolist())) for _ in range(10_000))
    assert len(draws) == 6
    for count in draws.values():
        assert 0.14 <= count / 10_000 <= 0.19


def test_text_roundtrip():
    M = random_matrix(3, 4, PrimeField(DEFAULT_Q), np.random.default_rng(8))
    text = to_text(M)
    assert text.splitlines()[0] == f"3 4 {DEFAULT_Q}"
    assert from_text(text) == M
    with pytest.raises(ShapeError):
        from_text("2 2 7\n1 2 3\n")


# ------------------------------------------------------- fast paths vs. reference

def _reference_block_rows(G, b, t):
    import itertools
    for sub in itertools.combinations(range(G.rows // b), t):
        rows = np.concatenate([np.arange(s * b, (s + 1) * b) for s in sub])
        if rank(Matrix._wrap(G.data[rows], G.field)) < t * b:
            return tuple(s + 1 for s in sub)
    return None


@pytest.mark.parametrize("q", [2, 3, 5])
def test_dual_block_row_check_matches_enumeration(q):
    F = PrimeField(q)
    rng = np.random.default_rng(q)
    for _ in range(150):
        b = int(rng.integers(1, 3))
        n = int(rng.integers(3, 6))
        t = int(rng.integers(1, n))
        G = random_matrix(n * b, t * b, F, rng)
        assert first_singular_block_rows(G, b, t) == _reference_block_rows(G, b, t)


def test_left_nullspace_annihilates():
    F = PrimeField(101)
    G = random_matrix(9, 4, F, np.random.default_rng(3))
    H = left_nullspace(G.data, 101)
    assert H.shape == (5, 9)
    assert not mat_mod(H, G.data, 101).any()


@pytest.mark.parametrize("q", [3, 7, DEFAULT_Q])
def test_block_inverse_agrees_with_elimination(q):
    n = BLOCK_INVERSE_MIN + 41
    M = PrimeField(q).random(np.random.default_rng(q), (n, n))
    try:
        inv = invert_array(M, q)
    except SingularMatrixError:
        assert rank(Matrix._wrap(M, PrimeField(q))) < n
        return
    assert np.array_equal(mat_mod(M, inv, q), np.eye(n, dtype=np.int64))


def test_block_inverse_falls_back_when_leading_block_is_singular():
    n = 2 * BLOCK_INVERSE_MIN
    h = n // 2
    M = np.zeros((n, n), dtype=np.int64)
    M[:h, h:] = np.eye(h, dtype=np.int64)
    M[h:, :h] = np.eye(h, dtype=np.int64)
    assert np.array_equal(invert_array(M, 7), M)
    M[-1] = M[0]
    with pytest.raises(SingularMatrixError):
        invert_array(M, 7)


@pytest.mark.parametrize("q", [2, 65537, DEFAULT_Q])
def test_float_products_are_exact_at_the_extremes(q):
    a = np.full((3, 3000), q - 1, dtype=np.int64)
    b = np.full((3000, 2), q - 1, dtype=np.int64)
    want = (a.astype(object) @ b.astype(object)) % q
    assert np.array_equal(mat_mod(a, b, q).astype(object), want)


def test_compiled_and_object_elimination_agree():
    rng = np.random.default_rng(11)
    for q in (2, 5, 101, DEFAULT_Q):
        for _ in range(100):
            r, c = rng.integers(0, 7, 2)
            A = rng.integers(0, q, (r, c))
            if r > 1 and rng.random() < 0.3:
                A[1] = A[0]
            a1, p1, d1 = _eliminate(A, q)
            a2, p2, d2 = _eliminate(A.astype(object), q)
            assert p1 == p2 and d1 == d2 and np.array_equal(a1, a2.astype(np.int64))
