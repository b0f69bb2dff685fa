import itertools
from fractions import Fraction

import numpy as np
import pytest

from etpir.audit import check_query_uniformity
from etpir.codes import build_grs
from etpir.fixtures import tiny_grs
from etpir.linalg import Matrix, zeros
from etpir.plan import SchemeParams, derive_counts
from etpir.scheme import HighScheme, run_retrieval
from etpir.scheme_high import (
    default_grs,
    high_answer,
    high_decode,
    high_queries,
    high_side_symbols,
    open_high_session,
    unit_vector,
)

P = SchemeParams(2, 3, 1, 2, 5)


def _answers(session, W, S):
    Q = high_queries(session)
    return [high_answer(n, Q[n - 1], W, S, session.grs) for n in range(1, session.params.N + 1)]


def test_first_e_servers_see_masks_only():
    rng = np.random.default_rng(0)
    s = open_high_session(P, 2, rng)
    Q = high_queries(s)
    masks = (s.grs.G.data.T @ s.U.data) % P.q
    assert np.array_equal(Q[:2], masks[:2])
    assert np.array_equal((Q[2] - masks[2]) % P.q, unit_vector(1, 2, P))


@pytest.mark.parametrize("k", [1, 2])
def test_zero_mask_exposes_unit_vector(k):
    s = open_high_session(P, k, None, U=zeros(2, 2, P.field))
    Q = high_queries(s)
    assert Q[2].tolist() == unit_vector(1, k, P).tolist()
    assert not Q[:2].any()


def test_unit_vector_layout():
    p = SchemeParams(3, 5, 2, 2, 7)
    assert unit_vector(2, 3, p).tolist() == [0, 0, 0, 0, 0, 0, 0, 1, 0]


def test_zero_database_and_noise_answer_zero():
    s = open_high_session(P, 1, np.random.default_rng(1))
    assert _answers(s, np.zeros((2, 1), dtype=np.int64), np.zeros(2, dtype=np.int64)) == [0, 0, 0]


def test_zero_noise_gives_inner_product():
    rng = np.random.default_rng(2)
    s = open_high_session(P, 1, rng)
    W = P.field.random(rng, (2, 1))
    Q = high_queries(s)
    for n in range(1, 4):
        assert high_answer(n, Q[n - 1], W, np.zeros(2, dtype=np.int64), s.grs) == int(Q[n - 1] @ W.ravel()) % 5


def test_answers_follow_masked_symbol_form():
    rng = np.random.default_rng(3)
    for k in (1, 2):
        s = open_high_session(P, k, rng)
        W = P.field.random(rng, (2, 1))
        S = P.field.random(rng, 2)
        A = _answers(s, W, S)
        X = [(int(s.U.data[j] @ W.ravel()) + int(S[j])) % 5 for j in range(2)]
        G = s.grs.G.data
        want = [(X[0] * G[0, n] + X[1] * G[1, n]) % 5 for n in range(3)]
        want[2] = (want[2] + int(W[k - 1, 0])) % 5
        assert A == want
        assert high_side_symbols(s, A).tolist() == X


def test_roundtrip_random():
    rng = np.random.default_rng(4)
    for _ in range(200):
        k = int(rng.integers(1, 3))
        s = open_high_session(P, k, rng)
        W = P.field.random(rng, (2, 1))
        S = P.field.random(rng, 2)
        assert high_decode(s, _answers(s, W, S)).tolist() == W[k - 1].tolist()


def test_rate_for_four_servers():
    p = SchemeParams(3, 4, 2, 2, 7)
    scheme = HighScheme(p)
    rng = np.random.default_rng(5)
    W = p.field.random(rng, (3, 2))
    r = run_retrieval(scheme, scheme.pad(W), 3, rng)
    assert r.download == 4 and len(r.decoded) == 2
    assert r.decoded.tolist() == W[2].tolist()
    assert Fraction(len(r.decoded), r.download) == Fraction(1, 2) == p.capacity()


def test_zero_error_over_every_mask_gf3():
    p = SchemeParams(2, 3, 1, 2, 3)
    grs = tiny_grs(3)
    rng = np.random.default_rng(6)
    for u in itertools.product(range(3), repeat=4):
        U = Matrix(np.array(u, dtype=np.int64).reshape(2, 2), p.field)
        for k in (1, 2):
            s = open_high_session(p, k, None, grs=grs, U=U)
            W = p.field.random(rng, (2, 1))
            S = p.field.random(rng, 2)
            assert high_decode(s, _answers(s, W, S)).tolist() == W[k - 1].tolist()


def test_any_e_queries_are_jointly_uniform_gf3():
    p = SchemeParams(2, 3, 2, 2, 3)
    grs = tiny_grs(3)
    for subset in itertools.combinations((1, 2, 3), 2):
        for k in (1, 2):
            assert check_query_uniformity(p, grs, subset, k).passed


def test_sampled_query_marginals_gf3():
    p = SchemeParams(2, 3, 1, 2, 3)
    grs = tiny_grs(3)
    rng = np.random.default_rng(7)
    counts = np.zeros((3, 2, 3), dtype=np.int64)
    for _ in range(10_000):
        Q = high_queries(open_high_session(p, 1, rng, grs=grs))
        for n in range(3):
            for j in range(2):
                counts[n, j, Q[n, j]] += 1
    freq = counts / 10_000
    assert np.all((freq > 0.31) & (freq < 0.36))


def test_regime_and_index_errors():
    with pytest.raises(ValueError):
        open_high_session(SchemeParams(2, 3, 2, 1, 5), 1, None)
    with pytest.raises(ValueError):
        open_high_session(P, 3, None)
    with pytest.raises(ValueError):
        default_grs(SchemeParams(2, 3, 1, 2, 3))


def test_shape_errors():
    s = open_high_session(P, 1, np.random.default_rng(8))
    Q = high_queries(s)
    with pytest.raises(ValueError):
        high_answer(1, Q[0], np.zeros((3, 1), dtype=np.int64), np.zeros(2, dtype=np.int64), s.grs)
    with pytest.raises(ValueError):
        high_answer(1, Q[0], np.zeros((2, 1), dtype=np.int64), np.zeros(1, dtype=np.int64), s.grs)
    with pytest.raises(ValueError):
        high_decode(s, [0, 0])


def test_grs_mismatch_rejected():
    with pytest.raises(ValueError):
        open_high_session(P, 1, None, grs=build_grs(4, 2, P.field))


def test_counts():
    c = derive_counts(P)
    assert (c.L, c.D_n, c.noise_total) == (1, 1, 2)
