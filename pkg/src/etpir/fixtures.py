"""Hand-specified small instances with explicit precoding matrices.

Each function returns the literal matrices of a worked instance so tests and
demos can compare the general construction against fixed numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import NoiseCode, noise_code_from_generator
from .linalg import Matrix, hstack, identity, invert, kron, matmul, matrix, random_matrix, vandermonde, vstack
from .plan import SchemeParams
from .scheme_low import PrecodingBundle, bundle_from_blocks


def row_major_desired(G1: Matrix, L_n: int) -> Matrix:
    """Desired precoding where slot j of server n uses U rows (j-1)(N-E)+1 .. j(N-E).

    Row (n-1)L_n + j, column (j-1)w + m holds G1[n, m]; w = G1.cols. This is
    ``kron(G1, I)`` with the columns regrouped by slot.
    """
    N, w = G1.shape
    F = G1.field
    out = np.zeros((N * L_n, w * L_n), dtype=np.int64).astype(F.dtype)
    for n in range(N):
        for j in range(L_n):
            out[n * L_n + j, j * w:(j + 1) * w] = G1.data[n]
    return Matrix._wrap(out, F)


# --------------------------------------------------------- K=2, N=3, T=2, E=1

def elemental(q: int = 3) -> PrecodingBundle:
    """Repetition noise code, G_l = [[1,0],[0,1],[1,1]] and M = [[1,1],[1,2]].

    Server 3 answers a1+a3+r, b3+(b4-b2)+s and (a2+a4)+(b3-b1)+(2b4-b2)+t.
    """
    p = SchemeParams(2, 3, 2, 1, q)
    F = p.field
    noise = noise_code_from_generator(matrix([[1], [1], [1]], F))
    G_l = matrix([[1, 0], [0, 1], [1, 1]], F)
    M = matrix([[1, 1], [1, 2]], F)
    return bundle_from_blocks(p, noise, kron(G_l, identity(2, F)), [M])


# --------------------------------------------------------- K=2, N=4, T=2, E=1

@dataclass(frozen=True)
class FourServer:
    bundle: PrecodingBundle
    G1: Matrix  # 4 x 3 Vandermonde in phi
    M1: Matrix
    M2: Matrix

    def six_submatrices(self) -> list[tuple[str, Matrix]]:
        """The 6 x 6 coefficient blocks that each pair of servers sees of W_2."""
        F = self.M1.field
        I, Z = identity(3, F), Matrix._wrap(np.zeros((3, 3), dtype=F.dtype), F)
        rows = {1: hstack([I, Z]), 2: hstack([Z, I]),
                3: hstack([I - self.M1, self.M1]), 4: hstack([I - self.M2, self.M2])}
        return [(f"servers {a},{b}", vstack([rows[a], rows[b]]))
                for a in range(1, 5) for b in range(a + 1, 5)]


def interference_pair(psis, F) -> tuple[Matrix, Matrix]:
    """M1 = V diag(psi^3) V^-1 and M2 = V diag(psi^6) V^-1 with V = V^3(psi)."""
    V = vandermonde(3, psis, F)
    Vi = invert(V)
    d3 = Matrix(np.diag([pow(int(x), 3, F.q) for x in psis]).astype(object), F)
    d6 = Matrix(np.diag([pow(int(x), 6, F.q) for x in psis]).astype(object), F)
    return matmul(matmul(V, d3), Vi), matmul(matmul(V, d6), Vi)


def admissible_psi(psis, q: int) -> bool:
    vals = [int(x) % q for x in psis]
    return len(set(vals)) == len(vals) and all(v != 0 and pow(v, 6, q) != 1 for v in vals)


def four_server(q: int = 11, phis=(2, 3, 4), psis=(2, 3, 5)) -> FourServer:
    if not admissible_psi(psis, q):
        raise ValueError(f"psi values {psis} must be distinct, nonzero and not 6th roots of unity mod {q}")
    if len({int(x) % q for x in phis}) != 3 or any(int(x) % q in (0, 1) for x in phis):
        raise ValueError(f"phi values {phis} must be distinct and outside {{0, 1}}")
    p = SchemeParams(2, 4, 2, 1, q)
    F = p.field
    noise = noise_code_from_generator(matrix([[1]] * 4, F))
    G1 = vandermonde(4, phis, F)
    M1, M2 = interference_pair(psis, F)
    bundle = bundle_from_blocks(p, noise, row_major_desired(G1, 3), [vstack([M1, M2])])
    return FourServer(bundle, G1, M1, M2)


# --------------------------------------------------------- K=2, N=5, T=3, E=2

@dataclass(frozen=True)
class ExplicitCodes:
    noise: NoiseCode
    H_S: Matrix  # as printed, with signed entries reduced mod q
    G1: Matrix


def two_eavesdropper_codes(q: int = 101) -> ExplicitCodes:
    F = SchemeParams(2, 5, 3, 2, q).field
    C_S = matrix([[1, 0], [0, 1], [1, 1], [1, 2], [2, 3]], F)
    H_S = matrix([[-1, -1, 1, 0, 0], [-1, -2, 0, 1, 0], [-2, -3, 0, 0, 1]], F)
    G1 = matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 3, 2], [2, 3, 1]], F)
    return ExplicitCodes(noise_code_from_generator(C_S), H_S, G1)


def two_eavesdropper(q: int = 2147483647, rng=None) -> PrecodingBundle:
    """Explicit noise code and G1, with M1, M2 drawn uniformly."""
    codes = two_eavesdropper_codes(q)
    p = SchemeParams(2, 5, 3, 2, q)
    rng = np.random.default_rng() if rng is None else rng
    M = random_matrix(6, 3, p.field, rng)
    return bundle_from_blocks(p, codes.noise, row_major_desired(codes.G1, 3), [M])


# --------------------------------------------------------- K=2, N=4, T=3, E=2

@dataclass(frozen=True)
class DependentCodes:
    noise: NoiseCode
    H_S: Matrix
    G1: Matrix
    M: Matrix

    def G2(self) -> Matrix:
        F = self.M.field
        I = identity(2, F)
        return vstack([identity(6, F), hstack([I - self.M, I.scale(2) - self.M, self.M])])


def dependent_codes(q: int = 101, psis=(3, 4)) -> DependentCodes:
    F = SchemeParams(2, 4, 3, 2, q).field
    a, b = (int(x) % q for x in psis)
    if a == b or any(pow(x, 2, q) in (0, 1, 2) for x in (a, b)):
        raise ValueError(f"psi values {psis} need distinct squares outside {{0, 1, 2}} mod {q}")
    C_S = matrix([[1, 0], [0, 1], [1, 1], [1, 2]], F)
    H_S = matrix([[-1, -1, 1, 0], [-1, -2, 0, 1]], F)
    G1 = matrix([[1, 0], [0, 1], [2, 2], [2, 4]], F)
    V = vandermonde(2, (a, b), F)
    D = Matrix(np.diag([a * a % q, b * b % q]).astype(object), F)
    M = matmul(matmul(V, D), invert(V))
    return DependentCodes(noise_code_from_generator(C_S), H_S, G1, M)


def dependent(q: int = 2147483647, rng=None, psis=(3, 4)) -> PrecodingBundle:
    """Explicit noise code and M, with the 8 x 6 desired precoding drawn uniformly."""
    codes = dependent_codes(q, psis)
    p = SchemeParams(2, 4, 3, 2, q)
    rng = np.random.default_rng() if rng is None else rng
    G = random_matrix(8, 6, p.field, rng)
    return bundle_from_blocks(p, codes.noise, G, [codes.M])


# ------------------------------------------------------------ tiny HighE codes

def tiny_grs(q: int):
    """A 2 x 3 MDS generator for fields too small for three distinct nonzero points.

    Over GF(2) this is the parity code [[1,0,1],[0,1,1]]; over GF(3) the
    points 0, 1, 2 give a proper GRS code.
    """
    from .codes import build_grs, grs_from_generator
    from .field import PrimeField

    F = PrimeField(q)
    if q == 2:
        return grs_from_generator(matrix([[1, 0, 1], [0, 1, 1]], F))
    return build_grs(3, 2, F, lambdas=(0, 1, 2))
