"""The two MDS codes used by the schemes.

``NoiseCode`` spreads each query row's E noise symbols over the N servers;
its systematic parity check H_S = [-P | I] removes them again. ``GrsCode``
masks the high-E queries and the common randomness of that scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .field import PrimeField
from .linalg import (
    Matrix,
    ShapeError,
    first_singular_rows,
    identity,
    is_invertible,
    matmul,
    nullspace_systematic,
    vandermonde,
    vstack,
    hstack,
    zeros,
)

# Exhaustive MDS checks at build time are skipped above this many subsets.
BUILD_MDS_LIMIT = 20_000


@dataclass(frozen=True)
class NoiseCode:
    C_S: Matrix  # N x E generator
    H_S: Matrix  # (N-E) x N systematic parity check
    P: Matrix  # (N-E) x E, H_S = [-P | I]

    def __post_init__(self):
        n, e = self.C_S.shape
        if self.H_S.shape != (n - e, n) or self.P.shape != (n - e, e):
            raise ShapeError(f"inconsistent noise code shapes {self.C_S.shape}, {self.H_S.shape}, {self.P.shape}")

    @property
    def N(self) -> int:
        return self.C_S.rows

    @property
    def E(self) -> int:
        return self.C_S.cols

    @property
    def field(self) -> PrimeField:
        return self.C_S.field


def noise_code_from_generator(C_S: Matrix) -> NoiseCode:
    """Wrap an explicit N x E generator (used for hand-made fixtures)."""
    H = nullspace_systematic(C_S)
    e = C_S.cols
    P = (-H[:, :e]) if e else zeros(C_S.rows, 0, C_S.field)
    return NoiseCode(C_S, H, P)


def build_noise_code(N: int, E: int, field: PrimeField) -> NoiseCode:
    """Vandermonde noise code on the evaluation points 1..N: C_S[n, j] = n^j."""
    if not 0 <= E < N:
        raise ValueError(f"need 0 <= E < N, got E={E}, N={N}")
    if E == 0:
        return NoiseCode(zeros(N, 0, field), identity(N, field), zeros(N, 0, field))
    if field.q <= N:
        raise ValueError(f"q={field.q} must exceed N={N} for distinct evaluation points")
    C_S = vandermonde(E, range(1, N + 1), field).T
    return noise_code_from_generator(C_S)


@dataclass(frozen=True)
class GrsCode:
    """E x N generator, V^E(lambdas)·diag(phis).

    ``lambdas``/``phis`` are None when the generator was injected directly
    (tiny fields have too few points for a proper GRS code).
    """

    G: Matrix
    lambdas: tuple[int, ...] | None = None
    phis: tuple[int, ...] | None = None

    @property
    def E(self) -> int:
        return self.G.rows

    @property
    def N(self) -> int:
        return self.G.cols

    @property
    def field(self) -> PrimeField:
        return self.G.field

    def decode_matrix(self) -> Matrix:
        """The N x N matrix [G ; 0 I] mapping (X_1..X_E, W_k) to the answers."""
        e, n = self.G.shape
        lower = hstack([zeros(n - e, e, self.field), identity(n - e, self.field)])
        return vstack([self.G, lower])


def build_grs(N: int, E: int, field: PrimeField, lambdas=None, phis=None) -> GrsCode:
    if not 1 <= E <= N:
        raise ValueError(f"need 1 <= E <= N, got E={E}, N={N}")
    if lambdas is None:
        if field.q <= N:
            raise ValueError(f"q={field.q} must exceed N={N} for the default points")
        lambdas = range(1, N + 1)
    if phis is None:
        phis = [1] * N
    lambdas = tuple(int(x) % field.q for x in lambdas)
    phis = tuple(int(x) % field.q for x in phis)
    if len(lambdas) != N or len(phis) != N:
        raise ValueError("need exactly N evaluation points and N column multipliers")
    if len(set(lambdas)) != N:
        raise ValueError(f"evaluation points are not distinct: {lambdas}")
    if any(p == 0 for p in phis):
        raise ValueError(f"column multipliers must be nonzero: {phis}")
    V = vandermonde(E, lambdas, field)
    G = Matrix(np.array(V.tolist(), dtype=object) * np.array(phis, dtype=object), field)
    code = GrsCode(G, lambdas, phis)
    _assert_grs_mds(code)
    return code


def grs_from_generator(G: Matrix) -> GrsCode:
    """Accept any E x N generator whose every E columns are independent."""
    code = GrsCode(G)
    _assert_grs_mds(code)
    return code


def _assert_grs_mds(code: GrsCode) -> None:
    if comb(code.N, code.E) <= BUILD_MDS_LIMIT:
        bad = first_singular_rows(code.G.T)
        if bad is not None:
            raise ValueError(f"generator columns {bad} are dependent; not MDS")
    if not is_invertible(code.decode_matrix()):
        raise ValueError("stacked decode matrix is singular")


def parity_check_annihilates(code: NoiseCode) -> bool:
    return all(v == 0 for row in matmul(code.H_S, code.C_S).tolist() for v in row)
