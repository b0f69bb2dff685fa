"""Retrieval scheme for the regime E >= T.

Each server gets one query vector of length K(N-E). The first E servers see
only GRS-coded uniform masks; the last N-E additionally carry one unit
vector each, so their answers expose one desired symbol under the mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .codes import GrsCode, build_grs
from .linalg import Matrix, invert_array, mat_mod, random_matrix
from .plan import HIGH_E, DerivedCounts, SchemeParams, derive_counts


@dataclass(frozen=True)
class HighSession:
    params: SchemeParams
    counts: DerivedCounts
    k: int
    U: Matrix  # E x K(N-E), row j is the mask vector U_j
    grs: GrsCode
    decoder: Matrix | None = dc_field(default=None, repr=False)

    @property
    def width(self) -> int:
        return self.params.K * (self.params.N - self.params.E)


def default_grs(params: SchemeParams) -> GrsCode:
    if params.q <= max(params.E, params.N):
        raise ValueError(f"q={params.q} must exceed max(E, N)={max(params.E, params.N)}")
    return build_grs(params.N, params.E, params.field)


def open_high_session(params: SchemeParams, k: int, rng, *, grs: GrsCode | None = None,
                      U: Matrix | None = None) -> HighSession:
    if params.E < params.T:
        raise ValueError("the high-E scheme needs E >= T")
    if not 1 <= k <= params.K:
        raise ValueError(f"desired index k={k} outside [1, {params.K}]")
    counts = derive_counts(params)
    grs = default_grs(params) if grs is None else grs
    if grs.G.shape != (params.E, params.N):
        raise ValueError(f"generator shape {grs.G.shape} does not match E x N")
    width = params.K * (params.N - params.E)
    U = random_matrix(params.E, width, params.field, rng) if U is None else U
    if U.shape != (params.E, width):
        raise ValueError(f"mask matrix must be {params.E} x {width}")
    decoder = Matrix._wrap(invert_array(grs.decode_matrix().data, params.q), params.field)
    return HighSession(params, counts, k, U, grs, decoder)


def unit_vector(i: int, k: int, params: SchemeParams) -> np.ndarray:
    """e_i^{[k]}: picks symbol i of message k out of the concatenated database."""
    L = params.N - params.E
    e = np.zeros(params.K * L, dtype=np.int64).astype(params.field.dtype)
    e[(k - 1) * L + (i - 1)] = 1
    return e


def high_queries(session: HighSession) -> np.ndarray:
    """N x K(N-E) array whose row n is Q_n."""
    p = session.params
    Q = mat_mod(session.grs.G.data.T, session.U.data, p.q)
    for i in range(1, p.N - p.E + 1):
        Q[p.E + i - 1] = (Q[p.E + i - 1] + unit_vector(i, session.k, p)) % p.q
    return Q


def high_answer(n: int, Q_n: np.ndarray, messages: np.ndarray, S: np.ndarray, grs: GrsCode) -> int:
    """<Q_n, W> + <G[:, n], S> for the concatenated database W."""
    q = grs.field.q
    W = np.asarray(messages).reshape(-1)
    if Q_n.shape != W.shape:
        raise ValueError(f"query length {Q_n.shape} does not match database {W.shape}")
    if np.asarray(S).shape != (grs.E,):
        raise ValueError(f"need {grs.E} common randomness symbols")
    val = mat_mod(Q_n.reshape(1, -1), W.reshape(-1, 1), q)[0, 0]
    noise = mat_mod(grs.G.data[:, n - 1].reshape(1, -1), np.asarray(S).reshape(-1, 1), q)[0, 0]
    return int((val + noise) % q)


def high_decode(session: HighSession, answers) -> np.ndarray:
    """Solve [X_1..X_E, W_k]·[G ; 0 I] = answers and keep the W_k part."""
    p = session.params
    a = p.field.array(answers).reshape(1, -1)
    if a.shape[1] != p.N:
        raise ValueError(f"need {p.N} answers, got {a.shape[1]}")
    x = mat_mod(a, session.decoder.data, p.q)[0]
    return x[p.E:]


def high_side_symbols(session: HighSession, answers) -> np.ndarray:
    """The masked values X_1..X_E the user also learns (used by the SPIR audit)."""
    p = session.params
    a = p.field.array(answers).reshape(1, -1)
    return mat_mod(a, session.decoder.data, p.q)[0][:p.E]


def is_high(params: SchemeParams) -> bool:
    return params.regime == HIGH_E
