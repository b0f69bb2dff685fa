"""One interface over both regimes.

Queries are always an (N, D, K, width) coefficient array, stored messages a
(K, width) array and common randomness a flat vector, so the audit and the
network layer never need to know which construction is running.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scheme_high as high
from . import scheme_low as low
from .codes import GrsCode
from .plan import HIGH_E, LOW_E, SchemeParams, build_index_map, derive_counts


class LowScheme:
    regime = LOW_E

    def __init__(self, params: SchemeParams, *, bundle: low.PrecodingBundle | None = None,
                 rng=None, retry: bool = False, interference: str = "auto"):
        if params.regime != LOW_E:
            raise ValueError("LowScheme needs E < T")
        self.params = params
        self.counts = derive_counts(params)
        self.index_map = build_index_map(self.counts)
        self.rng = np.random.default_rng() if rng is None else rng
        self.bundle = bundle or low.build_precoding(params, self.counts, self.rng, interference=interference)
        self.retry = retry

    @property
    def field(self):
        return self.params.field

    @property
    def width(self) -> int:
        return self.counts.L_ext

    @property
    def D(self) -> int:
        return self.counts.D_n

    @property
    def s_len(self) -> int:
        return self.counts.D_n * self.params.E

    @property
    def mode(self) -> str:
        return "retry" if self.retry else "faithful"

    def pad(self, W) -> np.ndarray:
        return low.pad_messages(W, self.counts, self.field)

    def sample_randomness(self, rng) -> np.ndarray:
        return np.asarray(self.field.random(rng, self.s_len))

    def open(self, k: int, rng=None):
        session, _ = low.open_session(self.params, k, rng or self.rng, bundle=self.bundle, retry=self.retry)
        return session

    def queries(self, session) -> np.ndarray:
        return low.make_queries(session).coefficients

    def answer(self, n: int, query: np.ndarray, stored: np.ndarray, S) -> np.ndarray:
        S_mat = low.CommonRandomness(_as_matrix(S, self.D, self.params.E, self.field))
        return low.answer_query(n, query, stored, S_mat, self.bundle.noise.C_S)

    def decode(self, session, answers) -> np.ndarray:
        return low.decode(session, answers)

    def noise_map(self, n: int) -> np.ndarray:
        return low.noise_map(n, self.counts, self.bundle.noise.C_S)

    def privacy_certified(self, session) -> bool:
        return session.privacy_certified


class HighScheme:
    regime = HIGH_E
    retry = False
    mode = "faithful"

    def __init__(self, params: SchemeParams, *, grs: GrsCode | None = None, rng=None):
        if params.regime != HIGH_E:
            raise ValueError("HighScheme needs E >= T")
        self.params = params
        self.counts = derive_counts(params)
        self.grs = high.default_grs(params) if grs is None else grs
        self.rng = np.random.default_rng() if rng is None else rng

    @property
    def field(self):
        return self.params.field

    @property
    def width(self) -> int:
        return self.params.N - self.params.E

    @property
    def D(self) -> int:
        return 1

    @property
    def s_len(self) -> int:
        return self.params.E

    def pad(self, W) -> np.ndarray:
        W = self.field.array(W)
        if W.shape != (self.params.K, self.width):
            raise ValueError(f"messages must be {self.params.K} x {self.width}, got {W.shape}")
        return W

    def sample_randomness(self, rng) -> np.ndarray:
        return np.asarray(self.field.random(rng, self.s_len))

    def open(self, k: int, rng=None):
        return high.open_high_session(self.params, k, rng or self.rng, grs=self.grs)

    def queries(self, session) -> np.ndarray:
        p = self.params
        return high.high_queries(session).reshape(p.N, 1, p.K, self.width)

    def answer(self, n: int, query: np.ndarray, stored: np.ndarray, S) -> np.ndarray:
        val = high.high_answer(n, query.reshape(-1), stored, np.asarray(S), self.grs)
        return np.array([val], dtype=np.int64).astype(self.field.dtype)

    def decode(self, session, answers) -> np.ndarray:
        return high.high_decode(session, np.asarray(answers).reshape(-1))

    def noise_map(self, n: int) -> np.ndarray:
        return self.grs.G.data[:, n - 1].reshape(1, -1).copy()

    def privacy_certified(self, session) -> bool:
        return True


def _as_matrix(S, rows: int, cols: int, field):
    from .linalg import Matrix

    return Matrix._wrap(field.array(np.asarray(S)).reshape(rows, cols), field)


def build_scheme(params: SchemeParams, rng=None, *, retry: bool = False, interference: str = "auto",
                 bundle=None, grs=None):
    """The scheme matching the regime of ``params``."""
    if params.regime == LOW_E:
        return LowScheme(params, bundle=bundle, rng=rng, retry=retry, interference=interference)
    return HighScheme(params, grs=grs, rng=rng)


@dataclass(frozen=True)
class Retrieval:
    k: int
    decoded: np.ndarray | None
    answers: np.ndarray
    queries: np.ndarray
    session: object
    error: str | None = None

    @property
    def download(self) -> int:
        return int(self.answers.size)


def run_retrieval(scheme, stored: np.ndarray, k: int, rng, S=None) -> Retrieval:
    """Query every server, collect the answers and decode, all in process."""
    session = scheme.open(k, rng)
    Q = scheme.queries(session)
    S = scheme.sample_randomness(rng) if S is None else S
    A = np.stack([scheme.answer(n, Q[n - 1], stored, S) for n in range(1, scheme.params.N + 1)])
    try:
        decoded = scheme.decode(session, A)
        return Retrieval(k, decoded, A, Q, session)
    except low.DecodeSingular as exc:
        return Retrieval(k, None, A, Q, session, str(exc))
