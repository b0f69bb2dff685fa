"""Machine checks for security, privacy, correctness, rate and MDS claims.

Security is decided by a rank test on the linear map from (W, S) to the
answers a server subset sees. LowE privacy is certified through invertibility
of the precoding submatrices any T servers observe. HighE privacy (and the
rank test itself) can be cross-checked by enumerating every state of a tiny
field and comparing exact counts.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from collections import Counter
from dataclasses import asdict, dataclass, field as dc_field
from fractions import Fraction
from math import comb

import numpy as np

from .codes import GrsCode
from .linalg import Matrix, array_rank, first_singular_rows, mat_mod
from .plan import HIGH_E, LOW_E, SchemeParams, capacity, rho_min
from .scheme import build_scheme, run_retrieval
from .scheme_low import PrecodingBundle

SCHEMA = "report_v1"
EXHAUSTIVE_GUARD = 10**8
MDS_EXHAUSTIVE_LIMIT = 20_000


def fingerprint(arr) -> str:
    data = np.ascontiguousarray(np.asarray(arr, dtype=object).astype(str))
    h = hashlib.sha256(repr(data.shape).encode())
    h.update("|".join(data.reshape(-1).tolist()).encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class SubsetVerdict:
    check: str
    subset: tuple[int, ...]
    passed: bool
    witness: dict = dc_field(default_factory=dict)
    fingerprint: str | None = None

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class LinearView:
    """Coefficients of the message and noise symbols in one subset's answers."""

    M_W: np.ndarray
    M_S: np.ndarray
    subset: tuple[int, ...]
    q: int

    def __post_init__(self):
        if self.M_W.shape[0] != self.M_S.shape[0]:
            raise ValueError("message and noise maps must have the same number of rows")

    def joint_rank(self) -> int:
        return array_rank(np.hstack([self.M_W, self.M_S]), self.q)

    def noise_rank(self) -> int:
        return array_rank(self.M_S, self.q)


# ---------------------------------------------------------------- security

def linear_view(scheme, queries: np.ndarray, subset, *, strip_noise: bool = False) -> LinearView:
    """The map (W, S) -> answers of ``subset``; padding columns are dropped."""
    K, L = scheme.params.K, scheme.counts.L
    rows_w, rows_s = [], []
    for n in subset:
        Qn = np.asarray(queries[n - 1])[:, :, :L] if scheme.regime == LOW_E else np.asarray(queries[n - 1])
        rows_w.append(Qn.reshape(Qn.shape[0], -1))
        Sn = scheme.noise_map(n)
        rows_s.append(np.zeros_like(Sn) if strip_noise else Sn)
    if not subset:
        empty = np.zeros((0, K * L), dtype=np.int64)
        return LinearView(empty, np.zeros((0, scheme.s_len), dtype=np.int64), (), scheme.params.q)
    return LinearView(np.vstack(rows_w), np.vstack(rows_s), tuple(subset), scheme.params.q)


def check_security(scheme, queries: np.ndarray, subset, *, strip_noise: bool = False) -> SubsetVerdict:
    """Pass iff rank([M_W | M_S]) == rank(M_S), i.e. the answers leak nothing about W."""
    view = linear_view(scheme, queries, subset, strip_noise=strip_noise)
    if view.M_W.size == 0 and view.M_S.size == 0:
        return SubsetVerdict("security", view.subset, True, {"joint_rank": 0, "noise_rank": 0})
    noise = view.noise_rank()
    # A noise map of full row rank already spans every possible answer vector.
    joint = noise if noise == view.M_S.shape[0] else view.joint_rank()
    passed = joint == noise
    witness = {"joint_rank": joint, "noise_rank": noise, "gap": joint - noise}
    fp = None if passed else fingerprint(np.hstack([view.M_W, view.M_S]))
    return SubsetVerdict("security", view.subset, passed, witness, fp)


def check_security_all(scheme, queries: np.ndarray, *, strip_noise: bool = False) -> list[SubsetVerdict]:
    N, E = scheme.params.N, scheme.params.E
    return [check_security(scheme, queries, s, strip_noise=strip_noise)
            for s in itertools.combinations(range(1, N + 1), E)]


def _all_vectors(q: int, length: int) -> np.ndarray:
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(q), repeat=length)), dtype=np.int64)


@dataclass(frozen=True)
class LeakageResult:
    subset: tuple[int, ...]
    states: int
    independent: bool
    mutual_information: float  # in q-ary units, for display only

    @property
    def passed(self) -> bool:
        return self.independent


def exhaustive_leakage(scheme, queries: np.ndarray, subset, *, strip_noise: bool = False,
                       guard: int = EXHAUSTIVE_GUARD) -> LeakageResult:
    """Enumerate every (W, S) and decide I(W; A_subset) = 0 from exact counts.

    W ranges over the L real symbols of each message; dummies stay zero.
    """
    view = linear_view(scheme, queries, subset, strip_noise=strip_noise)
    q = view.q
    nw, ns = view.M_W.shape[1], view.M_S.shape[1]
    states = q ** (nw + ns)
    if states > guard:
        raise ValueError(f"{states} states exceed the enumeration guard {guard}")
    Ws, Ss = _all_vectors(q, nw), _all_vectors(q, ns)
    noise_part = mat_mod(Ss, view.M_S.T.astype(np.int64), q) if ns else np.zeros((1, view.M_W.shape[0]), np.int64)
    signal = mat_mod(Ws, view.M_W.T.astype(np.int64), q)
    per_w = []
    marginal: Counter = Counter()
    for w in range(len(Ws)):
        A = (signal[w] + noise_part) % q
        c = Counter(map(bytes, A.astype(np.uint8 if q < 256 else np.int64)))
        per_w.append(c)
        marginal.update(c)
    # I(W; A) = 0 iff the conditional law of A is the same for every w.
    independent = all(c == per_w[0] for c in per_w)
    return LeakageResult(view.subset, states, independent, _mutual_information(per_w, marginal, q))


def _mutual_information(per_w, marginal: Counter, q: int) -> float:
    total = sum(marginal.values())
    n_w = len(per_w)
    mi = 0.0
    for c in per_w:
        cw = sum(c.values())
        for a, n in c.items():
            mi += (n / total) * math.log((n * total) / (cw * marginal[a]), q)
    return max(mi, 0.0) if n_w else 0.0


# ----------------------------------------------------------------- privacy

def check_privacy_structural(bundle: PrecodingBundle) -> list[SubsetVerdict]:
    """Condition 1 on the desired precoding and condition 2' on every layer.

    Condition 1: the T·L_n desired rows of any T servers have full row rank.
    Condition 2': the T block rows of G_tilde held by any T servers are invertible.
    """
    p, counts = bundle.params, bundle.counts
    out = []
    subsets = list(itertools.combinations(range(1, p.N + 1), p.T))
    G = bundle.G_desired
    for s in subsets:
        rows = np.concatenate([np.arange((n - 1) * counts.L_n, n * counts.L_n) for n in s])
        sub = G.data[rows]
        r = array_rank(sub, p.q)
        ok = r == len(rows)
        out.append(SubsetVerdict("privacy_condition_1", s, ok, {"rank": r, "rows": len(rows)},
                                 None if ok else fingerprint(sub)))
    for lp in bundle.G_pairs:
        b = lp.block
        for s in subsets:
            rows = np.concatenate([np.arange((n - 1) * b, n * b) for n in s])
            sub = lp.G_tilde.data[rows]
            r = array_rank(sub, p.q)
            ok = r == len(rows)
            out.append(SubsetVerdict(f"privacy_condition_2'_layer_{lp.layer}", s, ok,
                                     {"rank": r, "rows": len(rows)}, None if ok else fingerprint(sub)))
    return out


def check_query_privacy(scheme, queries: np.ndarray) -> list[SubsetVerdict]:
    """Per T-subset and message, the T·L_n coefficient rows any T servers see are independent.

    LowE only: HighE queries are uniformly masked, so their rank is random.
    """
    p = scheme.params
    if scheme.regime != LOW_E:
        raise ValueError("query rank privacy applies to the LowE scheme")
    expected = p.T * scheme.counts.L_n
    out = []
    for s in itertools.combinations(range(1, p.N + 1), p.T):
        for k in range(1, p.K + 1):
            rows = np.vstack([np.asarray(queries[n - 1])[:, k - 1, :] for n in s])
            nonzero = rows[np.any(rows != 0, axis=1)]
            r = array_rank(nonzero, p.q) if len(nonzero) else 0
            ok = r == expected and len(nonzero) == expected
            out.append(SubsetVerdict(f"query_rank_message_{k}", s, ok,
                                     {"rank": r, "rows": int(len(nonzero)), "expected": expected},
                                     None if ok else fingerprint(rows)))
    return out


def check_high_structural(grs: GrsCode, T: int) -> list[SubsetVerdict]:
    """Any T columns of the GRS generator are independent, so Q_T is uniform for every k."""
    out = []
    for s in itertools.combinations(range(1, grs.N + 1), T):
        sub = grs.G.data[:, [n - 1 for n in s]]
        r = array_rank(sub, grs.field.q)
        out.append(SubsetVerdict("grs_columns_independent", s, r == T, {"rank": r},
                                 None if r == T else fingerprint(sub)))
    return out


def _high_views(params: SchemeParams, grs: GrsCode, k: int, subset, *, corrupt: bool = False):
    """Yield (Q_T, A_T, W, S) for every U, W, S over a tiny field, as byte keys."""
    q, E, N, K = params.q, params.E, params.N, params.K
    width = K * (N - E)
    G = grs.G.data.astype(np.int64)
    Ws, Ss = _all_vectors(q, width), _all_vectors(q, E)
    cols = [n - 1 for n in subset]
    unit = np.zeros((N, width), dtype=np.int64)
    for i in range(1, N - E + 1):
        unit[E + i - 1, (k - 1) * (N - E) + i - 1] = 1
    noise = (Ss @ G[:, cols]) % q  # (|S|, |T|)
    for u in _all_vectors(q, E * width):
        U = u.reshape(E, width)
        Q = (G.T @ U + unit) % q
        if corrupt:
            Q[0] = 0
            Q[0, (k - 1) * (N - E)] = 1
        QT = Q[cols]
        signal = (Ws @ QT.T) % q  # (|W|, |T|)
        A = (signal[:, None, :] + noise[None, :, :]) % q
        qkey = QT.tobytes()
        for wi in range(len(Ws)):
            wkey = Ws[wi].tobytes()
            for si in range(len(Ss)):
                yield qkey, A[wi, si].tobytes(), wkey, Ss[si].tobytes()


@dataclass(frozen=True)
class DistributionVerdict:
    check: str
    subset: tuple[int, ...]
    states: int
    passed: bool
    witness: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subset"] = list(self.subset)
        return d


def _high_state_count(params: SchemeParams) -> int:
    width = params.K * (params.N - params.E)
    return params.q ** (params.E * width + width + params.E)


def check_privacy_exhaustive(params: SchemeParams, grs: GrsCode, subset, *, corrupt: bool = False,
                             guard: int = EXHAUSTIVE_GUARD) -> DistributionVerdict:
    """Compare the exact law of (Q_T, A_T, W, S) across every desired index k."""
    states = _high_state_count(params)
    if states > guard:
        raise ValueError(f"{states} states per index exceed the enumeration guard {guard}")
    laws = [Counter(_high_views(params, grs, k, subset, corrupt=corrupt)) for k in range(1, params.K + 1)]
    differing = [k for k in range(2, params.K + 1) if laws[k - 1] != laws[0]]
    return DistributionVerdict("privacy_exhaustive", tuple(subset), states * params.K, not differing,
                               {"differs_from_k1": differing, "support": len(laws[0])})


def check_query_uniformity(params: SchemeParams, grs: GrsCode, subset, k: int = 1) -> DistributionVerdict:
    """Q_subset alone, over all masks U, hits every vector equally often."""
    q, E, N, K = params.q, params.E, params.N, params.K
    width = K * (N - E)
    if q ** (E * width) > EXHAUSTIVE_GUARD:
        raise ValueError("mask space too large to enumerate")
    G = grs.G.data.astype(np.int64)
    cols = [n - 1 for n in subset]
    unit = np.zeros((N, width), dtype=np.int64)
    for i in range(1, N - E + 1):
        unit[E + i - 1, (k - 1) * (N - E) + i - 1] = 1
    law = Counter(((G.T @ u.reshape(E, width) + unit) % q)[cols].tobytes() for u in _all_vectors(q, E * width))
    target = q ** (len(cols) * width)
    counts = set(law.values())
    passed = len(law) == target and len(counts) == 1
    return DistributionVerdict("query_uniformity", tuple(subset), q ** (E * width), passed,
                               {"support": len(law), "expected_support": target})


def check_spir(params: SchemeParams, grs: GrsCode, k: int) -> DistributionVerdict:
    """For every mask U, the answers depend on the database only through W_k."""
    q, E, N, K = params.q, params.E, params.N, params.K
    L = N - E
    width = K * L
    states = _high_state_count(params)
    if states > EXHAUSTIVE_GUARD:
        raise ValueError("state space too large to enumerate")
    G = grs.G.data.astype(np.int64)
    Ws, Ss = _all_vectors(q, width), _all_vectors(q, E)
    unit = np.zeros((N, width), dtype=np.int64)
    for i in range(1, L + 1):
        unit[E + i - 1, (k - 1) * L + i - 1] = 1
    noise = (Ss @ G) % q
    bad = 0
    for u in _all_vectors(q, E * width):
        Q = (G.T @ u.reshape(E, width) + unit) % q
        signal = (Ws @ Q.T) % q
        groups: dict[bytes, Counter] = {}
        for wi in range(len(Ws)):
            law = Counter(map(bytes, (signal[wi][None, :] + noise) % q))
            key = Ws[wi, (k - 1) * L:k * L].tobytes()
            if key in groups and groups[key] != law:
                bad += 1
            groups.setdefault(key, law)
    return DistributionVerdict("spir", (), states, bad == 0, {"k": k, "violations": bad})


# ------------------------------------------------------------- correctness

@dataclass(frozen=True)
class CorrectnessStats:
    trials: int
    successes: int
    decode_failures: int
    wrong: int
    zero_error_expected: bool
    mode: str

    @property
    def failures(self) -> int:
        return self.decode_failures + self.wrong

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials

    @property
    def passed(self) -> bool:
        return self.failures == 0 if self.zero_error_expected else self.wrong == 0


def zero_error_expected(params: SchemeParams, retry: bool = False) -> bool:
    return params.regime == HIGH_E or params.T <= params.N - params.E or retry


def check_correctness(scheme, trials: int, rng) -> CorrectnessStats:
    if trials < 1:
        raise ValueError("need at least one trial")
    p = scheme.params
    ok = fail = wrong = 0
    for _ in range(trials):
        W = p.field.random(rng, (p.K, scheme.counts.L))
        stored = scheme.pad(W)
        k = int(rng.integers(1, p.K + 1))
        r = run_retrieval(scheme, stored, k, rng)
        if r.decoded is None:
            fail += 1
        elif np.array_equal(np.asarray(r.decoded, dtype=object) % p.q, np.asarray(W[k - 1], dtype=object) % p.q):
            ok += 1
        else:
            wrong += 1
    return CorrectnessStats(trials, ok, fail, wrong, zero_error_expected(p, scheme.retry), scheme.mode)


# ---------------------------------------------------------- rate and rho

def audit_rate_and_rho(scheme) -> dict:
    p, c = scheme.params, scheme.counts
    rate = Fraction(c.L, p.N * c.D_n)
    cap = capacity(*p.as_tuple())
    rho = Fraction(c.noise_total, c.L)
    rmin = rho_min(*p.as_tuple())
    return {
        "rate": str(rate), "capacity": str(cap), "rate_equals_capacity": rate == cap,
        "rate_within_capacity": rate <= cap,
        "rho": str(rho), "rho_min": str(rmin), "rho_equals_min": rho == rmin, "rho_at_least_min": rho >= rmin,
        "noise_symbols": c.noise_total, "download": p.N * c.D_n, "L": c.L,
    }


# ------------------------------------------------------------------- MDS

@dataclass(frozen=True)
class MdsVerdict:
    name: str
    shape: tuple[int, int]
    method: str  # "exhaustive", "certificate" or "skipped"
    passed: bool
    subsets: int
    witness: tuple[int, ...] | None = None
    fingerprint: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        d["witness"] = list(self.witness) if self.witness is not None else None
        return d


def certify_mds(name: str, G: Matrix, *, limit: int = MDS_EXHAUSTIVE_LIMIT, certificate=None) -> MdsVerdict:
    """Every maximal square row-submatrix of the tall matrix G is invertible.

    Enumerates when C(rows, cols) <= ``limit``. Otherwise a Cauchy certificate
    (distinct points, exact entry match) is verified instead, or the matrix is
    reported as skipped.
    """
    m, k = G.shape
    subsets = comb(m, k)
    if subsets <= limit:
        bad = first_singular_rows(G)
        return MdsVerdict(name, G.shape, "exhaustive", bad is None, subsets, bad,
                          None if bad is None else G.fingerprint())
    if certificate is not None:
        lower = Matrix._wrap(G.data[k:], G.field)
        top_ok = np.array_equal(np.asarray(G.data[:k], dtype=object),
                                np.eye(k, dtype=np.int64).astype(object))
        ok = bool(top_ok and certificate.verify(lower))
        return MdsVerdict(name, G.shape, "certificate", ok, subsets, None, None if ok else G.fingerprint())
    return MdsVerdict(name, G.shape, "skipped", False, subsets)


def certify_scheme_codes(scheme, *, limit: int = MDS_EXHAUSTIVE_LIMIT) -> list[MdsVerdict]:
    p = scheme.params
    if scheme.regime == HIGH_E:
        return [certify_mds("G_grs^T", scheme.grs.G.T, limit=limit)]
    out = []
    if p.E:
        out.append(certify_mds("C_S", scheme.bundle.noise.C_S, limit=limit))
    for lp in scheme.bundle.G_pairs:
        out.append(certify_mds(f"M_interference_layer_{lp.layer}", lp.M_interference, limit=limit,
                               certificate=lp.certificate))
    return out


# ------------------------------------------------------------------ report

@dataclass
class AuditReport:
    params: SchemeParams
    regime: str
    mode: str
    privacy_certified: bool
    security: list[SubsetVerdict]
    privacy_structural: list[SubsetVerdict]
    correctness: CorrectnessStats | None
    rate: dict
    mds: list[MdsVerdict] = dc_field(default_factory=list)
    privacy_exhaustive: list[DistributionVerdict] | None = None

    @property
    def passed(self) -> bool:
        checks = [v.passed for v in self.security + self.privacy_structural]
        checks += [v.passed for v in self.mds if v.method != "skipped"]
        checks += [self.rate["rate_equals_capacity"], self.rate["rho_equals_min"]]
        if self.correctness is not None:
            checks.append(self.correctness.passed)
        if self.privacy_exhaustive:
            checks += [v.passed for v in self.privacy_exhaustive]
        return all(checks)

    def failures(self) -> list[dict]:
        items = [v.to_dict() for v in self.security + self.privacy_structural if not v.passed]
        items += [v.to_dict() for v in self.mds if not v.passed and v.method != "skipped"]
        items += [v.to_dict() for v in self.privacy_exhaustive or [] if not v.passed]
        return items

    def to_dict(self) -> dict:
        K, N, T, E = self.params.as_tuple()
        corr = None
        if self.correctness is not None:
            c = self.correctness
            corr = {"trials": c.trials, "successes": c.successes, "decode_failures": c.decode_failures,
                    "wrong": c.wrong, "failure_rate": c.failure_rate,
                    "zero_error_expected": c.zero_error_expected, "passed": c.passed}
        return {
            "schema": SCHEMA,
            "params": {"K": K, "N": N, "T": T, "E": E, "q": self.params.q},
            "regime": self.regime,
            "mode": self.mode,
            "privacy_certified": self.privacy_certified,
            "passed": self.passed,
            "security": {"subsets": len(self.security), "passed": all(v.passed for v in self.security)},
            "privacy_structural": {"checks": len(self.privacy_structural),
                                   "passed": all(v.passed for v in self.privacy_structural)},
            "privacy_exhaustive": None if self.privacy_exhaustive is None
            else [v.to_dict() for v in self.privacy_exhaustive],
            "correctness": corr,
            "rate": self.rate,
            "mds": [v.to_dict() for v in self.mds],
            "failures": self.failures(),
        }


def audit_scheme(scheme, rng, *, trials: int = 100, exhaustive: bool = False) -> AuditReport:
    """Run every applicable check against a built scheme."""
    p = scheme.params
    security, structural = [], []
    certified = True
    for k in range(1, p.K + 1):
        session = scheme.open(k, rng)
        Q = scheme.queries(session)
        certified = certified and scheme.privacy_certified(session)
        security += check_security_all(scheme, Q)
        if scheme.regime == LOW_E:
            structural += check_query_privacy(scheme, Q)
    if scheme.regime == LOW_E:
        structural = check_privacy_structural(scheme.bundle) + structural
    else:
        structural = check_high_structural(scheme.grs, p.T) + structural
    exhaustive_verdicts = None
    if exhaustive and scheme.regime == HIGH_E and _high_state_count(p) <= EXHAUSTIVE_GUARD:
        exhaustive_verdicts = [check_privacy_exhaustive(p, scheme.grs, s)
                               for s in itertools.combinations(range(1, p.N + 1), p.T)]
    correctness = check_correctness(scheme, trials, rng) if trials else None
    return AuditReport(p, scheme.regime, scheme.mode, certified and not scheme.retry, security, structural,
                       correctness, audit_rate_and_rho(scheme), certify_scheme_codes(scheme),
                       exhaustive_verdicts)


def audit(params: SchemeParams, rng, *, trials: int = 100, retry: bool = False,
          exhaustive: bool = False) -> AuditReport:
    return audit_scheme(build_scheme(params, rng, retry=retry), rng, trials=trials, exhaustive=exhaustive)

