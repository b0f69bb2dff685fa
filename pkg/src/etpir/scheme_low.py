"""Retrieval scheme for the regime E < T.

Every server returns D_n symbols arranged in K layers; a layer-iota symbol
mixes one combination of each of iota messages plus a coded noise symbol.
The user removes the noise with H_S, uses the pure-interference symbols of
layer iota to rebuild the interference inside layer iota+1, and finally
inverts the remaining desired combinations.

Layout conventions (encoder and decoder rely on both):

* Desired mixtures of server n are rows (n-1)·L_n .. n·L_n - 1 of
  G_desired·U_l, taken in the order the server's rows involve message l.
* For the undesired pair at layer iota, block row n of G_tilde has
  b = I_iota + I_{iota+1} rows; its first I_iota rows feed the type-K sums of
  layer iota and the rest feed the (K + l)-sums of layer iota+1.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from math import comb

import numpy as np

from .codes import NoiseCode, build_noise_code
from .field import is_prime
from .linalg import (
    Matrix,
    SingularMatrixError,
    array_rank,
    first_singular_block_rows,
    first_singular_rows,
    identity,
    invert_array,
    kron,
    mat_mod,
    matmul,
    random_full_rank,
    random_matrix,
    vstack,
)
from .plan import (
    LOW_E,
    DerivedCounts,
    IndexMap,
    SchemeParams,
    build_index_map,
    derive_counts,
    layer_types,
)

RESAMPLE_BUDGET = 64
MDS_CHECK_LIMIT = 2000
INTERFERENCE_MODES = ("auto", "uniform", "cauchy")


class DecodeSingular(ArithmeticError):
    """The decoding system of this retrieval is singular (the epsilon-error event)."""


class ResampleBudgetExceeded(RuntimeError):
    """A randomized construction kept failing; the field is probably too small."""


@dataclass(frozen=True)
class CauchyCertificate:
    """M[r, c] = row_scale[r]·col_scale[c] / (xs[r] - ys[c]) with all xs, ys distinct.

    Every square submatrix of such a matrix is invertible, so [I ; M] is MDS
    whatever its size.
    """

    xs: tuple[int, ...]
    ys: tuple[int, ...]
    row_scale: tuple[int, ...]
    col_scale: tuple[int, ...]

    def matrix(self, field) -> Matrix:
        q = field.q
        rows = [[a * b * pow((x - y) % q, q - 2, q) % q for y, b in zip(self.ys, self.col_scale)]
                for x, a in zip(self.xs, self.row_scale)]
        return Matrix(np.array(rows, dtype=object).reshape(len(self.xs), len(self.ys)), field)

    def verify(self, M: Matrix) -> bool:
        pts = list(self.xs) + list(self.ys)
        if len(set(pts)) != len(pts):
            return False
        if any(v % M.q == 0 for v in self.row_scale + self.col_scale):
            return False
        return self.matrix(M.field) == M


@dataclass(frozen=True)
class LayerPrecoding:
    """Shared precoding of the undesired symbols at layers iota and iota+1."""

    layer: int
    I_low: int
    I_high: int
    M_lower: Matrix  # (N-T)b x (T-E)b, the blocks M_{i,j}
    G_tilde: Matrix  # N b x T b
    M_interference: Matrix  # (N-E)b x (T-E)b = [I ; M_lower]
    recover: Matrix  # maps the (N-E)·I_low exposed values to the (N-E)·I_high hidden ones
    construction: str
    mds_checked: bool
    certificate: CauchyCertificate | None = None

    @property
    def block(self) -> int:
        return self.I_low + self.I_high


@dataclass(frozen=True)
class PrecodingBundle:
    params: SchemeParams
    counts: DerivedCounts
    noise: NoiseCode
    G_desired: Matrix  # N·L_n x N_eff·L_n
    G_pairs: tuple[LayerPrecoding, ...]
    case: int  # 1 when T <= N - E, else 2
    resamples: int = 0

    @property
    def M_interference(self) -> tuple[Matrix, ...]:
        return tuple(p.M_interference for p in self.G_pairs)

    def F_desired(self) -> Matrix:
        """(H_S ⊗ I^{L_n})·G_desired, the desired coefficients after noise removal."""
        return matmul(kron(self.noise.H_S, identity(self.counts.L_n, self.noise.field)), self.G_desired)


# ------------------------------------------------------------ construction

def g_tilde_from_lower(P: Matrix, M_lower: Matrix, N: int, T: int, E: int, b: int) -> Matrix:
    """[I^{Tb} ; N_{i,j} | M_{i,j}] with N_{i,j} = P[T-E+i, j]·I - sum_t P[t, j]·M_{i,t}."""
    field = M_lower.field
    q = field.q
    M = M_lower.data
    dtype = field.dtype
    lower = np.zeros(((N - T) * b, T * b), dtype=np.int64).astype(dtype)
    eye = np.eye(b, dtype=np.int64).astype(dtype)
    for i in range(N - T):
        rows = slice(i * b, (i + 1) * b)
        for j in range(E):
            acc = (int(P.data[T - E + i, j]) * eye) % q
            for t in range(T - E):
                acc = (acc - (int(P.data[t, j]) * M[rows, t * b:(t + 1) * b]) % q) % q
            lower[rows, j * b:(j + 1) * b] = acc
        lower[rows, E * b:] = M[rows]
    top = np.eye(T * b, dtype=np.int64).astype(dtype)
    return Matrix._wrap(np.vstack([top, lower]), field)


def interference_rows(N: int, E: int, I_low: int, I_high: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of M_interference seen in layer iota (known) and hidden in layer iota+1."""
    b = I_low + I_high
    known = np.array([m * b + p for m in range(N - E) for p in range(I_low)], dtype=np.int64)
    hidden = np.array([m * b + I_low + p for m in range(N - E) for p in range(I_high)], dtype=np.int64)
    return known, hidden


def layer_from_lower(params: SchemeParams, noise: NoiseCode, layer: int, I_low: int, I_high: int,
                     M_lower: Matrix, construction: str, mds_checked: bool = False,
                     certificate: CauchyCertificate | None = None) -> LayerPrecoding:
    """Assemble a layer; raises SingularMatrixError if the exposed rows do not determine the rest."""
    N, T, E = params.N, params.T, params.E
    b = I_low + I_high
    if M_lower.shape != ((N - T) * b, (T - E) * b):
        raise ValueError(f"M blocks have shape {M_lower.shape}, expected {((N - T) * b, (T - E) * b)}")
    field = M_lower.field
    G_tilde = g_tilde_from_lower(noise.P, M_lower, N, T, E, b)
    M_int = vstack([identity((T - E) * b, field), M_lower])
    known, hidden = interference_rows(N, E, I_low, I_high)
    inv_known = invert_array(M_int.data[known], field.q)
    recover = Matrix._wrap(mat_mod(M_int.data[hidden], inv_known, field.q), field)
    return LayerPrecoding(layer, I_low, I_high, M_lower, G_tilde, M_int, recover,
                          construction, mds_checked, certificate)


def _distinct_elements(count: int, field, rng) -> list[int]:
    if count > field.q:
        raise ValueError(f"GF({field.q}) has fewer than {count} elements")
    if 4 * count > field.q:
        return [int(v) for v in rng.permutation(field.q)[:count]]
    seen: dict[int, None] = {}
    while len(seen) < count:
        for v in np.atleast_1d(field.random(rng, count)):
            seen.setdefault(int(v), None)
            if len(seen) == count:
                break
    return list(seen)


def sample_cauchy(rows: int, cols: int, field, rng) -> CauchyCertificate:
    pts = _distinct_elements(rows + cols, field, rng)
    a = [int(v) for v in np.atleast_1d(field.random_nonzero(rng, rows))]
    c = [int(v) for v in np.atleast_1d(field.random_nonzero(rng, cols))]
    return CauchyCertificate(tuple(pts[:rows]), tuple(pts[rows:]), tuple(a), tuple(c))


def _mds_subsets(N: int, T: int, E: int, b: int) -> int:
    return comb((N - E) * b, (T - E) * b)


def build_layer(params: SchemeParams, noise: NoiseCode, layer: int, rng, *,
                interference: str = "auto", mds_limit: int = MDS_CHECK_LIMIT,
                budget: int = RESAMPLE_BUDGET) -> tuple[LayerPrecoding, int]:
    """Sample M blocks until the layer decodes and passes privacy condition 2'."""
    if interference not in INTERFERENCE_MODES:
        raise ValueError(f"unknown interference construction {interference!r}")
    counts = derive_counts(params)
    N, T, E = params.N, params.T, params.E
    I_low, I_high = counts.I_iota[layer - 1], counts.I_iota[layer]
    b = I_low + I_high
    field = params.field
    shape = ((N - T) * b, (T - E) * b)
    exhaustive = _mds_subsets(N, T, E, b) <= mds_limit
    cauchy_fits = (N - E) * b <= field.q
    for attempt in range(budget):
        mode = interference
        if mode == "auto":
            # Over small fields a uniform draw is rarely MDS, so odd attempts use Cauchy blocks.
            mode = "uniform" if exhaustive and (attempt % 2 == 0 or not cauchy_fits) else "cauchy"
        cert = None
        if mode == "uniform":
            M_lower = random_matrix(*shape, field, rng)
        else:
            cert = sample_cauchy(*shape, field, rng)
            M_lower = cert.matrix(field)
        try:
            lp = layer_from_lower(params, noise, layer, I_low, I_high, M_lower, mode,
                                  mds_checked=exhaustive, certificate=cert)
        except SingularMatrixError:
            continue
        if first_singular_block_rows(lp.G_tilde, b, T) is not None:
            continue
        if exhaustive and first_singular_rows(lp.M_interference) is not None:
            continue
        return lp, attempt
    raise ResampleBudgetExceeded(f"layer {layer}: no admissible M blocks in {budget} draws over GF({field.q})")


def desired_case1(params: SchemeParams, counts: DerivedCounts) -> Matrix:
    """G_l ⊗ I^{L_n} with G_l[n, m] = n^(E+m).

    Together with the noise generator (columns n^0..n^(E-1)) this is a full
    N x N Vandermonde matrix, so H_S·G_l is invertible and any T <= N-E rows of
    G_l are independent.
    """
    N, E = params.N, params.E
    field = params.field
    G_l = Matrix(np.array([[pow(n, E + m, field.q) for m in range(N - E)] for n in range(1, N + 1)],
                          dtype=object), field)
    return kron(G_l, identity(counts.L_n, field))


def build_precoding(params: SchemeParams, counts: DerivedCounts | None = None, rng=None, *,
                    interference: str = "auto", mds_limit: int = MDS_CHECK_LIMIT,
                    budget: int = RESAMPLE_BUDGET) -> PrecodingBundle:
    counts = derive_counts(params) if counts is None else counts
    if counts.regime != LOW_E:
        raise ValueError("build_precoding covers E < T only")
    rng = np.random.default_rng() if rng is None else rng
    N, T, E = params.N, params.T, params.E
    field = params.field
    noise = build_noise_code(N, E, field)
    if field.q <= N:
        raise ValueError(f"q={field.q} must exceed N={N}")
    resamples = 0
    if T <= N - E:
        case = 1
        G_desired = desired_case1(params, counts)
    else:
        case = 2
        F_lift = kron(noise.H_S, identity(counts.L_n, field))
        for attempt in range(budget):
            G_desired = random_matrix(N * counts.L_n, T * counts.L_n, field, rng)
            if first_singular_block_rows(G_desired, counts.L_n, T) is None and \
                    array_rank(matmul(F_lift, G_desired).data, field.q) == counts.L:
                resamples += attempt
                break
        else:
            raise ResampleBudgetExceeded(f"no admissible desired precoding in {budget} draws over GF({field.q})")
    layers = []
    for layer in range(1, params.K):
        lp, tries = build_layer(params, noise, layer, rng, interference=interference,
                                mds_limit=mds_limit, budget=budget)
        resamples += tries
        layers.append(lp)
    return PrecodingBundle(params, counts, noise, G_desired, tuple(layers), case, resamples)


def bundle_from_blocks(params: SchemeParams, noise: NoiseCode, G_desired: Matrix,
                       M_blocks) -> PrecodingBundle:
    """Bundle from explicit matrices, one M_lower per layer (hand-made fixtures)."""
    counts = derive_counts(params)
    N, T, E = params.N, params.T, params.E
    if G_desired.shape != (N * counts.L_n, counts.N_eff * counts.L_n):
        raise ValueError(f"G_desired has shape {G_desired.shape}")
    M_blocks = list(M_blocks)
    if len(M_blocks) != params.K - 1:
        raise ValueError(f"need {params.K - 1} layer matrices, got {len(M_blocks)}")
    layers = []
    for layer, M_lower in enumerate(M_blocks, start=1):
        I_low, I_high = counts.I_iota[layer - 1], counts.I_iota[layer]
        exhaustive = _mds_subsets(N, T, E, I_low + I_high) <= MDS_CHECK_LIMIT
        layers.append(layer_from_lower(params, noise, layer, I_low, I_high, M_lower,
                                       "fixture", mds_checked=exhaustive))
    return PrecodingBundle(params, counts, noise, G_desired, tuple(layers), 1 if T <= N - E else 2)


# ----------------------------------------------------------------- routing

@dataclass(frozen=True)
class PairUse:
    """Rows start..stop-1 of U_k feed the pair (layer, members) of message k."""

    layer: int
    members: tuple[int, ...]
    start: int
    stop: int


@dataclass(frozen=True)
class Routing:
    """Where every coefficient row of every message comes from, for desired index l."""

    l: int
    cursors: tuple[tuple[PairUse, ...], ...]  # per message; empty for the desired one
    source_rows: tuple[np.ndarray, ...]  # per message, (N, D_n) row numbers into its source, -1 if absent
    pure_pairs: tuple[tuple[int, tuple[int, ...], np.ndarray, np.ndarray], ...]  # (layer, members, known rows, hidden rows)
    desired_rows: np.ndarray  # row numbers carrying message l, ordered by local index


@lru_cache(maxsize=128)
def routing(K: int, N: int, T: int, E: int, l: int) -> Routing:
    counts = derive_counts(SchemeParams(K, N, T, E, _any_prime_above(N)))
    imap = build_index_map(counts)
    I = counts.I_iota
    blocks = {iota: I[iota - 1] + I[iota] for iota in range(1, K)}
    cursors = []
    offsets = []  # per message: (layer, members) -> first source row
    for k in range(1, K + 1):
        uses, offs, pos, src = [], {}, 0, 0
        if k != l:
            for iota in range(1, K):
                for members in layer_types(K, iota):
                    if l in members or k not in members:
                        continue
                    width = T * blocks[iota]
                    uses.append(PairUse(iota, members, pos, pos + width))
                    offs[(iota, members)] = src
                    pos += width
                    src += N * blocks[iota]
        cursors.append(tuple(uses))
        offsets.append(offs)
    source_rows = []
    for k in range(1, K + 1):
        idx = np.full((N, imap.D_n), -1, dtype=np.int64)
        for r, spec in enumerate(imap.rows):
            if k not in spec.members:
                continue
            for n in range(N):
                if k == l:
                    idx[n, r] = n * imap.L_n + imap.slots[r][k - 1] - 1
                elif l in spec.members:
                    iota = spec.layer - 1
                    base = tuple(m for m in spec.members if m != l)
                    idx[n, r] = offsets[k - 1][(iota, base)] + n * blocks[iota] + I[iota - 1] + spec.position
                else:
                    idx[n, r] = offsets[k - 1][(spec.layer, spec.members)] + n * blocks[spec.layer] + spec.position
        idx.setflags(write=False)
        source_rows.append(idx)
    pure = []
    for iota in range(1, K):
        for members in layer_types(K, iota):
            if l in members:
                continue
            up = tuple(sorted(members + (l,)))
            known = np.array(imap.row_numbers(iota, imap.type_index(members)), dtype=np.int64)
            hidden = np.array(imap.row_numbers(iota + 1, imap.type_index(up)), dtype=np.int64)
            pure.append((iota, members, known, hidden))
    desired = sorted((imap.slots[r][l - 1], r) for r in range(imap.D_n) if imap.slots[r][l - 1])
    return Routing(l, tuple(cursors), tuple(source_rows), tuple(pure),
                   np.array([r for _, r in desired], dtype=np.int64))


def _any_prime_above(n: int) -> int:
    # Routing only needs the counts; any valid modulus will do.
    p = n + 1
    while not is_prime(p):
        p += 1
    return p


# ----------------------------------------------------------------- session

@dataclass(frozen=True)
class QueryPlan:
    """Coefficient blocks of one retrieval, shape (N, D_n, K, L_ext).

    ``coefficients[n-1, r, k-1]`` is the vector server n applies to message k
    for its r-th answer symbol; it is zero when k is not in that row's type.
    """

    coefficients: np.ndarray

    def server(self, n: int) -> np.ndarray:
        return self.coefficients[n - 1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coefficients.shape


@dataclass(frozen=True)
class CommonRandomness:
    """D_n x E noise symbols shared by the servers; row r masks query row r."""

    S: Matrix

    @classmethod
    def sample(cls, counts: DerivedCounts, E: int, field, rng) -> CommonRandomness:
        return cls(random_matrix(counts.D_n, E, field, rng))

    @property
    def size(self) -> int:
        return self.S.rows * self.S.cols


@dataclass(frozen=True)
class RetrievalSession:
    params: SchemeParams
    counts: DerivedCounts
    index_map: IndexMap
    k: int
    U: tuple[Matrix, ...]
    cursors: tuple[tuple[PairUse, ...], ...]
    bundle: PrecodingBundle
    retry: bool = False
    resamples: int = 0
    decoder: Matrix | None = dc_field(default=None, repr=False)

    @property
    def privacy_certified(self) -> bool:
        # Resampling U_l conditions it on decodability, so no claim is made.
        return not self.retry

    @property
    def mode(self) -> str:
        return "retry" if self.retry else "faithful"


def _desired_system(bundle: PrecodingBundle, U_l: Matrix) -> np.ndarray:
    F = bundle.F_desired()
    return mat_mod(F.data, U_l.data[:, :bundle.counts.L], F.q)


def open_session(params: SchemeParams, k: int, rng, *, bundle: PrecodingBundle | None = None,
                 retry: bool = False, interference: str = "auto",
                 budget: int = RESAMPLE_BUDGET) -> tuple[RetrievalSession, QueryPlan]:
    if not 1 <= k <= params.K:
        raise ValueError(f"desired index k={k} outside [1, {params.K}]")
    counts = derive_counts(params)
    if bundle is None:
        bundle = build_precoding(params, counts, rng, interference=interference, budget=budget)
    elif bundle.params != params:
        raise ValueError("bundle was built for different parameters")
    field = params.field
    Lp = counts.L_ext
    U = [random_full_rank(Lp, field, rng) for _ in range(params.K)]
    resamples = 0
    system = _desired_system(bundle, U[k - 1])
    decoder = None
    try:
        decoder = invert_array(system, field.q)
    except SingularMatrixError:
        if retry:
            for resamples in range(1, budget + 1):
                U[k - 1] = random_full_rank(Lp, field, rng)
                try:
                    decoder = invert_array(_desired_system(bundle, U[k - 1]), field.q)
                    break
                except SingularMatrixError:
                    continue
            else:
                raise ResampleBudgetExceeded(f"no decodable U in {budget} draws")
    route = routing(params.K, params.N, params.T, params.E, k)
    session = RetrievalSession(params, counts, build_index_map(counts), k, tuple(U), route.cursors,
                               bundle, retry, resamples,
                               Matrix._wrap(decoder, field) if decoder is not None else None)
    return session, make_queries(session)


def make_queries(session: RetrievalSession) -> QueryPlan:
    params, counts, bundle = session.params, session.counts, session.bundle
    q = params.q
    route = routing(params.K, params.N, params.T, params.E, session.k)
    dtype = params.field.dtype
    Lp = counts.L_ext
    coeff = np.zeros((params.N, counts.D_n, params.K, Lp), dtype=np.int64).astype(dtype)
    for k in range(1, params.K + 1):
        U = session.U[k - 1].data
        if k == session.k:
            source = mat_mod(bundle.G_desired.data, U, q)
        else:
            parts = [mat_mod(bundle.G_pairs[use.layer - 1].G_tilde.data, U[use.start:use.stop], q)
                     for use in session.cursors[k - 1]]
            source = np.vstack(parts) if parts else np.zeros((0, Lp), dtype=dtype)
        idx = route.source_rows[k - 1]
        padded = np.vstack([source, np.zeros((1, Lp), dtype=dtype)])
        coeff[:, :, k - 1, :] = padded[np.where(idx >= 0, idx, source.shape[0])]
    coeff.setflags(write=False)
    return QueryPlan(coeff)


# ------------------------------------------------------------- server side

def pad_messages(W, counts: DerivedCounts, field) -> np.ndarray:
    """K x L messages -> K x L_ext with the dummy symbols fixed to zero."""
    W = field.array(W)
    if W.ndim != 2 or W.shape[1] != counts.L:
        raise ValueError(f"messages must be K x {counts.L}, got {W.shape}")
    pad = np.zeros((W.shape[0], counts.L_ext - counts.L), dtype=np.int64).astype(W.dtype)
    return np.hstack([W, pad])


def answer_query(n: int, query_blocks: np.ndarray, messages: np.ndarray, S: CommonRandomness,
                 C_S: Matrix) -> np.ndarray:
    """The D_n answer symbols of server n: message inner products plus coded noise."""
    q = C_S.q
    D, K, Lp = query_blocks.shape
    if messages.shape != (K, Lp):
        raise ValueError(f"stored messages {messages.shape} do not match query blocks {(K, Lp)}")
    if S.S.shape != (D, C_S.cols):
        raise ValueError(f"common randomness {S.S.shape} does not match {(D, C_S.cols)}")
    flat = query_blocks.reshape(D, K * Lp)
    ans = mat_mod(flat, messages.reshape(K * Lp, 1), q)[:, 0]
    if C_S.cols:
        ans = (ans + mat_mod(S.S.data, C_S.data[n - 1].reshape(-1, 1), q)[:, 0]) % q
    return ans


def noise_map(n: int, counts: DerivedCounts, C_S: Matrix) -> np.ndarray:
    """Coefficients of the flattened S (row-major D_n x E) in server n's answers."""
    D, E = counts.D_n, C_S.cols
    out = np.zeros((D, D * E), dtype=np.int64).astype(C_S.field.dtype)
    for r in range(D):
        out[r, r * E:(r + 1) * E] = C_S.data[n - 1]
    return out


# ---------------------------------------------------------------- decoding

def decode(session: RetrievalSession, answers) -> np.ndarray:
    """Recover the L symbols of the desired message from an N x D_n answer array."""
    params, counts, bundle = session.params, session.counts, session.bundle
    q = params.q
    A = params.field.array(answers)
    if A.shape != (params.N, counts.D_n):
        raise ValueError(f"expected answers of shape {(params.N, counts.D_n)}, got {A.shape}")
    route = routing(params.K, params.N, params.T, params.E, session.k)
    Y = mat_mod(bundle.noise.H_S.data, A, q)
    for layer, _members, known, hidden in route.pure_pairs:
        R = bundle.G_pairs[layer - 1].recover.data
        exposed = Y[:, known].reshape(-1, 1)
        hidden_vals = mat_mod(R, exposed, q).reshape(len(Y), len(hidden))
        Y[:, hidden] = (Y[:, hidden] - hidden_vals) % q
    d = Y[:, route.desired_rows].reshape(-1, 1)
    if session.decoder is None:
        raise DecodeSingular("desired coefficient matrix is singular for this U")
    return mat_mod(session.decoder.data, d, q)[:, 0]
