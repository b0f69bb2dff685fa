"""Parameters, capacity accounting and the layer/type skeleton of the scheme."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from itertools import combinations
from math import comb

from .field import DEFAULT_Q, PrimeField

LOW_E = "LowE"
HIGH_E = "HighE"


def _check_capacity_args(K: int, N: int, T: int, E: int) -> None:
    if K < 1:
        raise ValueError(f"need at least one message, got K={K}")
    if N < 1:
        raise ValueError(f"need at least one server, got N={N}")
    if not 1 <= T <= N:
        raise ValueError(f"collusion threshold T={T} outside [1, {N}]")
    if E < 0:
        raise ValueError(f"eavesdropper threshold E={E} is negative")
    if E >= N:
        raise ValueError(f"E={E} >= N={N}: the eavesdropper sees every server")


def capacity(K: int, N: int, T: int, E: int) -> Fraction:
    """Exact capacity for K messages, N servers, T colluders, E eavesdropped links."""
    _check_capacity_args(K, N, T, E)
    base = 1 - Fraction(E, N)
    if E >= T:
        return base
    ratio = Fraction(T - E, N - E)
    return base / sum(ratio**i for i in range(K))


def rho_min(K: int, N: int, T: int, E: int) -> Fraction:
    """Smallest common-randomness size relative to the message length."""
    return Fraction(E, N) / capacity(K, N, T, E)


def tpir_capacity(K: int, N: int, T: int) -> Fraction:
    """Capacity without an eavesdropper, 1 / (1 + T/N + ... + (T/N)^(K-1))."""
    return 1 / sum(Fraction(T, N) ** i for i in range(K))


@dataclass(frozen=True)
class SchemeParams:
    """Problem parameters. ``q`` is checked for primality here; whether it is
    large enough for a particular construction is checked by the builders."""

    K: int
    N: int
    T: int
    E: int
    q: int = DEFAULT_Q

    def __post_init__(self):
        for name in ("K", "N", "T", "E", "q"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError(f"{name} must be an int, got {v!r}")
        if self.K < 1:
            raise ValueError(f"K={self.K} < 1")
        if self.N < 2:
            raise ValueError(f"N={self.N} < 2")
        if not 1 <= self.T <= self.N - 1:
            raise ValueError(f"T={self.T} outside [1, N-1={self.N - 1}]")
        if not 0 <= self.E <= self.N - 1:
            raise ValueError(f"E={self.E} outside [0, N-1={self.N - 1}]")
        PrimeField(self.q)  # raises on composite q

    @property
    def field(self) -> PrimeField:
        return PrimeField(self.q)

    @property
    def regime(self) -> str:
        return LOW_E if self.E < self.T else HIGH_E

    def capacity(self) -> Fraction:
        return capacity(self.K, self.N, self.T, self.E)

    def rho_min(self) -> Fraction:
        return rho_min(self.K, self.N, self.T, self.E)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.K, self.N, self.T, self.E)


@dataclass(frozen=True)
class DerivedCounts:
    """Symbol counts of one retrieval.

    For the high-E regime there are no layers: ``I_iota`` is empty, each
    server returns one symbol and ``L_n`` counts that one answer.
    """

    regime: str
    L: int
    L_ext: int
    L_n: int
    D_n: int
    I_iota: tuple[int, ...]
    N_eff: int
    noise_total: int
    N: int = dc_field(default=0, repr=False)
    K: int = dc_field(default=0, repr=False)

    @property
    def download(self) -> int:
        return self.N * self.D_n

    @property
    def rate(self) -> Fraction:
        return Fraction(self.L, self.download)

    @property
    def rho(self) -> Fraction:
        return Fraction(self.noise_total, self.L)

    @property
    def dummies(self) -> int:
        return self.L_ext - self.L


def derive_counts(params: SchemeParams) -> DerivedCounts:
    K, N, T, E = params.as_tuple()
    if params.regime == HIGH_E:
        return DerivedCounts(HIGH_E, L=N - E, L_ext=N - E, L_n=1, D_n=1, I_iota=(),
                             N_eff=N - E, noise_total=E, N=N, K=K)
    I = tuple((N - T) ** (i - 1) * (T - E) ** (K - i) for i in range(1, K + 1))
    D_n = sum(comb(K, i) * I[i - 1] for i in range(1, K + 1))
    L_n = (N - E) ** (K - 1)
    N_eff = max(N - E, T)
    return DerivedCounts(LOW_E, L=(N - E) ** K, L_ext=N_eff * L_n, L_n=L_n, D_n=D_n,
                         I_iota=I, N_eff=N_eff, noise_total=E * D_n, N=N, K=K)


def layer_types(K: int, iota: int) -> list[tuple[int, ...]]:
    """The iota-subsets of messages 1..K in lexicographic order."""
    return list(combinations(range(1, K + 1), iota))


@dataclass(frozen=True)
class RowSpec:
    """One downloaded symbol position, identical at every server."""

    layer: int
    type_index: int  # 1-based lexicographic rank within the layer
    members: tuple[int, ...]
    position: int  # 0-based offset among the rows of this type


@dataclass(frozen=True)
class IndexMap:
    """Row layout of a server's answer and the per-message mixture indices.

    Rows are ordered by layer, then type, then position. A mixture of message
    ``k`` carries the global index (n-1)·L_n + j, where j counts the rows of
    server n that involve k, in row order. Every message therefore uses each
    index in [1, N·L_n] exactly once.
    """

    K: int
    N: int
    L_n: int
    I_iota: tuple[int, ...]
    rows: tuple[RowSpec, ...]
    slots: tuple[tuple[int, ...], ...]  # slots[r][k-1]: local index j (1-based) or 0

    @property
    def D_n(self) -> int:
        return len(self.rows)

    def type_of(self, t: int, iota: int) -> tuple[int, ...]:
        return layer_types(self.K, iota)[t - 1]

    def type_index(self, members) -> int:
        members = tuple(sorted(members))
        return layer_types(self.K, len(members)).index(members) + 1

    def row_numbers(self, iota: int, t: int) -> list[int]:
        """0-based row numbers of type t in layer iota."""
        return [r for r, spec in enumerate(self.rows) if spec.layer == iota and spec.type_index == t]

    def global_index(self, n: int, r: int, k: int) -> int:
        j = self.slots[r][k - 1]
        if j == 0:
            raise KeyError(f"row {r} does not involve message {k}")
        return (n - 1) * self.L_n + j

    def indices(self, n: int, iota: int, t: int, k: int | None = None) -> list[int]:
        """Sorted global indices of the type-t sums of layer iota at server n.

        The indices are those of message ``k``'s mixtures; by default the
        smallest member of the type.
        """
        members = self.type_of(t, iota)
        k = members[0] if k is None else k
        if k not in members:
            raise KeyError(f"message {k} is not in type {members}")
        return sorted(self.global_index(n, r, k) for r in self.row_numbers(iota, t))

    def label(self, n: int, r: int, names: str = "abcdefghijklmnopqrstuvwxyz") -> str:
        """Human readable row such as 'a2+b2'."""
        spec = self.rows[r]
        return "+".join(f"{names[k - 1]}{self.global_index(n, r, k)}" for k in spec.members)


def build_index_map(counts: DerivedCounts) -> IndexMap:
    if counts.regime != LOW_E:
        raise ValueError("the high-E scheme has no layers to index")
    K = counts.K
    rows = []
    for iota in range(1, K + 1):
        for t, members in enumerate(layer_types(K, iota), start=1):
            rows.extend(RowSpec(iota, t, members, p) for p in range(counts.I_iota[iota - 1]))
    seen = [0] * K
    slots = []
    for spec in rows:
        slot = [0] * K
        for k in spec.members:
            seen[k - 1] += 1
            slot[k - 1] = seen[k - 1]
        slots.append(tuple(slot))
    assert all(s == counts.L_n for s in seen), (seen, counts.L_n)
    return IndexMap(K, counts.N, counts.L_n, counts.I_iota, tuple(rows), tuple(slots))
