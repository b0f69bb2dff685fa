from fractions import Fraction
from math import comb

import pytest

from etpir.plan import (
    HIGH_E,
    LOW_E,
    SchemeParams,
    build_index_map,
    capacity,
    derive_counts,
    layer_types,
    rho_min,
    tpir_capacity,
)


@pytest.mark.parametrize("args,want", [
    ((2, 3, 2, 1), Fraction(4, 9)),
    ((3, 3, 2, 1), Fraction(8, 21)),
    ((2, 4, 2, 1), Fraction(9, 16)),
    ((2, 5, 3, 2), Fraction(9, 20)),
])
def test_capacity_goldens(args, want):
    assert capacity(*args) == want


@pytest.mark.parametrize("K", [1, 2, 5, 9])
def test_capacity_when_eavesdropper_dominates(K):
    assert capacity(K, 3, 1, 2) == Fraction(1, 3)
    for N in range(2, 8):
        for E in range(1, N):
            assert capacity(K, N, 1, E) == Fraction(N - E, N)


def test_single_message_capacity():
    for N in range(2, 8):
        for T in range(1, N + 1):
            for E in range(0, T):
                assert capacity(1, N, T, E) == Fraction(N - E, N)


def test_no_eavesdropper_reduces_to_tpir():
    for N in range(2, 9):
        for T in range(1, N):
            for K in range(1, 6):
                assert capacity(K, N, T, 0) == tpir_capacity(K, N, T)
                assert rho_min(K, N, T, 0) == 0


def test_capacity_valid_at_full_collusion():
    # with T = N every term of the sum equals 1
    assert capacity(2, 3, 3, 1) == Fraction(1, 3)


def test_capacity_is_monotone():
    for N in range(2, 7):
        for T in range(1, N):
            for E in range(0, N):
                caps = [capacity(K, N, T, E) for K in range(1, 6)]
                assert caps == sorted(caps, reverse=True)
                if T + 1 < N:
                    assert capacity(3, N, T + 1, E) <= capacity(3, N, T, E)
                if E + 1 < N:
                    assert capacity(3, N, T, E + 1) <= capacity(3, N, T, E)


def test_large_k_limit():
    # C_K - (1 - T/N) = (1 - T/N) r^K / (1 - r^K) with r = (T-E)/(N-E), exactly
    for N in range(3, 9):
        for T in range(2, N):
            for E in range(1, T):
                r = Fraction(T - E, N - E)
                lim = 1 - Fraction(T, N)
                K = 40
                assert capacity(K, N, T, E) - lim == lim * r**K / (1 - r**K)
                if r <= Fraction(7, 10):
                    assert abs(float(capacity(K, N, T, E)) - float(lim)) < 1e-6


@pytest.mark.parametrize("args,want", [((2, 3, 2, 1), Fraction(3, 4)), ((2, 5, 3, 2), Fraction(8, 9))])
def test_rho_min_goldens(args, want):
    assert rho_min(*args) == want


@pytest.mark.parametrize("args", [(0, 3, 1, 0), (1, 0, 1, 0), (1, 3, 0, 0), (1, 3, 4, 0), (1, 3, 1, 3), (1, 3, 1, -1)])
def test_capacity_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        capacity(*args)


@pytest.mark.parametrize("kw", [
    dict(K=0, N=3, T=1, E=0), dict(K=1, N=1, T=1, E=0), dict(K=1, N=3, T=3, E=0),
    dict(K=1, N=3, T=1, E=3), dict(K=1, N=3, T=1, E=0, q=9),
])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        SchemeParams(**kw)


def test_params_type_check():
    with pytest.raises(TypeError):
        SchemeParams(2, 3, 2, 1.0)
    with pytest.raises(TypeError):
        SchemeParams(True, 3, 2, 1)


def test_counts_three_servers():
    c = derive_counts(SchemeParams(2, 3, 2, 1))
    assert (c.L, c.L_n, c.D_n, c.I_iota, c.N_eff) == (4, 2, 3, (1, 1), 2)
    assert c.download == 9 and c.noise_total == 3 and c.dummies == 0


def test_counts_four_servers():
    c = derive_counts(SchemeParams(2, 4, 2, 1))
    assert (c.L, c.L_n, c.D_n, c.I_iota) == (9, 3, 4, (1, 2))


def test_counts_with_dummies():
    c = derive_counts(SchemeParams(2, 4, 3, 2))
    assert (c.L, c.L_ext, c.N_eff, c.D_n) == (4, 6, 3, 3)
    assert c.dummies == 2


def test_counts_high_regime():
    c = derive_counts(SchemeParams(3, 4, 2, 2))
    assert c.regime == HIGH_E
    assert (c.L, c.D_n, c.noise_total, c.download) == (2, 1, 2, 4)
    assert c.rate == Fraction(1, 2) and c.rho == 1


def test_d_n_closed_forms_agree():
    for N in range(3, 9):
        for T in range(2, N):
            for E in range(1, T):
                for K in range(1, 6):
                    c = derive_counts(SchemeParams(K, N, T, E, 11))
                    assert c.D_n == sum(comb(K, i) * c.I_iota[i - 1] for i in range(1, K + 1))
                    assert c.D_n * (N - T) == (N - E) ** K - (T - E) ** K


def test_rate_and_noise_identities():
    for N in range(2, 8):
        for T in range(1, N):
            for E in range(0, N):
                for K in range(1, 5):
                    p = SchemeParams(K, N, T, E, 11)
                    c = derive_counts(p)
                    assert c.rate == p.capacity()
                    assert c.noise_total == E * c.D_n
                    assert Fraction(c.noise_total) == p.rho_min() * c.L


def test_layer_types_are_lexicographic():
    assert layer_types(3, 2) == [(1, 2), (1, 3), (2, 3)]
    assert layer_types(4, 4) == [(1, 2, 3, 4)]


def test_index_map_reproduces_three_server_table():
    imap = build_index_map(derive_counts(SchemeParams(2, 3, 2, 1)))
    table = [[imap.label(n, r) for r in range(imap.D_n)] for n in (1, 2, 3)]
    assert table == [["a1", "b1", "a2+b2"], ["a3", "b3", "a4+b4"], ["a5", "b5", "a6+b6"]]


def test_index_map_three_messages():
    imap = build_index_map(derive_counts(SchemeParams(3, 3, 2, 1)))
    assert [imap.label(1, r) for r in range(imap.D_n)] == [
        "a1", "b1", "c1", "a2+b2", "a3+c2", "b3+c3", "a4+b4+c4"]


@pytest.mark.parametrize("K,N,T,E", [(3, 3, 2, 1), (3, 5, 3, 1), (2, 4, 3, 2), (4, 5, 3, 1)])
def test_index_lists_partition(K, N, T, E):
    c = derive_counts(SchemeParams(K, N, T, E, 11))
    imap = build_index_map(c)
    for k in range(1, K + 1):
        seen = []
        for n in range(1, N + 1):
            for iota in range(1, K + 1):
                for t, members in enumerate(layer_types(K, iota), start=1):
                    if k not in members:
                        continue
                    idx = imap.indices(n, iota, t, k)
                    assert len(idx) == c.I_iota[iota - 1]
                    seen += idx
        assert sorted(seen) == list(range(1, N * c.L_n + 1))


def test_index_map_server_major_order():
    c = derive_counts(SchemeParams(3, 4, 2, 1, 11))
    imap = build_index_map(c)
    for n in range(1, 5):
        got = sorted(imap.global_index(n, r, 1) for r in range(imap.D_n) if 1 in imap.rows[r].members)
        assert got == list(range((n - 1) * c.L_n + 1, n * c.L_n + 1))


def test_single_message_map():
    imap = build_index_map(derive_counts(SchemeParams(1, 4, 2, 1, 11)))
    assert imap.D_n == 1 and imap.I_iota == (1,)


def test_index_map_rejects_high_regime():
    with pytest.raises(ValueError):
        build_index_map(derive_counts(SchemeParams(2, 3, 1, 2)))


def test_regime_labels():
    assert SchemeParams(2, 3, 2, 1).regime == LOW_E
    assert SchemeParams(2, 3, 2, 2).regime == HIGH_E
