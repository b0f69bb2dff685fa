import dataclasses
import itertools
import json

import numpy as np
import pytest

from etpir.audit import (
    SCHEMA,
    audit,
    audit_rate_and_rho,
    audit_scheme,
    certify_mds,
    certify_scheme_codes,
    check_correctness,
    check_high_structural,
    check_privacy_exhaustive,
    check_privacy_structural,
    check_query_privacy,
    check_query_uniformity,
    check_security,
    check_security_all,
    check_spir,
    exhaustive_leakage,
    linear_view,
    zero_error_expected,
)
from etpir.fixtures import elemental, four_server, tiny_grs
from etpir.linalg import Matrix, array_rank, identity, matrix, vstack
from etpir.plan import SchemeParams
from etpir.scheme import HighScheme, LowScheme, build_scheme
from etpir.scheme_low import sample_cauchy

BIG = 2147483647


def _elemental_scheme(q=7):
    b = elemental(q)
    return LowScheme(b.params, bundle=b, rng=np.random.default_rng(0))


# --------------------------------------------------------------- security

def test_each_server_noise_map_has_full_rank():
    scheme = _elemental_scheme()
    Q = scheme.queries(scheme.open(1))
    for n in (1, 2, 3):
        view = linear_view(scheme, Q, (n,))
        assert view.M_S.shape == (3, 3)
        assert view.noise_rank() == 3
        assert check_security(scheme, Q, (n,)).passed


def test_stripped_noise_fails_with_gap_equal_to_signal_rank():
    scheme = _elemental_scheme()
    Q = scheme.queries(scheme.open(1))
    for n in (1, 2, 3):
        v = check_security(scheme, Q, (n,), strip_noise=True)
        assert not v.passed
        view = linear_view(scheme, Q, (n,))
        assert v.witness["gap"] == array_rank(view.M_W, 7)
        assert v.fingerprint is not None


def test_two_eavesdroppers_all_subsets_pass():
    scheme = build_scheme(SchemeParams(2, 5, 3, 2, BIG), np.random.default_rng(1))
    for k in (1, 2):
        verdicts = check_security_all(scheme, scheme.queries(scheme.open(k)))
        assert len(verdicts) == 10 and all(v.passed for v in verdicts)


def test_rank_oracle_agrees_with_enumeration_gf2():
    scheme = _elemental_scheme(2)
    for k in (1, 2):
        Q = scheme.queries(scheme.open(k))
        for n in (1, 2, 3):
            rank_verdict = check_security(scheme, Q, (n,))
            leak = exhaustive_leakage(scheme, Q, (n,))
            assert rank_verdict.passed == leak.passed == True  # noqa: E712
            assert leak.mutual_information == 0
            stripped = exhaustive_leakage(scheme, Q, (n,), strip_noise=True)
            assert not stripped.passed
            assert stripped.mutual_information == pytest.approx(
                check_security(scheme, Q, (n,), strip_noise=True).witness["gap"])


def test_rank_oracle_detects_leak_across_two_servers_gf2():
    # with E = 1, a pair of servers is not protected; both oracles must agree on that
    scheme = _elemental_scheme(2)
    Q = scheme.queries(scheme.open(1))
    for subset in itertools.combinations((1, 2, 3), 2):
        rank_verdict = check_security(scheme, Q, subset)
        leak = exhaustive_leakage(scheme, Q, subset)
        assert rank_verdict.passed == leak.passed
        assert leak.mutual_information == pytest.approx(rank_verdict.witness["gap"])


def test_enumeration_guard():
    scheme = build_scheme(SchemeParams(2, 4, 2, 1, 101), np.random.default_rng(2))
    with pytest.raises(ValueError):
        exhaustive_leakage(scheme, scheme.queries(scheme.open(1)), (1,))


def test_high_regime_security():
    scheme = HighScheme(SchemeParams(2, 4, 2, 2, 7))
    Q = scheme.queries(scheme.open(1, np.random.default_rng(3)))
    assert all(v.passed for v in check_security_all(scheme, Q))


# ----------------------------------------------------------------- privacy

def test_structural_privacy_of_fixtures():
    assert all(v.passed for v in check_privacy_structural(elemental(7)))
    assert all(v.passed for v in check_privacy_structural(four_server().bundle))


def test_corrupted_block_row_is_caught():
    b = elemental(7)
    lp = b.G_pairs[0]
    G = lp.G_tilde.data.copy()
    G[4:6] = G[0:2]  # server 3 now repeats server 1's block row
    bad = dataclasses.replace(b, G_pairs=(dataclasses.replace(lp, G_tilde=Matrix._wrap(G, lp.G_tilde.field)),))
    failed = [v for v in check_privacy_structural(bad) if not v.passed]
    assert [v.subset for v in failed] == [(1, 3)]
    assert failed[0].fingerprint is not None
    assert failed[0].check.startswith("privacy_condition_2'")


def test_corrupted_desired_rows_are_caught():
    b = elemental(7)
    G = b.G_desired.data.copy()
    G[2:4] = G[0:2]
    bad = dataclasses.replace(b, G_desired=Matrix._wrap(G, b.G_desired.field))
    failed = [v for v in check_privacy_structural(bad) if not v.passed]
    assert [(v.check, v.subset) for v in failed] == [("privacy_condition_1", (1, 2))]


def test_query_rank_privacy():
    scheme = build_scheme(SchemeParams(3, 4, 2, 1, 101), np.random.default_rng(4))
    for k in (1, 2, 3):
        assert all(v.passed for v in check_query_privacy(scheme, scheme.queries(scheme.open(k))))
    with pytest.raises(ValueError):
        check_query_privacy(HighScheme(SchemeParams(2, 3, 1, 2, 5)), None)


@pytest.mark.parametrize("T", [1, 2])
def test_exhaustive_privacy_gf2(T):
    p = SchemeParams(2, 3, T, 2, 2)
    grs = tiny_grs(2)
    for subset in itertools.combinations((1, 2, 3), T):
        v = check_privacy_exhaustive(p, grs, subset)
        assert v.passed, v
        assert v.states == 2 * 2 ** 8


def test_exhaustive_privacy_detects_leaked_unit_vector():
    p = SchemeParams(2, 3, 1, 2, 2)
    grs = tiny_grs(2)
    assert not check_privacy_exhaustive(p, grs, (1,), corrupt=True).passed
    assert check_privacy_exhaustive(p, grs, (2,), corrupt=True).passed


def test_query_marginal_is_uniform():
    p = SchemeParams(2, 3, 1, 2, 2)
    for n in (1, 2, 3):
        assert check_query_uniformity(p, tiny_grs(2), (n,)).passed


def test_grs_structural_privacy():
    grs = tiny_grs(3)
    assert all(v.passed for v in check_high_structural(grs, 2))


@pytest.mark.parametrize("k", [1, 2])
def test_user_learns_nothing_beyond_desired_message(k):
    v = check_spir(SchemeParams(2, 3, 1, 2, 2), tiny_grs(2), k)
    assert v.passed and v.witness["violations"] == 0


# ------------------------------------------------------------- correctness

def test_correctness_stats():
    scheme = _elemental_scheme()
    stats = check_correctness(scheme, 50, np.random.default_rng(5))
    assert stats.passed and stats.failures == 0 and stats.successes == 50
    assert stats.zero_error_expected
    with pytest.raises(ValueError):
        check_correctness(scheme, 0, np.random.default_rng(5))


def test_zero_error_expectation():
    assert zero_error_expected(SchemeParams(2, 3, 2, 1))
    assert zero_error_expected(SchemeParams(2, 3, 1, 2))
    assert not zero_error_expected(SchemeParams(2, 4, 3, 2))
    assert zero_error_expected(SchemeParams(2, 4, 3, 2), retry=True)


def test_epsilon_regime_reports_failures_without_failing():
    scheme = build_scheme(SchemeParams(2, 4, 3, 2, 7), np.random.default_rng(6))
    stats = check_correctness(scheme, 200, np.random.default_rng(7))
    assert not stats.zero_error_expected
    assert stats.decode_failures > 0 and stats.wrong == 0
    assert stats.passed  # epsilon error is the expected behaviour, wrong answers are not


# ------------------------------------------------------------ rate and rho

@pytest.mark.parametrize("params,rate,rho", [
    (SchemeParams(2, 3, 2, 1), "4/9", "3/4"),
    (SchemeParams(3, 3, 2, 1), "8/21", None),
    (SchemeParams(2, 4, 2, 2), "1/2", "1"),
])
def test_rate_and_rho(params, rate, rho):
    scheme = build_scheme(params, np.random.default_rng(8))
    r = audit_rate_and_rho(scheme)
    assert r["rate"] == rate and r["rate_equals_capacity"]
    assert r["rho_equals_min"]
    if rho is not None:
        assert r["rho"] == rho


# --------------------------------------------------------------------- MDS

def test_certify_exhaustive_and_witness():
    F = SchemeParams(2, 3, 2, 1, 7).field
    ok = certify_mds("vandermonde", matrix([[1, 1], [1, 2], [1, 3], [1, 4]], F))
    assert ok.method == "exhaustive" and ok.passed and ok.subsets == 6
    bad = certify_mds("bad", matrix([[1, 1], [2, 2], [1, 3]], F))
    assert not bad.passed and bad.witness == (0, 1) and bad.fingerprint


def test_certify_with_cauchy_certificate():
    F = SchemeParams(2, 3, 2, 1, BIG).field
    cert = sample_cauchy(20, 10, F, np.random.default_rng(9))
    G = vstack([identity(10, F), cert.matrix(F)])
    v = certify_mds("cauchy", G, limit=100, certificate=cert)
    assert v.method == "certificate" and v.passed
    G_bad = G.data.copy()
    G_bad[15, 3] = (int(G_bad[15, 3]) + 1) % BIG
    assert not certify_mds("cauchy", Matrix._wrap(G_bad, F), limit=100, certificate=cert).passed
    assert certify_mds("none", G, limit=100).method == "skipped"


def test_scheme_codes_certified():
    scheme = build_scheme(SchemeParams(3, 4, 3, 1, BIG), np.random.default_rng(10))
    verdicts = certify_scheme_codes(scheme)
    assert [v.name for v in verdicts] == ["C_S", "M_interference_layer_1", "M_interference_layer_2"]
    assert all(v.passed for v in verdicts)
    high = certify_scheme_codes(HighScheme(SchemeParams(2, 4, 2, 2, 7)))
    assert high[0].passed and high[0].method == "exhaustive"


# ------------------------------------------------------------------ report

def test_full_audit_passes_and_serializes():
    report = audit(SchemeParams(2, 4, 3, 2), np.random.default_rng(7), trials=50)
    assert report.passed, report.failures()
    doc = report.to_dict()
    json.dumps(doc)
    assert doc["schema"] == SCHEMA and doc["mode"] == "faithful" and doc["privacy_certified"]
    assert doc["failures"] == []


def test_retry_audit_is_not_privacy_certified():
    report = audit(SchemeParams(2, 4, 3, 2), np.random.default_rng(7), trials=20, retry=True)
    assert report.mode == "retry" and not report.privacy_certified


def test_exhaustive_audit_high_regime():
    scheme = HighScheme(SchemeParams(2, 3, 1, 2, 2), grs=tiny_grs(2))
    report = audit_scheme(scheme, np.random.default_rng(11), trials=20, exhaustive=True)
    assert report.passed
    assert len(report.privacy_exhaustive) == 3


def test_failed_audit_lists_failures():
    b = elemental(7)
    lp = b.G_pairs[0]
    G = lp.G_tilde.data.copy()
    G[4:6] = G[0:2]
    bad = dataclasses.replace(b, G_pairs=(dataclasses.replace(lp, G_tilde=Matrix._wrap(G, lp.G_tilde.field)),))
    report = audit_scheme(LowScheme(b.params, bundle=bad), np.random.default_rng(12), trials=0)
    assert not report.passed
    assert any(f["subset"] == [1, 3] for f in report.failures())
