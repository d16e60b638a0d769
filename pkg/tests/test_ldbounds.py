import math
from fractions import Fraction

import numpy as np
import pytest

from ldgap.errors import ParameterError, ResourceGuardError
from ldgap.ldbounds import (
    empirical_lowdeg_mmse,
    mmse_lower_bound,
    sw_correlation_sum,
    sw_correlation_sum_exact,
    threshold_curve,
    zeta_value,
)
from ldgap.models import ModelSpec


# ---------------------------------------------------------------------------
# zeta formulas
# ---------------------------------------------------------------------------

def test_zeta_clustering_example():
    # D=2, p=2^19, n=K^2, dbar^4 = 1 -> zeta = max(2^18, 1) / 2^19 = 1/2
    p = 2 ** 19
    spec = ModelSpec.clustering(16, p, 4, delta_bar2=1)
    zv = zeta_value(spec, 2)
    assert zv.zeta == pytest.approx(0.5)
    assert zv.degree_condition_ok  # 2^5 <= 2^19


def test_zeta_zero_signal():
    spec = ModelSpec.clustering(10, 8, 2, lambda2=0)
    assert zeta_value(spec, 3).zeta == 0.0


def test_zeta_biclustering_example():
    # lambda = sigma, D=1, K=L=2, n=p=2 -> zeta = max(2, 2, 1, 1) = 2
    spec = ModelSpec.biclustering(2, 2, 2, 2, lambda2=1)
    zv = zeta_value(spec, 1)
    assert zv.zeta == pytest.approx(2.0)
    assert zv.zeta_prime == pytest.approx((5 * 4 / 2) * max(1.0, 2 / 4))


def test_zeta_sparse_parameterizations_agree():
    # dbar^4/(rho p)^2 == (lambda^2/sigma^2)^2: validated at spec construction,
    # so zeta computed from lambda matches the native dbar form.
    spec = ModelSpec.sparse(50, 40, 2, Fraction(1, 4), delta_bar2=3)
    zv = zeta_value(spec, 2)
    dbar4 = float(spec.delta_bar2) ** 2
    rp = float(spec.rho) * spec.p
    native = dbar4 / rp ** 2 * max(2 ** 14, 2 ** 7 * spec.n,
                                   2 ** 7 * float(spec.rho) ** 2 * spec.p,
                                   float(spec.rho) ** 2 * spec.p * spec.n / 4)
    assert zv.zeta == pytest.approx(native)


def test_zeta_requires_positive_degree():
    with pytest.raises(ParameterError):
        zeta_value(ModelSpec.clustering(4, 4, 2, lambda2=1), 0)


def test_zeta_two_person_rule():
    """Independent re-implementation of the hardness-parameter tables."""

    def independent_zeta(spec, D):
        snr = float(spec.lambda2) / float(spec.sigma2)
        n, p, K, L = spec.n, spec.p, spec.K, spec.L
        if spec.model_kind == "clustering":
            dbar2 = snr * p
            return dbar2 ** 2 / p * max(D ** 18, n / K ** 2)
        if spec.model_kind == "sparse":
            rho = float(spec.rho)
            dbar2 = snr * rho * p
            return dbar2 ** 2 / (rho * p) ** 2 * max(
                D ** 14, D ** 7 * n, D ** 7 * rho ** 2 * p, rho ** 2 * p * n / K ** 2)
        return snr ** 2 * D ** 8 * max(p, n, p * n / K ** 2, p * n / L ** 2)

    specs = [
        ModelSpec.clustering(30, 12, 3, delta_bar2=Fraction(1, 2)),
        ModelSpec.clustering(100, 64, 2, delta_bar2=2),
        ModelSpec.sparse(40, 20, 2, Fraction(1, 5), delta_bar2=1),
        ModelSpec.sparse(60, 30, 3, Fraction(1, 2), delta_bar2=Fraction(5, 2)),
        ModelSpec.biclustering(24, 18, 2, 3, lambda2=Fraction(1, 100)),
        ModelSpec.biclustering(50, 20, 3, 2, lambda2=Fraction(1, 30)),
    ]
    for spec in specs:
        for D in (1, 2, 3):
            assert zeta_value(spec, D).zeta == pytest.approx(independent_zeta(spec, D))


# ---------------------------------------------------------------------------
# MMSE lower bound
# ---------------------------------------------------------------------------

def test_bound_equals_variance_at_zero_zeta():
    spec = ModelSpec.clustering(10, 8, 2, lambda2=0)
    rep = mmse_lower_bound(spec, 3)
    assert rep.zeta == 0.0
    assert rep.mmse_lower == float(spec.var_x) == 0.25


def test_bound_k10_fixture():
    # K=10, D=1, n=K^2=100, p=100, dbar^2=1 -> zeta = 0.01
    spec = ModelSpec.clustering(100, 100, 10, delta_bar2=1)
    rep = mmse_lower_bound(spec, 1)
    assert rep.zeta == pytest.approx(0.01)
    assert rep.mmse_lower == pytest.approx(0.08986, abs=1e-5)
    assert not rep.clamped


def test_bound_clamped_negative():
    # K=2, zeta = 0.2 > ~0.185 vacuity point -> clamped to 0 with flag
    spec = ModelSpec.clustering(4, 5, 2, delta_bar2=1)
    rep = mmse_lower_bound(spec, 1)
    assert rep.zeta == pytest.approx(0.2)
    assert rep.mmse_lower == 0.0 and rep.clamped


def test_bound_not_clamped_below_vacuity():
    # K=2, zeta = 0.15 < vacuity point (~0.185) -> strictly positive
    dbar2 = math.sqrt(0.15 * 5)  # zeta = dbar^4 / p with n = K^2, p = 5
    spec = ModelSpec.clustering(4, 5, 2, delta_bar2=dbar2)
    rep = mmse_lower_bound(spec, 1)
    assert rep.zeta == pytest.approx(0.15, rel=1e-9)
    assert rep.mmse_lower > 0 and not rep.clamped


def test_bound_vacuous_above_one():
    spec = ModelSpec.clustering(4, 5, 2, delta_bar2=10)
    rep = mmse_lower_bound(spec, 1)
    assert rep.vacuous and rep.mmse_lower == 0.0


def test_bound_monotone_in_zeta():
    prev = math.inf
    for dbar2 in ("0", "0.3", "0.5", "0.7", "0.9"):
        spec = ModelSpec.clustering(9, 100, 3, delta_bar2=Fraction(dbar2))
        rep = mmse_lower_bound(spec, 1)
        assert rep.zeta < 1
        assert rep.mmse_lower <= prev + 1e-15
        prev = rep.mmse_lower


def test_bound_biclustering_takes_best_of_two():
    spec = ModelSpec.biclustering(20, 30, 2, 2, lambda2=Fraction(1, 10 ** 5))
    rep = mmse_lower_bound(spec, 1)
    assert rep.zeta_prime is not None
    assert rep.mmse_lower > 0
    assert any("bound-active" in f for f in rep.regime_flags)


# ---------------------------------------------------------------------------
# degree-D correlation sum
# ---------------------------------------------------------------------------

def test_sw_sum_degree_zero():
    spec = ModelSpec.clustering(3, 2, 2, lambda2=1)
    assert sw_correlation_sum_exact(spec, 0) == Fraction(1, 4)


def test_sw_sum_zero_signal():
    spec = ModelSpec.clustering(3, 2, 2, lambda2=0)
    assert sw_correlation_sum_exact(spec, 4) == Fraction(1, 4)


def test_sw_sum_tiny_clustering_fixture():
    # n=2, p=1, K=2, D=2, lambda=1: 1/4 + (lambda^2/4)^2 / 1 = 1/4 + 1/16
    spec = ModelSpec.clustering(2, 1, 2, lambda2=1)
    assert sw_correlation_sum_exact(spec, 2) == Fraction(1, 4) + Fraction(1, 16)


def test_sw_sum_decreasing_in_lambda():
    hi = sw_correlation_sum(ModelSpec.clustering(3, 2, 2, lambda2=1), 2)
    lo = sw_correlation_sum(ModelSpec.clustering(3, 2, 2, lambda2=Fraction(1, 4)), 2)
    assert hi > lo >= 0.25


def test_sw_sum_guard():
    with pytest.raises(ResourceGuardError):
        sw_correlation_sum(ModelSpec.clustering(5, 2, 2, lambda2=1), 2)


# ---------------------------------------------------------------------------
# empirical low-degree MMSE
# ---------------------------------------------------------------------------

def test_empirical_degree_zero_is_variance():
    spec = ModelSpec.clustering(3, 2, 2, lambda2=1)
    mse, se = empirical_lowdeg_mmse(spec, 0, 2000, 2000, seed=1)
    assert abs(mse - 0.25) < 5 * se + 0.01


def test_empirical_zero_signal_is_variance():
    spec = ModelSpec.clustering(3, 2, 2, lambda2=0)
    mse, se = empirical_lowdeg_mmse(spec, 2, 4000, 4000, seed=2)
    assert mse <= 0.25 + 3 * se
    assert mse >= 0.25 - 5 * se - 0.01


def test_empirical_guards():
    spec = ModelSpec.clustering(3, 2, 2, lambda2=1)
    with pytest.raises(ParameterError):
        empirical_lowdeg_mmse(spec, 2, 100, 100, seed=0)  # too few samples
    wide = ModelSpec.clustering(30, 30, 2, lambda2=1)
    with pytest.raises(ResourceGuardError):
        empirical_lowdeg_mmse(wide, 3, 10 ** 6, 10, seed=0)


# ---------------------------------------------------------------------------
# threshold curves
# ---------------------------------------------------------------------------

def test_clustering_threshold_regime_reduction():
    # K^2 >= n: min(sqrt(pK^2/n), sqrt(p)) = sqrt(p)
    spec = ModelSpec.clustering(9, 25, 3, lambda2=1)
    row = threshold_curve(spec)
    assert row.comp_threshold == pytest.approx(1 + math.sqrt(25))
    assert row.stat_threshold == pytest.approx(1 + math.sqrt(25 * 3 / 9))


def test_sparse_threshold_second_condition_binds():
    # s_bar >= sqrt(p min(K^2, n)): ambient barrier is the binding one
    n, p, K = 16, 16, 2
    spec = ModelSpec.sparse(n, p, K, 1, lambda2=1)  # s_bar = 16 >= sqrt(16*4)=8
    row = threshold_curve(spec)
    ambient = 1 + min(math.sqrt(p * K * K / n), math.sqrt(p))
    assert row.comp_threshold == pytest.approx(ambient)
    assert row.regime == "ambient-barrier"


def test_bicluster_threshold_dichotomy():
    # columns easy (huge column separation): row threshold in dimension L
    easy = ModelSpec.biclustering(100, 100, 2, 2, lambda2=10)
    row = threshold_curve(easy)
    assert row.regime == "columns-easy"
    assert row.comp_threshold == pytest.approx(
        1 + min(math.sqrt(2), math.sqrt(2 * 4 / 100)))
    # columns hard: ambient clustering threshold
    hard = ModelSpec.biclustering(100, 100, 2, 2, lambda2=Fraction(1, 10 ** 6))
    row2 = threshold_curve(hard)
    assert row2.regime == "columns-hard"
    assert row2.comp_threshold == pytest.approx(
        1 + min(math.sqrt(100 * 4 / 100), math.sqrt(100)))
    assert row2.comp_threshold > row.comp_threshold
