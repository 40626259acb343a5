import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcm.errors import InsufficientData, InvalidArgument
from hcm.estimators import (
    CloneStatistics,
    QuadratureStats,
    bootstrap_fidelity_distribution,
    correct_efficiency,
    estimate_fidelity,
)
from hcm.gaussian import coherent, thermal


def _stats(x, p, eta=1.0):
    return CloneStatistics(QuadratureStats.from_samples(x), QuadratureStats.from_samples(p),
                           len(x), len(x), eta)


def test_quadrature_stats_match_numpy():
    v = np.random.default_rng(0).normal(3.0, 1.5, 5000)
    q = QuadratureStats.from_samples(v)
    assert q.count == 5000
    assert q.mean == pytest.approx(v.mean(), rel=1e-12)
    assert q.var == pytest.approx(v.var(ddof=1), rel=1e-10)
    assert q.m4 == pytest.approx(np.mean((v - v.mean()) ** 4), rel=1e-9)
    assert q.mean_se == pytest.approx(math.sqrt(v.var(ddof=1) / 5000))


@settings(max_examples=30)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=60), st.floats(-100, 100))
def test_power_sums_reference_invariance(vals, ref):
    v = np.array(vals)
    d = v - ref
    a = QuadratureStats.from_power_sums(v.size, ref, *(float(np.sum(d**k)) for k in (1, 2, 3, 4)))
    b = QuadratureStats.from_samples(v)
    scale = 1.0 + float(np.abs(v).max()) + abs(ref)
    assert a.mean == pytest.approx(b.mean, abs=1e-9 * scale)
    assert a.var == pytest.approx(b.var, abs=1e-7 * scale**2)


def test_empty_stats():
    q = QuadratureStats.from_samples([])
    assert q.count == 0 and math.isnan(q.mean)


def test_correction_formula():
    st_ = _stats([1.0, 2.0, 3.0], [0.0, 1.0, -1.0])
    c = correct_efficiency(st_, 0.9)
    assert c.mean_x == pytest.approx(2.0 / math.sqrt(0.9))
    assert c.var_x == pytest.approx(1.0 / 0.9 - 0.1 / 0.9)
    # replacing, not compounding
    assert correct_efficiency(c, 0.9).var_x == c.var_x
    with pytest.raises(InvalidArgument):
        correct_efficiency(st_, 0.0)
    with pytest.raises(InvalidArgument):
        correct_efficiency(st_, 1.1)


def test_efficiency_round_trip():
    """Loss on the samples followed by correction recovers the lossless moments."""
    rng = np.random.default_rng(4)
    n, eta = 400_000, 0.8
    mean, var = 1.7, 1.9
    clean = rng.normal(mean, math.sqrt(var), n)
    lossy = math.sqrt(eta) * rng.normal(mean, math.sqrt(var), n) + math.sqrt(1 - eta) * rng.standard_normal(n)
    a = _stats(clean, clean)
    b = correct_efficiency(_stats(lossy, lossy), eta)
    se_m = math.sqrt(var / n) * 2
    se_v = var * math.sqrt(2 / n) * 2
    assert abs(a.mean_x - b.mean_x) < 3 * se_m
    assert abs(a.var_x - b.var_x) < 3 * se_v


def test_estimate_fidelity_value_and_errors():
    rng = np.random.default_rng(2)
    x = rng.normal(1.0, math.sqrt(1.8), 200_000)
    p = rng.normal(0.0, math.sqrt(1.8), 200_000)
    est = estimate_fidelity(_stats(x, p), coherent(0.5, 0.0))
    assert est.value == pytest.approx(2 / 2.8, abs=3 * est.std_dev + 1e-3)
    assert est.n_samples == 200_000
    with pytest.raises(InsufficientData):
        estimate_fidelity(_stats([1.0], [1.0]), coherent(0.5))
    with pytest.raises(InvalidArgument):
        estimate_fidelity(_stats(x, p), thermal(2.0))


def test_fidelity_std_adds_efficiency_systematic():
    rng = np.random.default_rng(3)
    x, p = rng.normal(0, 1.3, 50_000), rng.normal(0, 1.3, 50_000)
    ideal = estimate_fidelity(_stats(x, p, 1.0), coherent(0, 0))
    lossy = estimate_fidelity(_stats(x, p, 0.9), coherent(0, 0))
    none = estimate_fidelity(_stats(x, p, 0.9), coherent(0, 0), eta_sigma=0.0)
    assert none.std_dev < lossy.std_dev
    # purely statistical when no correction is applied
    assert ideal.std_dev == pytest.approx(
        estimate_fidelity(_stats(x, p, 1.0), coherent(0, 0), eta_sigma=0.5).std_dev)


def test_bootstrap_distribution():
    rng = np.random.default_rng(6)
    x = rng.normal(2.0, math.sqrt(1.8), 40_000)
    p = rng.normal(-1.0, math.sqrt(1.8), 40_000)
    d = bootstrap_fidelity_distribution((x, p), coherent(1.0, -0.5), 40, n_resamples=400, seed=1)
    assert d.values.shape == (400,)
    assert d.counts.sum() == 400
    assert d.mean == pytest.approx(2 / 2.8, abs=0.01)
    assert 0 < d.std < 0.01
    assert d.mass_above(0.5) == 1.0
    again = bootstrap_fidelity_distribution((x, p), coherent(1.0, -0.5), 40, n_resamples=400, seed=1)
    np.testing.assert_array_equal(d.values, again.values)


def test_bootstrap_errors():
    with pytest.raises(InvalidArgument):
        bootstrap_fidelity_distribution(([0.0] * 100, [0.0] * 100), coherent(0), 5)
    with pytest.raises(InsufficientData):
        bootstrap_fidelity_distribution(([0.0] * 5, [0.0] * 5), coherent(0), 10)
