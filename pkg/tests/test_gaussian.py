import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcm.errors import InvalidArgument
from hcm.gaussian import (
    GaussianState,
    Quadratures,
    amplifier_channel,
    beamsplitter_pair,
    coherent,
    displace,
    fidelity_gaussian,
    loss_channel,
    thermal,
    vacuum,
    wigner,
)

amp = st.floats(-2.0, 2.0)


def overlap_oracle(a: GaussianState, b: GaussianState):
    """Tr(rho sigma) = 4 pi * integral of W_a W_b, on a fine grid."""
    lo = min(a.mean.min(), b.mean.min()) - 12.0
    hi = max(a.mean.max(), b.mean.max()) + 12.0
    ax = np.linspace(lo, hi, 801)
    wa = wigner(a, ax, ax)
    wb = wigner(b, ax, ax)
    return 4.0 * math.pi * float((wa.values * wb.values).sum() * wa.cell_area)


def test_quadrature_alpha_round_trip():
    q = Quadratures.from_alpha(1.115 + 1.095j)
    assert (q.x, q.p) == (2.23, 2.19)
    assert q.alpha == 1.115 + 1.095j


def test_vacuum_and_coherent():
    assert vacuum().is_coherent()
    c = coherent(0.5, -0.25)
    np.testing.assert_array_equal(c.mean, [1.0, -0.5])
    assert c.alpha == 0.5 - 0.25j


@pytest.mark.parametrize("cov", [
    [[1.0, 0.1], [0.2, 1.0]],        # asymmetric
    [[-1.0, 0.0], [0.0, 1.0]],       # not positive
    [[0.5, 0.0], [0.0, 0.5]],        # below the uncertainty bound
])
def test_state_validation(cov):
    with pytest.raises(InvalidArgument):
        GaussianState([0.0, 0.0], cov)


def test_state_rejects_nan_and_is_read_only():
    with pytest.raises(InvalidArgument):
        GaussianState([math.nan, 0.0], np.eye(2))
    s = coherent(1.0)
    with pytest.raises(ValueError):
        s.mean[0] = 3.0


def test_beamsplitter_coherent_inputs():
    a, b = coherent(1.0, 0.5), coherent(-0.3, 0.2)
    o1, o2 = beamsplitter_pair(a, b, 0.3)
    t, r = math.sqrt(0.3), math.sqrt(0.7)
    np.testing.assert_allclose(o1.mean, t * a.mean + r * b.mean)
    np.testing.assert_allclose(o2.mean, r * a.mean - t * b.mean)
    assert o1.is_coherent() and o2.is_coherent()
    # energy conservation of means
    assert np.sum(o1.mean**2 + o2.mean**2) == pytest.approx(np.sum(a.mean**2 + b.mean**2))


def test_beamsplitter_rejects_bad_transmission():
    with pytest.raises(InvalidArgument):
        beamsplitter_pair(vacuum(), vacuum(), 1.2)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), amp, amp)
def test_loss_composes(e1, e2, x, p):
    s = thermal(2.5, x, p)
    twice = loss_channel(loss_channel(s, e1), e2)
    assert twice.allclose(loss_channel(s, e1 * e2), atol=1e-12)


@given(st.floats(1.0, 3.0), amp, amp)
def test_amplifier_keeps_physical(g, x, p):
    s = amplifier_channel(coherent(x, p), g)
    np.testing.assert_allclose(s.cov, (2 * g * g - 1) * np.eye(2), rtol=1e-12)
    assert np.linalg.det(s.cov) >= 1.0


def test_amplifier_rejects_attenuation():
    with pytest.raises(InvalidArgument):
        amplifier_channel(vacuum(), 0.9)


def test_displace():
    s = displace(vacuum(), 1.0, -2.0)
    np.testing.assert_array_equal(s.mean, [1.0, -2.0])


def test_fidelity_identical_is_exactly_one():
    s = coherent(1.115, 1.095)
    assert fidelity_gaussian(s, s) == 1.0


def test_fidelity_measure_and_prepare_is_half():
    assert fidelity_gaussian(vacuum(), thermal(3.0)) == 0.5


@settings(max_examples=25, deadline=None)
@given(amp, amp, amp, amp, st.floats(1.0, 4.0), st.floats(1.0, 4.0))
def test_fidelity_matches_overlap_oracle(ax, ap, bx, bp, vx, vp):
    a = coherent(ax, ap)
    b = GaussianState([bx, bp], np.diag([vx, vp]))
    assert fidelity_gaussian(a, b) == pytest.approx(overlap_oracle(a, b), abs=1e-6)


def test_fidelity_mixed_pair_symmetry_and_bound():
    a = GaussianState([0.3, 0.1], [[1.8, 0.2], [0.2, 1.5]])
    b = GaussianState([0.0, -0.4], [[1.2, 0.0], [0.0, 2.2]])
    f = fidelity_gaussian(a, b)
    assert f == pytest.approx(fidelity_gaussian(b, a), abs=1e-14)
    assert 0.0 < f < 1.0
    assert fidelity_gaussian(a, a) == pytest.approx(1.0, abs=1e-12)


def test_wigner_normalisation_and_marginals():
    s = GaussianState([1.0, -0.5], [[2.0, 0.3], [0.3, 1.5]])
    ax = np.linspace(-11, 11, 441)
    w = wigner(s, ax, ax)
    assert w.integral() == pytest.approx(1.0, abs=1e-9)
    assert wigner(vacuum(), ax, ax).values.max() == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    mx = w.marginal_x()
    # homodyne marginal of x is N(1, 2)
    expected = np.exp(-((ax - 1.0) ** 2) / 4.0) / math.sqrt(4 * math.pi)
    np.testing.assert_allclose(mx, expected, atol=1e-9)
    assert w.argmax() == pytest.approx((1.0, -0.5), abs=0.05)


def test_wigner_rejects_bad_axes():
    with pytest.raises(InvalidArgument):
        wigner(vacuum(), [0.0, 0.0, 1.0], [0.0, 1.0])


def test_coherent_examples():
    np.testing.assert_array_equal(coherent(-2.63, -0.01).mean, [-5.26, -0.02])
    o1, o2 = beamsplitter_pair(coherent(1.0, 0.0), vacuum(), 0.6)
    np.testing.assert_allclose(o1.mean, [2 * math.sqrt(0.6), 0.0])
    np.testing.assert_allclose(o2.mean, [2 * math.sqrt(0.4), 0.0])
    assert loss_channel(thermal(3.0), 0.5).allclose(thermal(2.0))
    assert displace(vacuum(), 2.0, 0.0).allclose(coherent(1.0, 0.0))


@given(st.floats(0.0, 1.0), amp, amp, amp, amp)
def test_beamsplitter_is_invertible(T, ax, ap, bx, bp):
    a, b = coherent(ax, ap), GaussianState([bx, bp], 2.0 * np.eye(2))
    o1, o2 = beamsplitter_pair(a, b, T)
    # this splitter matrix is its own inverse
    r1, r2 = beamsplitter_pair(o1, o2, T)
    np.testing.assert_allclose(r1.mean, a.mean, atol=1e-10)
    np.testing.assert_allclose(r2.mean, b.mean, atol=1e-10)


@given(amp, amp, amp, amp)
def test_coherent_overlap(ax, ap, bx, bp):
    d2 = (ax - bx) ** 2 + (ap - bp) ** 2
    f = fidelity_gaussian(coherent(ax, ap), coherent(bx, bp))
    assert f == pytest.approx(math.exp(-d2), abs=1e-10)


def test_fidelity_unity_gain_clone():
    assert fidelity_gaussian(coherent(1.115, 1.095),
                             GaussianState([2.23, 2.19], 1.825742 * np.eye(2))) == pytest.approx(
        0.707779, abs=1e-6)


def test_wigner_peak_scales_with_det():
    ax = np.linspace(-6, 6, 121)
    v = wigner(vacuum(), ax, ax).values.max()
    assert wigner(thermal(2.0), ax, ax).values.max() == pytest.approx(v / 2, rel=1e-12)
    assert wigner(vacuum(), ax, ax).integral() == pytest.approx(1.0, abs=0.01)
