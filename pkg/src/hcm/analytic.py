"""Closed-form relations of the hybrid cloning machine.

Gain bookkeeping, ideal clone moments, fidelity formulas and cloning
limits, plus quadrature evaluation of the heralding filter acting on a
coherent dual-homodyne distribution (success probability and the moments of
accepted outcomes).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize, special

from .errors import InvalidArgument, NumericError, RegimeError
from .gaussian import GaussianState, Quadratures, amplifier_channel, coherent, loss_channel
from .heralding import HeraldingFilter

__all__ = [
    "EPS",
    "GainSet",
    "CloneMoments",
    "FilteredDistribution",
    "derive_gains",
    "feedforward_scale",
    "mean_gain_identity",
    "t_s_for_g_prime",
    "clone_moments_ideal",
    "equivalent_concatenation_moments",
    "fidelity_unity",
    "fidelity_unity_lossy",
    "fidelity_max",
    "fidelity_nonunity",
    "fidelity_coherent_input",
    "no_cloning_limit",
    "MEASURE_AND_PREPARE_LIMIT",
    "filtered_distribution",
    "success_probability",
    "postfilter_moments",
    "containment_fraction",
    "pipeline_clone_states",
]

# slack on regime boundaries, which sit exactly on the no-cloning limit
EPS = 1e-9
MEASURE_AND_PREPARE_LIMIT = 0.5


@dataclass(frozen=True)
class GainSet:
    """Gains of an ``n_clones`` hybrid cloner at tap-off transmission ``t_s``."""

    g_dla: float
    g_nla: float
    g_nla_prime: float
    g_xp: float
    g_total: float
    t_s: float
    n_clones: int

    @property
    def tap_transmission(self) -> float:
        """Transmission ``1/g_dla^2`` of the all-deterministic feed-forward amplifier."""
        return 1.0 / self.g_dla**2

    @property
    def g_feedforward(self) -> float:
        return math.sqrt(2.0 * (self.g_dla**2 - 1.0))

    @property
    def g_rescale(self) -> float:
        return 1.0 / self.g_nla_prime

    def as_dict(self) -> dict:
        return {
            "n_clones": self.n_clones,
            "t_s": self.t_s,
            "g_dla": self.g_dla,
            "g_nla": self.g_nla,
            "g_nla_prime": self.g_nla_prime,
            "g_xp": self.g_xp,
            "g_total": self.g_total,
            "g_dla_sq": self.g_dla**2,
            "g_nla_sq": self.g_nla**2,
            "g_nla_prime_sq": self.g_nla_prime**2,
        }


def _check_n(n_clones):
    if isinstance(n_clones, bool) or int(n_clones) != n_clones or n_clones < 1:
        raise InvalidArgument(f"n_clones must be a positive integer, got {n_clones!r}")
    return int(n_clones)


def derive_gains(n_clones: int, t_s: float) -> GainSet:
    """Unity-gain operating point for ``n_clones`` clones and tap-off ``t_s``.

    ``t_s = 1/n_clones`` is accepted as the pure-deterministic boundary
    (``g_nla = 1``); anything below it raises :class:`RegimeError`.
    """
    n = _check_n(n_clones)
    if not math.isfinite(t_s) or t_s <= 0.0 or t_s >= 1.0:
        raise InvalidArgument(f"t_s must lie in (0, 1), got {t_s}")
    if t_s < 1.0 / n - EPS:
        raise RegimeError(
            f"t_s={t_s} < 1/N={1.0 / n:.6g}: hybrid operation requires g_NLA > 1"
        )
    g_dla = (n / t_s) ** 0.25
    g_nla = math.sqrt(t_s) * g_dla
    g_nla_prime = math.sqrt(t_s * (g_dla**2 - 1.0) / (1.0 - t_s))
    g_xp = math.sqrt(2.0 * (1.0 / t_s - 1.0))
    g_total = g_nla * g_dla / math.sqrt(n)
    return GainSet(g_dla, g_nla, g_nla_prime, g_xp, g_total, t_s, n)


def feedforward_scale(t_s: float) -> float:
    """Amplitude-units feed-forward coefficient ``g_xp / sqrt(2)``."""
    return math.sqrt((1.0 - t_s) / t_s)


def mean_gain_identity(gains: GainSet) -> float:
    """``sqrt(t_s) + lambda g'^2 sqrt(1 - t_s)``; equals ``sqrt(N)`` at unity gain."""
    t = gains.t_s
    return math.sqrt(t) + feedforward_scale(t) * gains.g_nla_prime**2 * math.sqrt(1.0 - t)


def t_s_for_g_prime(n_clones: int, g_prime: float) -> float:
    """Invert ``g'^2 = (sqrt(N t) - t)/(1 - t)`` for the tap-off transmission."""
    n = _check_n(n_clones)
    if n < 2:
        raise RegimeError("no hybrid regime for a single clone")
    if g_prime < 1.0:
        raise InvalidArgument(f"g_prime must be >= 1, got {g_prime}")
    target = g_prime * g_prime
    if target - 1.0 < 1e-15:
        return 1.0 / n

    def h(t):
        return (math.sqrt(n * t) - t) / (1.0 - t) - target

    return optimize.brentq(h, 1.0 / n, 1.0 - 1e-15, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class CloneMoments:
    mean: Quadratures
    variance_x: float
    variance_p: float
    n_clones: int

    def state(self) -> GaussianState:
        return GaussianState(self.mean.as_array(), np.diag([self.variance_x, self.variance_p]))


def _as_quadratures(alpha_in) -> Quadratures:
    if isinstance(alpha_in, Quadratures):
        return alpha_in
    return Quadratures.from_alpha(complex(alpha_in))


def clone_moments_ideal(gains: GainSet, alpha_in) -> CloneMoments:
    """Clone moments at unity gain: input mean, variance ``1 + 2(g_dla^2 - 1)/N``."""
    q = _as_quadratures(alpha_in)
    var = 1.0 + 2.0 * (gains.g_dla**2 - 1.0) / gains.n_clones
    return CloneMoments(q, var, var, gains.n_clones)


def equivalent_concatenation_moments(gains: GainSet, alpha_in) -> CloneMoments:
    """Moments through the conceptual chain ideal NLA -> DLA -> N-port split.

    Built from the phase-space channels in :mod:`hcm.gaussian`, independently
    of the closed form in :func:`clone_moments_ideal`.
    """
    derive_gains(gains.n_clones, gains.t_s)
    q = _as_quadratures(alpha_in)
    s = coherent(q.x / 2.0, q.p / 2.0)
    # ideal NLA on a coherent state: amplitude scales, state stays coherent
    s = GaussianState(gains.g_nla * s.mean, s.cov)
    s = amplifier_channel(s, max(gains.g_dla, 1.0))
    # one port of a balanced N-splitter fed with N-1 vacua is a loss channel
    s = loss_channel(s, 1.0 / gains.n_clones)
    return CloneMoments(s.quadratures, float(s.cov[0, 0]), float(s.cov[1, 1]), gains.n_clones)


def fidelity_unity(n_clones: int, t_s: float) -> float:
    """Clone fidelity at unity gain, ``1 / (1 + (g_dla^2 - 1)/N)``."""
    g = derive_gains(n_clones, t_s)
    return 1.0 / (1.0 + (g.g_dla**2 - 1.0) / g.n_clones)


def fidelity_unity_lossy(n_clones: int, t_s: float, eta_dh: float) -> float:
    """Unity-gain fidelity with dual-homodyne efficiency ``eta_dh`` and no cutoff.

    With the loss compensated by the noiseless filter gain, the
    deterministic excess noise grows by ``1/sqrt(eta_dh)``.
    """
    if not 0.0 < eta_dh <= 1.0:
        raise InvalidArgument(f"eta_dh must lie in (0, 1], got {eta_dh}")
    g = derive_gains(n_clones, t_s)
    return 1.0 / (1.0 + (g.g_dla**2 - 1.0) / (g.n_clones * math.sqrt(eta_dh)))


def fidelity_max(n_clones: int) -> float:
    """Limit of :func:`fidelity_unity` as ``t_s -> 1``."""
    n = _check_n(n_clones)
    return 1.0 / (1.0 + (math.sqrt(n) - 1.0) / n)


def fidelity_nonunity(n_clones: int, g_dla: float, g_total: float, alpha_in) -> float:
    """Clone fidelity when the total gain ``g_total`` differs from one."""
    n = _check_n(n_clones)
    if g_dla < 1.0 or g_total <= 0.0:
        raise InvalidArgument("need g_dla >= 1 and g_total > 0")
    a2 = abs(_as_quadratures(alpha_in).alpha) ** 2
    v = 1.0 + (g_dla**2 - 1.0) / n
    return math.exp(-((g_total - 1.0) ** 2) * a2 / v) / v


def fidelity_coherent_input(x_in, p_in, x_out, p_out, var_x, var_p) -> float:
    """Fidelity of a diagonal Gaussian clone against the coherent input ``(x_in, p_in)``."""
    return (
        2.0
        / math.sqrt((var_x + 1.0) * (var_p + 1.0))
        * math.exp(-0.5 * ((x_out - x_in) ** 2 / (var_x + 1.0) + (p_out - p_in) ** 2 / (var_p + 1.0)))
    )


def no_cloning_limit(n_clones: int) -> Fraction:
    """Gaussian 1 -> N cloning limit ``N / (2N - 1)`` as an exact rational."""
    n = _check_n(n_clones)
    return Fraction(n, 2 * n - 1)


# ---------------------------------------------------------------------------
# Heralding filter acting on the dual-homodyne distribution of a coherent state


@dataclass(frozen=True)
class FilteredDistribution:
    """Accepted-outcome statistics of a filter fed with coherent amplitude ``alpha0``.

    ``mean`` and ``cov`` are in amplitude units over (Re, Im).
    """

    log_success: float
    mean: complex
    cov: np.ndarray
    inside_fraction: float

    @property
    def success(self) -> float:
        return math.exp(self.log_success)


_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=400)
_TAIL = 14.0  # integration reach past the Gaussian peak, in units of exp(-x^2)


def _quad_vec(f, a, b, points=()):
    pts = sorted(p for p in set(points) if a < p < b)
    edges = [a, *pts, b]
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        val, e = integrate.quad_vec(f, lo, hi, **_QUAD_OPTS)
        total = total + val
        err = err + e
    return np.asarray(total), float(err)


def _check_err(values, err, what):
    scale = float(np.max(np.abs(values)))
    if not np.all(np.isfinite(values)) or err > 1e-9 * max(scale, 1e-300):
        raise NumericError(f"quadrature for {what} did not converge (err={err:.3g})")


def _radial(alpha0: complex, filt: HeraldingFilter) -> FilteredDistribution:
    a = abs(alpha0)
    phi = cmath.phase(alpha0) if a > 0 else 0.0
    c, k = filt.cutoff, filt.k
    # peak exponents of the inside and outside integrands, for scaling
    r_in = min(max(a / (1.0 - k), 0.0), c)
    e_in = k * (r_in**2 - c * c) - (r_in - a) ** 2
    r_out = max(a, c)
    e_out = -((r_out - a) ** 2)
    shift = max(e_in, e_out)

    def base(r, log_filter):
        b = 2.0 * a * r
        w = 2.0 * r * np.exp(log_filter - (r - a) ** 2 - shift)
        return np.array([
            w * special.ive(0, b),
            w * r * special.ive(1, b),
            w * r * r * special.ive(0, b),
            w * r * r * special.ive(2, b),
        ])

    inner, err_i = _quad_vec(lambda r: base(r, k * (r * r - c * c)), 0.0, c, points=(r_in,))
    r_hi = max(a, c) + _TAIL
    outer, err_o = _quad_vec(lambda r: base(r, 0.0), c, r_hi, points=(a,))
    tot = inner + outer
    _check_err(tot, err_i + err_o, "radial filter moments")
    mass, m1, s0, s2 = tot
    if mass <= 0.0:
        raise NumericError("accepted mass underflowed")
    mean = cmath.rect(m1 / mass, phi)
    exx = 0.5 * (s0 + s2 * math.cos(2 * phi)) / mass
    epp = 0.5 * (s0 - s2 * math.cos(2 * phi)) / mass
    exp_ = 0.5 * s2 * math.sin(2 * phi) / mass
    cov = np.array([
        [exx - mean.real**2, exp_ - mean.real * mean.imag],
        [exp_ - mean.real * mean.imag, epp - mean.imag**2],
    ])
    return FilteredDistribution(shift + math.log(mass), mean, cov, float(inner[0] / mass))


def _axis(mu: float, c: float, k: float):
    """Mass, first and second moment (scaled) along one quadrature, plus log scale."""
    q_in = min(max(mu / (1.0 - k), -c), c)
    e_in = k * (q_in**2 - c * c) - (q_in - mu) ** 2
    e_out = 0.0 if abs(mu) >= c else -((c - abs(mu)) ** 2)
    shift = max(e_in, e_out)

    def f(q, log_filter):
        w = np.exp(log_filter - (q - mu) ** 2 - shift) / math.sqrt(math.pi)
        return np.array([w, w * q, w * q * q])

    inner, e1 = _quad_vec(lambda q: f(q, k * (q * q - c * c)), -c, c, points=(q_in,))
    lo, hi = min(-c, mu) - _TAIL, max(c, mu) + _TAIL
    left, e2 = _quad_vec(lambda q: f(q, 0.0), lo, -c, points=(mu,))
    right, e3 = _quad_vec(lambda q: f(q, 0.0), c, hi, points=(mu,))
    tot = inner + left + right
    _check_err(tot, e1 + e2 + e3, "rect filter moments")
    return tot, float(inner[0] / tot[0]), shift


def _rect(alpha0: complex, filt: HeraldingFilter) -> FilteredDistribution:
    k = filt.k
    tx, fx, sx = _axis(alpha0.real, filt.cutoff_re, k)
    tp, fp, sp = _axis(alpha0.imag, filt.cutoff_im, k)
    if tx[0] <= 0.0 or tp[0] <= 0.0:
        raise NumericError("accepted mass underflowed")
    mx, mp = tx[1] / tx[0], tp[1] / tp[0]
    cov = np.diag([tx[2] / tx[0] - mx * mx, tp[2] / tp[0] - mp * mp])
    log_s = sx + sp + math.log(tx[0]) + math.log(tp[0])
    return FilteredDistribution(log_s, complex(mx, mp), cov, fx * fp)


def filtered_distribution(alpha0, filt: HeraldingFilter) -> FilteredDistribution:
    """Statistics of accepted dual-homodyne outcomes for input amplitude ``alpha0``.

    The outcome density ``exp(-|alpha - alpha0|^2)/pi`` is integrated against
    the filter separately inside and outside the cutoff so the seam at the
    cutoff never sits inside a quadrature panel. For the radial geometry the
    angular integral is done exactly (modified Bessel functions), leaving an
    adaptive radial quadrature; the rect geometry factorises into two 1-D
    quadratures.
    """
    alpha0 = complex(alpha0)
    if not (math.isfinite(alpha0.real) and math.isfinite(alpha0.imag)):
        raise InvalidArgument("alpha0 must be finite")
    if filt.geometry == "rect":
        return _rect(alpha0, filt)
    return _radial(alpha0, filt)


def success_probability(alpha0, filt: HeraldingFilter) -> float:
    """Heralding probability for a coherent amplitude ``alpha0`` at the filter input.

    ``alpha0`` is the amplitude that reaches the dual-homodyne detector, so
    the caller applies the tap-off and detector efficiency factors.
    """
    return min(filtered_distribution(alpha0, filt).success, 1.0)


def postfilter_moments(alpha0, filt: HeraldingFilter) -> tuple[complex, np.ndarray]:
    """Mean (complex) and 2x2 covariance of accepted outcomes, amplitude units."""
    d = filtered_distribution(alpha0, filt)
    return d.mean, d.cov


def containment_fraction(alpha0, filt: HeraldingFilter) -> float:
    """Fraction of accepted outcomes that fall inside the cutoff region."""
    return filtered_distribution(alpha0, filt).inside_fraction


def pipeline_clone_states(n_clones: int, t_s: float, alpha_in, filt: HeraldingFilter,
                          eta_dh: float = 1.0, port_transmissions=None) -> list[GaussianState]:
    """Ensemble state of every clone predicted by quadrature for the full pipeline.

    Accounts for the finite cutoff and detector efficiency exactly; the Monte
    Carlo engine samples the same model shot by shot.
    """
    n = _check_n(n_clones)
    ports = np.full(n, 1.0 / n) if port_transmissions is None else np.asarray(port_transmissions)
    alpha_in = complex(alpha_in)
    alpha_r = math.sqrt(eta_dh * (1.0 - t_s)) * alpha_in
    mean_m, cov_m = postfilter_moments(alpha_r, filt)
    lam = feedforward_scale(t_s)
    amp = math.sqrt(t_s) * alpha_in + lam * mean_m
    states = []
    for t in ports:
        mean = 2.0 * math.sqrt(t) * np.array([amp.real, amp.imag])
        cov = np.eye(2) + 4.0 * t * lam * lam * cov_m
        states.append(GaussianState(mean, cov))
    return states
