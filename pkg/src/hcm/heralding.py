"""Measurement-based noiseless amplifier: the heralding filter.

Dual-homodyne outcomes ``alpha_m`` (in coherent-amplitude units, so the
outcome density of a coherent state ``|a0>`` is ``exp(-|alpha_m - a0|^2)/pi``)
are accepted with probability

    p(alpha_m) = exp[|alpha_m|^2 (1 - 1/g'^2)] / M   inside the cutoff,
    p(alpha_m) = 1                                  outside,

with ``M = exp[|alpha_c|^2 (1 - 1/g'^2)]``. Accepted outcomes follow, up to
truncation, a Gaussian with mean ``g'^2 a0`` and per-component variance
``g'^2 / 2``.

Two cutoff geometries are supported. ``radial`` applies the rule above with
the disc ``|alpha_m| < cutoff``. ``rect`` uses separate cutoffs per
quadrature and the separable filter
``prod_q min(1, exp[k (q^2 - c_q^2)])``, which coincides with the radial
formula inside the rectangle (with ``|alpha_c|^2 = c_x^2 + c_p^2``) and is
continuous across its edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, InvalidArgument

__all__ = [
    "GEOMETRIES",
    "DEFAULT_BETA",
    "CONTAINMENT_TARGET",
    "HeraldingFilter",
    "DualHomodyneOutcome",
    "acceptance_probability",
    "herald",
    "cutoff_components",
    "choose_cutoff",
    "filter_from_rule",
    "calibrate_gain",
    "calibrate_with_containment",
    "CalibrationResult",
]

GEOMETRIES = ("radial", "rect")
DEFAULT_BETA = 3.0
CONTAINMENT_TARGET = 0.98


@dataclass(frozen=True)
class HeraldingFilter:
    """Parameters of the heralding function.

    ``cutoff`` is always the radial size ``|alpha_c|``; for the ``rect``
    geometry it is the corner distance ``hypot(cutoff_re, cutoff_im)``.
    """

    g_prime: float
    cutoff: float
    geometry: str = "radial"
    cutoff_re: float | None = None
    cutoff_im: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.g_prime) and self.g_prime >= 1.0):
            raise InvalidArgument(f"g_prime must be >= 1, got {self.g_prime}")
        if self.geometry not in GEOMETRIES:
            raise InvalidArgument(f"unknown cutoff geometry {self.geometry!r}")
        if self.geometry == "rect":
            if self.cutoff_re is None or self.cutoff_im is None:
                raise InvalidArgument("rect geometry needs cutoff_re and cutoff_im")
            if not (self.cutoff_re > 0 and self.cutoff_im > 0):
                raise InvalidArgument("rect cutoffs must be positive")
            object.__setattr__(self, "cutoff", math.hypot(self.cutoff_re, self.cutoff_im))
        if not (math.isfinite(self.cutoff) and self.cutoff > 0):
            raise InvalidArgument(f"cutoff must be positive and finite, got {self.cutoff}")

    @classmethod
    def radial(cls, g_prime: float, cutoff: float) -> HeraldingFilter:
        return cls(g_prime, cutoff)

    @classmethod
    def rect(cls, g_prime: float, cutoff_re: float, cutoff_im: float) -> HeraldingFilter:
        return cls(g_prime, math.hypot(cutoff_re, cutoff_im), "rect", cutoff_re, cutoff_im)

    @property
    def k(self) -> float:
        """Exponent rate ``1 - 1/g'^2``."""
        return 1.0 - 1.0 / (self.g_prime * self.g_prime)

    @property
    def log_norm_m(self) -> float:
        return self.cutoff * self.cutoff * self.k

    @property
    def norm_m(self) -> float:
        return math.exp(self.log_norm_m)

    def as_dict(self) -> dict:
        d = {"g_prime": self.g_prime, "cutoff": self.cutoff, "geometry": self.geometry,
             "norm_m": self.norm_m}
        if self.geometry == "rect":
            d["cutoff_re"] = self.cutoff_re
            d["cutoff_im"] = self.cutoff_im
        return d


@dataclass(frozen=True)
class DualHomodyneOutcome:
    alpha_m: complex
    accepted: bool


def acceptance_probability(filt: HeraldingFilter, alpha_m):
    """Acceptance probability of dual-homodyne outcome(s) ``alpha_m``.

    Vectorised over ``alpha_m``; returns a float for scalar input.
    """
    a = np.asarray(alpha_m, dtype=complex)
    k = filt.k
    if filt.geometry == "radial":
        excess = a.real**2 + a.imag**2 - filt.cutoff**2
        p = np.exp(k * np.minimum(excess, 0.0))
    else:
        ex = np.minimum(a.real**2 - filt.cutoff_re**2, 0.0)
        ep = np.minimum(a.imag**2 - filt.cutoff_im**2, 0.0)
        p = np.exp(k * (ex + ep))
    return float(p) if p.ndim == 0 else p


def herald(filt: HeraldingFilter, alpha_m, u):
    """Heralding decision: accept iff ``u < acceptance_probability``."""
    res = np.asarray(u) < acceptance_probability(filt, alpha_m)
    return bool(res) if res.ndim == 0 else res


def cutoff_components(g_prime: float, alpha_max: complex, beta: float) -> tuple[float, float]:
    """Per-quadrature cutoffs ``g'^2 |Re a_max| + beta sqrt(0.5) g'`` (and Im).

    ``alpha_max`` is the largest amplitude expected at the filter input,
    i.e. already reduced to the reflected, detected port.
    """
    if g_prime < 1.0:
        raise InvalidArgument(f"g_prime must be >= 1, got {g_prime}")
    if not beta > 0:
        raise InvalidArgument(f"beta must be positive, got {beta}")
    alpha_max = complex(alpha_max)
    g2 = g_prime * g_prime
    width = beta * math.sqrt(0.5) * g_prime
    return g2 * abs(alpha_max.real) + width, g2 * abs(alpha_max.imag) + width


def choose_cutoff(g_prime: float, alpha_max: complex, beta: float) -> float:
    """Radial cutoff: Euclidean norm of the per-quadrature cutoffs."""
    return math.hypot(*cutoff_components(g_prime, alpha_max, beta))


def filter_from_rule(g_prime: float, alpha_max: complex, beta: float,
                     geometry: str = "radial") -> HeraldingFilter:
    cx, cp = cutoff_components(g_prime, alpha_max, beta)
    if geometry == "rect":
        return HeraldingFilter.rect(g_prime, cx, cp)
    return HeraldingFilter.radial(g_prime, math.hypot(cx, cp))


@dataclass(frozen=True)
class CalibrationResult:
    filter: HeraldingFilter
    beta: float
    gain: float
    iterations: int


def _mean_gain(g_prime, n_clones, t_s, eta_dh, alpha_ref, rule, geometry):
    from .analytic import postfilter_moments

    alpha_r = math.sqrt(eta_dh * (1.0 - t_s)) * alpha_ref
    if isinstance(rule, tuple):
        beta, alpha_max = rule
        a_max = math.sqrt(eta_dh * (1.0 - t_s)) * alpha_max
        filt = filter_from_rule(g_prime, a_max, beta, geometry)
    else:
        filt = HeraldingFilter.radial(g_prime, rule)
    mean, _ = postfilter_moments(alpha_r, filt)
    lam = math.sqrt((1.0 - t_s) / t_s)
    out = math.sqrt(t_s) * alpha_ref + lam * mean
    # project onto the reference direction; unity means clones keep the input mean
    gain = (out * alpha_ref.conjugate()).real / (abs(alpha_ref) ** 2 * math.sqrt(n_clones))
    return gain, filt


def calibrate_gain(n_clones: int, t_s: float, eta_dh: float, cutoff_rule, alpha_ref,
                   *, geometry: str = "radial", bracket=(1.0, 10.0), tol=1e-6,
                   max_iter: int = 200) -> CalibrationResult:
    """Find ``g'`` that gives unity mean gain from input to each clone.

    ``cutoff_rule`` is either ``(beta, alpha_max)`` with ``alpha_max`` in
    input units (``None`` means use ``alpha_ref``), in which case the cutoff
    is recomputed from the rule for every trial ``g'``, or a number giving a
    fixed radial cutoff. The objective is evaluated by
    deterministic quadrature, so the result does not depend on any seed.
    The feed-forward scale is fixed at ``sqrt((1 - t_s)/t_s)``; detector
    inefficiency is absorbed entirely by ``g'``.
    """
    from .analytic import derive_gains

    derive_gains(n_clones, t_s)
    if not 0.0 < eta_dh <= 1.0:
        raise InvalidArgument(f"eta_dh must lie in (0, 1], got {eta_dh}")
    alpha_ref = complex(alpha_ref)
    if alpha_ref == 0:
        raise CalibrationError("alpha_ref is zero in both quadratures; mean gain is undefined")
    if isinstance(cutoff_rule, (tuple, list)):
        beta, alpha_max = cutoff_rule
        alpha_max = alpha_ref if alpha_max is None else complex(alpha_max)
        rule = (float(beta), alpha_max)
    else:
        beta, rule = None, float(cutoff_rule)

    def f(g):
        return _mean_gain(g, n_clones, t_s, eta_dh, alpha_ref, rule, geometry)

    lo, hi = bracket
    g_lo, _ = f(lo)
    g_hi, _ = f(hi)
    if not (g_lo - 1.0) * (g_hi - 1.0) <= 0.0:
        raise CalibrationError(
            f"no unity-gain root in g' bracket [{lo}, {hi}]: "
            f"mean gain {g_lo:.6g} at {lo}, {g_hi:.6g} at {hi}"
        )
    it = 0
    while True:
        it += 1
        mid = 0.5 * (lo + hi)
        gain, filt = f(mid)
        if abs(gain - 1.0) < tol or it >= max_iter:
            break
        if (gain - 1.0) * (g_lo - 1.0) > 0.0:
            lo, g_lo = mid, gain
        else:
            hi = mid
    if abs(gain - 1.0) >= tol:
        raise CalibrationError(f"bisection stalled at g'={mid:.9g}, gain={gain:.9g}")
    return CalibrationResult(filt, beta, gain, it)


def calibrate_with_containment(n_clones: int, t_s: float, eta_dh: float, alpha_ref,
                               *, beta: float = DEFAULT_BETA, alpha_max=None,
                               geometry: str = "radial", target: float = CONTAINMENT_TARGET,
                               beta_step: float = 0.25, beta_max: float = 12.0
                               ) -> CalibrationResult:
    """Calibrate, raising ``beta`` until ``target`` of accepted outcomes lie inside the cutoff."""
    from .analytic import containment_fraction

    alpha_ref = complex(alpha_ref)
    scale = math.sqrt(eta_dh * (1.0 - t_s))
    while True:
        res = calibrate_gain(n_clones, t_s, eta_dh, (beta, alpha_max), alpha_ref,
                             geometry=geometry)
        if containment_fraction(scale * alpha_ref, res.filter) >= target:
            return res
        beta += beta_step
        if beta > beta_max:
            raise CalibrationError(f"containment {target:.0%} not reached for beta <= {beta_max}")
