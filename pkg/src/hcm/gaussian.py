"""Single-mode Gaussian phase-space algebra.

Conventions used throughout the package:

* quadratures ``x`` and ``p`` are normalised so that the vacuum has unit
  variance in each;
* a coherent amplitude relates to quadrature means by ``alpha = (x + i p) / 2``.

All states are immutable. Only single-mode marginals are tracked, which is
exact for the product coherent states that appear in the cloning pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Quadratures",
    "GaussianState",
    "WignerGrid",
    "vacuum",
    "coherent",
    "thermal",
    "beamsplitter_pair",
    "loss_channel",
    "amplifier_channel",
    "displace",
    "fidelity_gaussian",
    "wigner",
]

_SYM_TOL = 1e-12
_PHYS_TOL = 1e-9


def _det2(m) -> float:
    # exact for diagonal matrices, unlike the LU route of np.linalg.det
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def _finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgument(f"non-finite value {v!r}")


@dataclass(frozen=True)
class Quadratures:
    """A pair of quadrature values in vacuum-normalised units."""

    x: float
    p: float

    def __post_init__(self):
        _finite(self.x, self.p)

    @classmethod
    def from_alpha(cls, alpha: complex) -> Quadratures:
        alpha = complex(alpha)
        return cls(2.0 * alpha.real, 2.0 * alpha.imag)

    @property
    def alpha(self) -> complex:
        return complex(self.x / 2.0, self.p / 2.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.p])


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Single-mode Gaussian state given by its mean and 2x2 covariance.

    The covariance must be symmetric, positive definite, and satisfy
    ``det(cov) >= 1`` (uncertainty bound in these units).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(2)
        cov = np.array(self.cov, dtype=float).reshape(2, 2)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidArgument("state has non-finite entries")
        if abs(cov[0, 1] - cov[1, 0]) > _SYM_TOL:
            raise InvalidArgument("covariance is not symmetric")
        det = _det2(cov)
        if cov[0, 0] <= 0 or det <= 0:
            raise InvalidArgument("covariance is not positive definite")
        if det < 1.0 - _PHYS_TOL:
            raise InvalidArgument(f"covariance violates the uncertainty bound (det={det:.6g} < 1)")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def quadratures(self) -> Quadratures:
        return Quadratures(float(self.mean[0]), float(self.mean[1]))

    @property
    def alpha(self) -> complex:
        return complex(self.mean[0] / 2.0, self.mean[1] / 2.0)

    def is_coherent(self, tol=1e-12) -> bool:
        return bool(np.allclose(self.cov, np.eye(2), atol=tol, rtol=0))

    def allclose(self, other: GaussianState, atol=1e-12) -> bool:
        return bool(
            np.allclose(self.mean, other.mean, atol=atol, rtol=0)
            and np.allclose(self.cov, other.cov, atol=atol, rtol=0)
        )

    def __repr__(self):
        return f"GaussianState(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def vacuum() -> GaussianState:
    return GaussianState(np.zeros(2), np.eye(2))


def coherent(alpha_re: float, alpha_im: float = 0.0) -> GaussianState:
    """Coherent state ``|alpha_re + i alpha_im>``; means are twice the amplitude."""
    _finite(alpha_re, alpha_im)
    return GaussianState(np.array([2.0 * alpha_re, 2.0 * alpha_im]), np.eye(2))


def thermal(variance: float, x: float = 0.0, p: float = 0.0) -> GaussianState:
    """Displaced thermal state with equal quadrature variances ``variance >= 1``."""
    return GaussianState(np.array([x, p]), variance * np.eye(2))


def beamsplitter_pair(a: GaussianState, b: GaussianState, T: float):
    """Mix two independent modes on a beam splitter of transmission ``T``.

    Output means are ``sqrt(T) a + sqrt(1-T) b`` and ``sqrt(1-T) a - sqrt(T) b``.
    Only the output marginals are returned. The dropped cross-correlation is
    ``sqrt(T(1-T)) (a.cov - b.cov)``, so nothing is lost when both inputs have
    the same covariance, e.g. two coherent states.
    """
    _finite(T)
    if not 0.0 <= T <= 1.0:
        raise InvalidArgument(f"transmission must lie in [0, 1], got {T}")
    t, r = math.sqrt(T), math.sqrt(1.0 - T)
    out1 = GaussianState(t * a.mean + r * b.mean, T * a.cov + (1.0 - T) * b.cov)
    out2 = GaussianState(r * a.mean - t * b.mean, (1.0 - T) * a.cov + T * b.cov)
    return out1, out2


def loss_channel(s: GaussianState, eta: float) -> GaussianState:
    """Pure-loss channel of transmission ``eta``."""
    _finite(eta)
    if not 0.0 < eta <= 1.0:
        raise InvalidArgument(f"efficiency must lie in (0, 1], got {eta}")
    return GaussianState(math.sqrt(eta) * s.mean, eta * s.cov + (1.0 - eta) * np.eye(2))


def amplifier_channel(s: GaussianState, gain: float) -> GaussianState:
    """Ideal phase-insensitive amplifier with amplitude gain ``gain >= 1``.

    Maps ``cov -> gain**2 cov + (gain**2 - 1) I``, the minimum added noise
    allowed for a deterministic amplifier.
    """
    _finite(gain)
    if gain < 1.0:
        raise InvalidArgument(f"amplifier gain must be >= 1, got {gain}")
    g2 = gain * gain
    return GaussianState(gain * s.mean, g2 * s.cov + (g2 - 1.0) * np.eye(2))


def displace(s: GaussianState, dx: float, dp: float) -> GaussianState:
    _finite(dx, dp)
    return GaussianState(s.mean + np.array([dx, dp]), s.cov)


def fidelity_gaussian(rho_i: GaussianState, rho_o: GaussianState) -> float:
    """Uhlmann fidelity between two single-mode Gaussian states.

    Uses the closed form

        F = 2 / (sqrt(D + d) - sqrt(d)) * exp(-1/2 u^T (V_i + V_o)^-1 u)

    with ``D = det(V_i + V_o)``, ``d = (det V_i - 1)(det V_o - 1)`` and
    ``u`` the difference of the means. For a coherent ``rho_i`` this reduces
    to ``2 / sqrt((s_x + 1)(s_p + 1)) * exp(...)`` for a diagonal ``rho_o``.
    """
    vsum = rho_i.cov + rho_o.cov
    big = _det2(vsum)
    # clip rounding below the uncertainty bound, already validated to 1e-9
    small = max(_det2(rho_i.cov) - 1.0, 0.0) * max(_det2(rho_o.cov) - 1.0, 0.0)
    u = rho_o.mean - rho_i.mean
    quad = float(u @ np.linalg.solve(vsum, u))
    f = 2.0 / (math.sqrt(big + small) - math.sqrt(small)) * math.exp(-0.5 * quad)
    return min(max(f, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # values[i, j] at (x_axis[j], p_axis[i])

    @property
    def cell_area(self) -> float:
        return float(np.diff(self.x_axis).mean() * np.diff(self.p_axis).mean())

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.x_axis[j]), float(self.p_axis[i])

    def marginal_x(self) -> np.ndarray:
        return self.values.sum(axis=0) * float(np.diff(self.p_axis).mean())

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=1) * float(np.diff(self.x_axis).mean())


def wigner(s: GaussianState, x_axis, p_axis) -> WignerGrid:
    """Evaluate the Wigner function of ``s`` on a rectangular grid.

    Normalised as a probability density over the (x, p) plane, so the
    vacuum peaks at ``1 / (2 pi)`` and ``sum * cell_area`` is ~1 on a grid
    spanning +-6 standard deviations. Marginals are the homodyne
    distributions of ``x`` and ``p``.
    """
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    for name, ax in (("x_axis", x_axis), ("p_axis", p_axis)):
        if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
            raise InvalidArgument(f"{name} must be strictly increasing")
    det = _det2(s.cov)
    if det <= 1e-300:
        raise InvalidArgument("degenerate covariance")
    inv = np.linalg.inv(s.cov)
    dx = x_axis[None, :] - s.mean[0]
    dp = p_axis[:, None] - s.mean[1]
    q = inv[0, 0] * dx**2 + 2.0 * inv[0, 1] * dx * dp + inv[1, 1] * dp**2
    values = np.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(det))
    values.setflags(write=False)
    return WignerGrid(x_axis, p_axis, values)
