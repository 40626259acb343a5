"""Estimators applied to accumulated homodyne statistics.

Homodyne data taken through a detector of efficiency ``eta`` are corrected
by rescaling the samples by ``1/sqrt(eta)`` and subtracting
``(1 - eta)/eta`` from the variance of the rescaled data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientData, InvalidArgument
from .gaussian import GaussianState

__all__ = [
    "DEFAULT_ETA_SIGMA",
    "QuadratureStats",
    "CloneStatistics",
    "FidelityEstimate",
    "FidelityDistribution",
    "correct_efficiency",
    "estimate_fidelity",
    "bootstrap_fidelity_distribution",
]

# systematic uncertainty on the correction efficiency
DEFAULT_ETA_SIGMA = 0.05


@dataclass(frozen=True)
class QuadratureStats:
    """Sample moments of one quadrature: count, mean, unbiased variance, 4th central moment."""

    count: int
    mean: float
    var: float
    m4: float

    @classmethod
    def from_power_sums(cls, n, ref, s1, s2, s3, s4) -> QuadratureStats:
        """Build from sums of ``(v - ref)**k``, k = 1..4."""
        if n == 0:
            return cls(0, math.nan, math.nan, math.nan)
        d = s1 / n
        m2 = s2 / n - d * d
        m4 = s4 / n - 4 * d * s3 / n + 6 * d * d * s2 / n - 3 * d**4
        var = m2 * n / (n - 1) if n > 1 else math.nan
        return cls(int(n), ref + d, var, m4)

    @classmethod
    def from_samples(cls, v) -> QuadratureStats:
        v = np.asarray(v, dtype=float)
        if v.size == 0:
            return cls(0, math.nan, math.nan, math.nan)
        ref = float(v[0])
        d = v - ref
        return cls.from_power_sums(v.size, ref, *(float(np.sum(d**k)) for k in (1, 2, 3, 4)))

    @property
    def mean_se(self) -> float:
        return math.sqrt(self.var / self.count)

    @property
    def var_se(self) -> float:
        """Standard error of the sample variance from the empirical 4th moment."""
        n = self.count
        return math.sqrt(max(self.m4 - self.var**2 * (n - 3) / (n - 1), 0.0) / n)


@dataclass(frozen=True)
class CloneStatistics:
    """Raw homodyne moments of one clone, with an efficiency correction attached.

    The ``x`` and ``p`` fields hold the raw data. The properties
    ``mean_x``/``var_x``/... return values corrected for ``eta_tot``
    (identity while ``eta_tot == 1``).
    """

    x: QuadratureStats
    p: QuadratureStats
    acceptance_count: int
    total_shots: int
    eta_tot: float = 1.0

    def _mean(self, q):
        return q.mean / math.sqrt(self.eta_tot)

    def _var(self, q):
        return q.var / self.eta_tot - (1.0 - self.eta_tot) / self.eta_tot

    @property
    def mean_x(self) -> float:
        return self._mean(self.x)

    @property
    def mean_p(self) -> float:
        return self._mean(self.p)

    @property
    def var_x(self) -> float:
        return self._var(self.x)

    @property
    def var_p(self) -> float:
        return self._var(self.p)

    @property
    def count(self) -> int:
        return min(self.x.count, self.p.count)

    def state(self) -> GaussianState:
        return GaussianState([self.mean_x, self.mean_p], np.diag([self.var_x, self.var_p]))


def correct_efficiency(stats: CloneStatistics, eta_tot: float) -> CloneStatistics:
    """Attach the detection efficiency ``eta_tot`` to raw statistics.

    Replaces, rather than compounds, any previous correction.
    """
    if not (math.isfinite(eta_tot) and 0.0 < eta_tot <= 1.0):
        raise InvalidArgument(f"eta_tot must lie in (0, 1], got {eta_tot}")
    return replace(stats, eta_tot=eta_tot)


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    std_dev: float
    n_samples: int


def _fid(x_in, p_in, mx, mp, vx, vp):
    return (
        2.0
        / math.sqrt((vx + 1.0) * (vp + 1.0))
        * math.exp(-0.5 * ((mx - x_in) ** 2 / (vx + 1.0) + (mp - p_in) ** 2 / (vp + 1.0)))
    )


def estimate_fidelity(stats: CloneStatistics, input_state: GaussianState,
                      eta_sigma: float = DEFAULT_ETA_SIGMA) -> FidelityEstimate:
    """Fidelity of a clone with a coherent input, with propagated uncertainty.

    The uncertainty propagates the variance of each corrected quadrature
    variance through ``F~ = 2/sqrt((s_x + 1)(s_p + 1))``. Each variance
    carries a sampling term ``2 s_raw^2 / ((n - 1) eta^2)`` and a systematic
    term from an efficiency uncertainty ``eta_sigma`` pushed through the
    correction formula. At ``eta_tot == 1`` no correction is applied, so the
    systematic term vanishes.
    """
    n = stats.count
    if n < 2:
        raise InsufficientData(f"need at least 2 accepted samples per quadrature, got {n}")
    if not input_state.is_coherent(tol=1e-9):
        raise InvalidArgument("fidelity estimator assumes a coherent input state")
    x_in, p_in = input_state.mean
    vx, vp = stats.var_x, stats.var_p
    value = _fid(x_in, p_in, stats.mean_x, stats.mean_p, vx, vp)
    eta = stats.eta_tot
    f_tilde = 2.0 / math.sqrt((vx + 1.0) * (vp + 1.0))
    total = 0.0
    for q, v in ((stats.x, vx), (stats.p, vp)):
        var_of_var = 2.0 * q.var**2 / ((q.count - 1) * eta * eta)
        if eta < 1.0:
            var_of_var += ((1.0 - q.var) / (eta * eta)) ** 2 * eta_sigma**2
        dfdv = -0.5 * f_tilde / (v + 1.0)
        total += dfdv * dfdv * var_of_var
    return FidelityEstimate(min(max(value, 0.0), 1.0), math.sqrt(total), n)


@dataclass(frozen=True, eq=False)
class FidelityDistribution:
    values: np.ndarray
    edges: np.ndarray
    counts: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def std(self) -> float:
        return float(self.values.std(ddof=1))

    def mass_above(self, threshold: float) -> float:
        return float(np.mean(self.values > threshold))


def _block_sums(v, n_blocks):
    v = np.asarray(v, dtype=float)
    if v.size < n_blocks:
        raise InsufficientData(f"{v.size} samples cannot fill {n_blocks} blocks")
    ref = float(v.mean())
    parts = np.array_split(v - ref, n_blocks)
    cnt = np.array([p.size for p in parts], dtype=float)
    s1 = np.array([p.sum() for p in parts])
    s2 = np.array([(p * p).sum() for p in parts])
    return ref, cnt, s1, s2


def bootstrap_fidelity_distribution(samples, input_state: GaussianState, n_blocks: int,
                                    *, eta_tot: float = 1.0, n_resamples: int = 1000,
                                    seed: int = 0, bins: int = 50) -> FidelityDistribution:
    """Block-bootstrap distribution of the fidelity of one clone.

    ``samples`` is a pair ``(x_samples, p_samples)`` of raw homodyne data.
    Each quadrature is cut into ``n_blocks`` contiguous blocks which are
    resampled with replacement; every resample is efficiency-corrected and
    turned into a fidelity.
    """
    if n_blocks < 10:
        raise InvalidArgument(f"n_blocks must be >= 10, got {n_blocks}")
    xs, ps = samples
    rng = np.random.default_rng(seed)
    x_in, p_in = input_state.mean
    est = []
    for v in (xs, ps):
        ref, cnt, s1, s2 = _block_sums(v, n_blocks)
        idx = rng.integers(0, n_blocks, size=(n_resamples, n_blocks))
        n = cnt[idx].sum(axis=1)
        m1 = s1[idx].sum(axis=1) / n
        var = (s2[idx].sum(axis=1) / n - m1 * m1) * n / (n - 1)
        mean = (ref + m1) / math.sqrt(eta_tot)
        var = var / eta_tot - (1.0 - eta_tot) / eta_tot
        est.append((mean, var))
    (mx, vx), (mp, vp) = est
    values = (
        2.0 / np.sqrt((vx + 1.0) * (vp + 1.0))
        * np.exp(-0.5 * ((mx - x_in) ** 2 / (vx + 1.0) + (mp - p_in) ** 2 / (vp + 1.0)))
    )
    counts, edges = np.histogram(values, bins=bins)
    return FidelityDistribution(values, edges, counts)
