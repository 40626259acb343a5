"""Shot-by-shot Monte Carlo of the heralded hybrid cloning machine.

Each shot: the input coherent state is tapped off on a beam splitter of
transmission ``t_s``; the reflected port (after detector loss ``eta_dh``) is
measured by dual homodyne, giving ``alpha_m`` drawn from the coherent-state
outcome density; the heralding filter accepts or rejects the shot; accepted
outcomes displace the transmitted beam by ``lam * alpha_m`` with
``lam = g_xp / sqrt(2)``; the resulting coherent state is split N ways and each
clone is read out by a homodyne detector of efficiency ``eta_verify``.

Coherent states remain product states through every beam splitter, so a
shot is fully described by the coherent amplitude it produces.

Random numbers come from counter-based Philox streams keyed by
``(seed, stream)`` with the block index in the counter, so results depend
only on the seed and the fixed block size, never on the worker count.
The X and P readouts are separate runs with independent streams, as one
homodyne detector measures one quadrature per shot.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import analytic
from .errors import InvalidArgument
from .estimators import (
    DEFAULT_ETA_SIGMA,
    CloneStatistics,
    FidelityEstimate,
    QuadratureStats,
    correct_efficiency,
    estimate_fidelity,
)
from .gaussian import GaussianState, coherent
from .heralding import (
    CONTAINMENT_TARGET,
    DEFAULT_BETA,
    GEOMETRIES,
    HeraldingFilter,
    acceptance_probability,
    calibrate_with_containment,
    filter_from_rule,
)

__all__ = [
    "BLOCK_SHOTS",
    "STREAM_X",
    "STREAM_P",
    "HcmConfig",
    "Pipeline",
    "ShotRecord",
    "BatchResult",
    "resolve",
    "block_generator",
    "run_shot",
    "split_and_verify",
    "simulate_block",
    "run_batch",
]

BLOCK_SHOTS = 1 << 17
STREAM_X = 0
STREAM_P = 1
_SEED_LIMIT = 1 << 64


@dataclass(frozen=True)
class HcmConfig:
    """Complete description of one simulated experiment.

    ``g_prime`` is either a number (explicit filter gain) or ``"calibrate"``
    for unity-gain calibration. ``filter`` overrides both with a fully
    specified heralding filter. ``shots`` counts raw shots per quadrature
    run.
    """

    n_clones: int
    t_s: float
    alpha_in: complex
    g_prime: float | str = "calibrate"
    beta: float = DEFAULT_BETA
    cutoff_geometry: str = "radial"
    eta_dh: float = 0.90
    eta_input: float = 0.97
    eta_verify: float = 0.985
    port_transmissions: tuple[float, ...] | None = None
    shots: int = 1_000_000
    seed: int = 0
    filter: HeraldingFilter | None = None
    adjust_beta: bool = True

    def __post_init__(self):
        object.__setattr__(self, "alpha_in", complex(self.alpha_in))
        analytic.derive_gains(self.n_clones, self.t_s)
        for name in ("eta_dh", "eta_input", "eta_verify"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 < v <= 1.0):
                raise InvalidArgument(f"{name} must lie in (0, 1], got {v}")
        if self.port_transmissions is not None:
            ports = tuple(float(t) for t in self.port_transmissions)
            if len(ports) != self.n_clones:
                raise InvalidArgument(
                    f"port_transmissions has {len(ports)} entries for {self.n_clones} clones"
                )
            if min(ports) < 0.0 or abs(math.fsum(ports) - 1.0) > 1e-9:
                raise InvalidArgument("port_transmissions must be >= 0 and sum to 1")
            object.__setattr__(self, "port_transmissions", ports)
        if isinstance(self.g_prime, str):
            if self.g_prime != "calibrate":
                raise InvalidArgument(f"g_prime must be a number or 'calibrate', got {self.g_prime!r}")
        elif not self.g_prime >= 1.0:
            raise InvalidArgument(f"g_prime must be >= 1, got {self.g_prime}")
        if not self.beta > 0:
            raise InvalidArgument(f"beta must be positive, got {self.beta}")
        if self.cutoff_geometry not in GEOMETRIES:
            raise InvalidArgument(f"cutoff_geometry must be one of {GEOMETRIES}")
        if int(self.shots) != self.shots or self.shots < 1:
            raise InvalidArgument(f"shots must be a positive integer, got {self.shots}")
        if int(self.seed) != self.seed or not 0 <= self.seed < _SEED_LIMIT:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")

    @property
    def ports(self) -> np.ndarray:
        if self.port_transmissions is None:
            return np.full(self.n_clones, 1.0 / self.n_clones)
        return np.array(self.port_transmissions)

    @property
    def input_state(self) -> GaussianState:
        return coherent(self.alpha_in.real, self.alpha_in.imag)

    @property
    def detected_amplitude(self) -> complex:
        """Coherent amplitude reaching the dual-homodyne detector."""
        return math.sqrt(self.eta_dh * (1.0 - self.t_s)) * self.alpha_in


@dataclass(frozen=True)
class Pipeline:
    """A configuration with its heralding filter fixed."""

    cfg: HcmConfig
    gains: analytic.GainSet
    filter: HeraldingFilter
    beta: float | None
    calibrated: bool

    @property
    def lam(self) -> float:
        return analytic.feedforward_scale(self.cfg.t_s)

    @property
    def alpha_r(self) -> complex:
        return self.cfg.detected_amplitude

    def success_probability(self) -> float:
        return analytic.success_probability(self.alpha_r, self.filter)

    def clone_states(self) -> list[GaussianState]:
        """Quadrature prediction of the ensemble state of each clone."""
        c = self.cfg
        return analytic.pipeline_clone_states(
            c.n_clones, c.t_s, c.alpha_in, self.filter, c.eta_dh, c.ports
        )


def _containment_ok(cfg, filt):
    return analytic.containment_fraction(cfg.detected_amplitude, filt) >= CONTAINMENT_TARGET


@lru_cache(maxsize=256)
def resolve(cfg: HcmConfig) -> Pipeline:
    """Fix the heralding filter of ``cfg``: explicit, rule-based, or calibrated."""
    gains = analytic.derive_gains(cfg.n_clones, cfg.t_s)
    if cfg.filter is not None:
        return Pipeline(cfg, gains, cfg.filter, None, False)
    a_max = cfg.detected_amplitude
    if cfg.g_prime == "calibrate":
        if cfg.adjust_beta:
            res = calibrate_with_containment(
                cfg.n_clones, cfg.t_s, cfg.eta_dh, cfg.alpha_in, beta=cfg.beta,
                geometry=cfg.cutoff_geometry,
            )
        else:
            from .heralding import calibrate_gain

            res = calibrate_gain(cfg.n_clones, cfg.t_s, cfg.eta_dh, (cfg.beta, None), cfg.alpha_in,
                                 geometry=cfg.cutoff_geometry)
        return Pipeline(cfg, gains, res.filter, res.beta, True)
    beta = cfg.beta
    filt = filter_from_rule(cfg.g_prime, a_max, beta, cfg.cutoff_geometry)
    while cfg.adjust_beta and not _containment_ok(cfg, filt) and beta < 12.0:
        beta += 0.25
        filt = filter_from_rule(cfg.g_prime, a_max, beta, cfg.cutoff_geometry)
    return Pipeline(cfg, gains, filt, beta, False)


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    """Counter-based generator for one block of shots."""
    bitgen = np.random.Philox(key=int(seed) | (int(stream) << 64), counter=int(block) << 192)
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class ShotRecord:
    alpha_m: complex
    accepted: bool
    displaced_amplitude: complex | None
    clone_samples: tuple[float, ...] = ()


def run_shot(cfg: HcmConfig, rng: np.random.Generator) -> ShotRecord:
    """Simulate one shot up to (not including) the N-port split."""
    pipe = resolve(cfg)
    z = rng.standard_normal(2)
    u = rng.random()
    alpha_m = pipe.alpha_r + math.sqrt(0.5) * complex(z[0], z[1])
    accepted = bool(u < acceptance_probability(pipe.filter, alpha_m))
    displaced = None
    if accepted:
        displaced = math.sqrt(cfg.t_s) * cfg.alpha_in + pipe.lam * alpha_m
    return ShotRecord(alpha_m, accepted, displaced)


def split_and_verify(shot: ShotRecord, cfg: HcmConfig, rng: np.random.Generator,
                     quadrature: str = "x") -> ShotRecord:
    """Split an accepted shot into clones and take one homodyne sample of each."""
    if not shot.accepted:
        raise InvalidArgument("only accepted shots produce clones")
    amp = shot.displaced_amplitude
    comp = amp.real if quadrature == "x" else amp.imag
    means = math.sqrt(cfg.eta_verify) * 2.0 * np.sqrt(cfg.ports) * comp
    samples = means + rng.standard_normal(cfg.n_clones)
    return ShotRecord(shot.alpha_m, True, amp, tuple(float(s) for s in samples))


def simulate_block(pipe: Pipeline, stream: int, block: int, n: int) -> dict:
    """Vectorised simulation of ``n`` shots of one block.

    ``stream`` selects the verified quadrature (``STREAM_X`` or ``STREAM_P``).
    Returns arrays of all outcomes plus the accepted subset.
    """
    cfg = pipe.cfg
    rng = block_generator(cfg.seed, stream, block)
    z = rng.standard_normal((2, n))
    u = rng.random(n)
    xm = pipe.alpha_r.real + math.sqrt(0.5) * z[0]
    pm = pipe.alpha_r.imag + math.sqrt(0.5) * z[1]
    acc = u < acceptance_probability(pipe.filter, xm + 1j * pm)
    if stream == STREAM_X:
        comp = math.sqrt(cfg.t_s) * cfg.alpha_in.real + pipe.lam * xm[acc]
    else:
        comp = math.sqrt(cfg.t_s) * cfg.alpha_in.imag + pipe.lam * pm[acc]
    scale = math.sqrt(cfg.eta_verify) * 2.0 * np.sqrt(cfg.ports)
    clones = comp[:, None] * scale[None, :] + rng.standard_normal((comp.size, cfg.n_clones))
    return {"xm": xm, "pm": pm, "accepted": acc, "displaced": comp, "clones": clones}


def _power_sums(v, ref):
    d = v - ref
    d2 = d * d
    return np.array([d.sum(axis=0), d2.sum(axis=0), (d2 * d).sum(axis=0), (d2 * d2).sum(axis=0)])


def _block_job(pipe, stream, refs, keep, block):
    n = min(BLOCK_SHOTS, pipe.cfg.shots - block * BLOCK_SHOTS)
    out = simulate_block(pipe, stream, block, n)
    acc = out["accepted"]
    cols = np.column_stack([out["clones"], out["displaced"], out["xm"][acc], out["pm"][acc]])
    sums = _power_sums(cols, refs)
    return int(acc.sum()), sums, (out["clones"] if keep else None)


def _fsum_blocks(blocks):
    arr = np.stack(blocks)  # (n_blocks, 4, k)
    flat = arr.reshape(arr.shape[0], -1)
    return np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])]).reshape(arr.shape[1:])


@dataclass
class BatchResult:
    pipeline: Pipeline
    shots: int
    accepted: tuple[int, int]
    raw: list[CloneStatistics]
    clones: list[CloneStatistics]
    fidelities: list[FidelityEstimate]
    displaced: tuple[QuadratureStats, QuadratureStats]
    outcomes: tuple[QuadratureStats, QuadratureStats]
    samples: dict | None = field(default=None, repr=False)

    @property
    def cfg(self) -> HcmConfig:
        return self.pipeline.cfg

    @property
    def acceptance_rate(self) -> float:
        return sum(self.accepted) / (2 * self.shots)

    @property
    def acceptance_se(self) -> float:
        p = self.acceptance_rate
        return math.sqrt(p * (1.0 - p) / (2 * self.shots))

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean([f.value for f in self.fidelities]))

    def stats_dict(self) -> dict:
        """The ``stats.json`` document."""
        cfg, pipe = self.cfg, self.pipeline
        states = pipe.clone_states()
        inp = cfg.input_state
        from .gaussian import fidelity_gaussian

        clones = []
        for st, fid in zip(self.clones, self.fidelities):
            clones.append({
                "mean_x": st.mean_x, "mean_p": st.mean_p,
                "var_x": st.var_x, "var_p": st.var_p,
                "fidelity": fid.value, "fidelity_std": fid.std_dev,
                "count_x": st.x.count, "count_p": st.p.count,
            })
        gains = pipe.gains.as_dict()
        gains["filter"] = pipe.filter.as_dict()
        gains["beta"] = pipe.beta
        gains["calibrated"] = pipe.calibrated
        gains["feedforward_scale"] = pipe.lam
        analytic_block = {
            "fidelity_unity": analytic.fidelity_unity(cfg.n_clones, cfg.t_s),
            "fidelity_unity_lossy": analytic.fidelity_unity_lossy(cfg.n_clones, cfg.t_s, cfg.eta_dh),
            "fidelity_max": analytic.fidelity_max(cfg.n_clones),
            "no_cloning_limit": float(analytic.no_cloning_limit(cfg.n_clones)),
            "measure_and_prepare_limit": analytic.MEASURE_AND_PREPARE_LIMIT,
            "success_probability": pipe.success_probability(),
            "clones": [
                {"mean_x": float(s.mean[0]), "mean_p": float(s.mean[1]),
                 "var_x": float(s.cov[0, 0]), "var_p": float(s.cov[1, 1]),
                 "fidelity": fidelity_gaussian(inp, s)}
                for s in states
            ],
        }
        return {
            "acceptance_rate": self.acceptance_rate,
            "shots": self.shots,
            "clones": clones,
            "gains": gains,
            "analytic": analytic_block,
        }


def run_batch(cfg: HcmConfig, *, threads: int = 1, keep_samples: bool = False,
              eta_sigma: float = DEFAULT_ETA_SIGMA) -> BatchResult:
    """Run the X and P readout runs of ``cfg.shots`` shots each and reduce.

    Shots are processed in fixed blocks of :data:`BLOCK_SHOTS`; block sums of
    powers of deviations from the predicted means are combined with
    ``math.fsum`` in block order, so the output is bit-identical for any
    ``threads``.
    """
    pipe = resolve(cfg)
    states = pipe.clone_states()
    n_blocks = -(-cfg.shots // BLOCK_SHOTS)
    mean_m, _ = analytic.postfilter_moments(pipe.alpha_r, pipe.filter)
    disp_pred = math.sqrt(cfg.t_s) * cfg.alpha_in + pipe.lam * mean_m
    results = {}
    samples = {} if keep_samples else None
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        for stream, qi in ((STREAM_X, 0), (STREAM_P, 1)):
            # reference points for the power sums: predicted means of every column
            eta_v = math.sqrt(cfg.eta_verify)
            clone_ref = [eta_v * float(s.mean[qi]) for s in states]
            disp_ref = disp_pred.real if qi == 0 else disp_pred.imag
            refs = np.array([*clone_ref, disp_ref, mean_m.real, mean_m.imag])
            jobs = pool.map(lambda b, s=stream, r=refs: _block_job(pipe, s, r, keep_samples, b),
                            range(n_blocks))
            accepted, sums, kept = 0, [], []
            for a, s, k in jobs:
                accepted += a
                sums.append(s)
                if keep_samples:
                    kept.append(k)
            tot = _fsum_blocks(sums)
            stats = [QuadratureStats.from_power_sums(accepted, refs[j], *tot[:, j])
                     for j in range(refs.size)]
            results[stream] = (accepted, stats)
            if keep_samples:
                samples["xp"[qi]] = np.concatenate(kept, axis=0)
    acc_x, st_x = results[STREAM_X]
    acc_p, st_p = results[STREAM_P]
    n = cfg.n_clones
    raw = [CloneStatistics(st_x[i], st_p[i], acc_x + acc_p, 2 * cfg.shots) for i in range(n)]
    corrected = [correct_efficiency(r, cfg.eta_verify) for r in raw]
    inp = cfg.input_state
    fids = [estimate_fidelity(c, inp, eta_sigma) for c in corrected]
    # outcome statistics: Re from the X run, Im from the P run (independent streams)
    outcomes = (st_x[n + 1], st_p[n + 2])
    displaced = (st_x[n], st_p[n])
    return BatchResult(pipe, cfg.shots, (acc_x, acc_p), raw, corrected, fids,
                       displaced, outcomes, samples)
