"""Simulation and analysis of a heralded hybrid 1 -> N coherent-state cloner.

The cloner combines a measurement-based noiseless amplifier (a heralding
filter applied to dual-homodyne outcomes) with deterministic feed-forward
and an N-port beam splitter.
"""

__version__ = "0.1.0"

from .analytic import (  # noqa: E402
    GainSet,
    clone_moments_ideal,
    derive_gains,
    fidelity_max,
    fidelity_unity,
    no_cloning_limit,
    success_probability,
)
from .engine import HcmConfig, resolve, run_batch  # noqa: E402
from .gaussian import GaussianState, coherent, fidelity_gaussian, vacuum  # noqa: E402
from .heralding import HeraldingFilter, calibrate_gain  # noqa: E402

__all__ = [
    "__version__",
    "GainSet",
    "GaussianState",
    "HcmConfig",
    "HeraldingFilter",
    "calibrate_gain",
    "clone_moments_ideal",
    "coherent",
    "derive_gains",
    "fidelity_gaussian",
    "fidelity_max",
    "fidelity_unity",
    "no_cloning_limit",
    "resolve",
    "run_batch",
    "success_probability",
    "vacuum",
]
