"""Simulation and inference for two-armed adaptive experiments.

Finite-sample bandit experiments (:mod:`.experiment`), their Gaussian
diffusion limit (:mod:`.diffusion`), post-experiment estimation and regret
(:mod:`.inference`), and anytime-valid e-processes (:mod:`.evalid`).
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ContractViolation,
    ConvergenceError,
    DomainError,
    NoInformationError,
    RegimeError,
)
from .model import ArmModel, Family, LocalParam, McEstimate  # noqa: E402
from .montecarlo import Stream  # noqa: E402

__all__ = [
    "__version__",
    "ArmModel",
    "Family",
    "LocalParam",
    "McEstimate",
    "Stream",
    "ConfigError",
    "ContractViolation",
    "ConvergenceError",
    "DomainError",
    "NoInformationError",
    "RegimeError",
]
