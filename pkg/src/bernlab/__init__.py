"""bernlab: a numerical laboratory for non-singular Bernoulli shift actions.

The package builds marginal families over finitely generated groups,
samples configurations lazily and reproducibly, evaluates Radon-Nikodym
and homoclinic cocycles with certified truncation bounds, constructs
stopping-time partial transformations from coordinate swaps, and scans
skew-product orbits for essential-value witnesses.
"""

__version__ = "0.1.0"

from .construction import (
    PhiMap,
    SwapSchedule,
    WalkStats,
    build_phi,
    build_schedule,
    find_horizon,
)
from .errors import (
    BallCapError,
    BernlabError,
    ConfigError,
    DivergenceTooSlowError,
    DomainError,
    InvariantViolation,
    ModelMismatchError,
)
from .families import EtaWeights, MarginalFamily, Side, make_family
from .groups import make_group
from .maharam import (
    MaharamPoint,
    ProductSystem,
    RatioHistogram,
    conservativity_return_check,
    essential_value_witness,
    maharam_preservation_check,
    maharam_step,
    phi_conjugate,
    ratio_hist,
    scan_returns,
)

__all__ = [
    "BallCapError",
    "BernlabError",
    "ConfigError",
    "DivergenceTooSlowError",
    "DomainError",
    "EtaWeights",
    "InvariantViolation",
    "MaharamPoint",
    "MarginalFamily",
    "ModelMismatchError",
    "PhiMap",
    "ProductSystem",
    "RatioHistogram",
    "Side",
    "SwapSchedule",
    "WalkStats",
    "build_phi",
    "build_schedule",
    "conservativity_return_check",
    "essential_value_witness",
    "find_horizon",
    "maharam_preservation_check",
    "maharam_step",
    "make_family",
    "make_group",
    "phi_conjugate",
    "ratio_hist",
    "scan_returns",
    "__version__",
]
