"""Heat-kernel verification of the Lefschetz fixed point formula on flat tori."""

from .errors import (
    ConfigError,
    CrossCheckFailure,
    DegenerateMap,
    EllipticityFailure,
    FrequencyBoxTooSmall,
    LefgpdError,
    NonDecayingBoundary,
    NonSimpleFixedPoint,
    OutOfChart,
    TruncationTooSmall,
    UnboundedLadder,
)
from .geometry import AffineMap, CircleMap, TorusGeometry, find_fixed_points
from .lefschetz import VerificationConfig, verify

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "CircleMap",
    "ConfigError",
    "CrossCheckFailure",
    "DegenerateMap",
    "EllipticityFailure",
    "FrequencyBoxTooSmall",
    "LefgpdError",
    "NonDecayingBoundary",
    "NonSimpleFixedPoint",
    "OutOfChart",
    "TorusGeometry",
    "TruncationTooSmall",
    "UnboundedLadder",
    "VerificationConfig",
    "find_fixed_points",
    "verify",
]
