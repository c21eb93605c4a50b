"""Exception hierarchy shared by all modules."""


class LefgpdError(Exception):
    """Base class for every math-domain or configuration failure."""


class NonSimpleFixedPoint(LefgpdError):
    """A fixed point where |det(dphi - I)| falls below the simplicity tolerance."""


class DegenerateMap(NonSimpleFixedPoint):
    """Affine map with det(A - I) = 0 and a non-empty, hence non-isolated, fixed set."""


class TruncationTooSmall(LefgpdError):
    pass


class EllipticityFailure(LefgpdError):
    """The symbol q(xi) is not positive definite on the unit sphere."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class FrequencyBoxTooSmall(LefgpdError):
    pass


class OutOfChart(LefgpdError):
    pass


class NonDecayingBoundary(LefgpdError):
    """Expanding-box quadrature of a boundary integrand did not stabilise."""


class CrossCheckFailure(LefgpdError):
    pass


class UnboundedLadder(LefgpdError):
    """t^-n Str_t grows along the ladder, so no finite t -> 0 limit is expected."""


class ConfigError(LefgpdError):
    """Schema violation or unreadable configuration."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
