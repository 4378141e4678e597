"""Exception types raised by the transceiver designs and the harness."""


class TwrsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TwrsError, ValueError):
    """Malformed system configuration or experiment description."""


class DegenerateInput(TwrsError, ValueError):
    """An input matrix is numerically zero where a nonzero one is required."""


class InsufficientAntennas(TwrsError, ValueError):
    """The antenna configuration cannot support the requested scheme."""


class RankDeficientEquivalentChannel(TwrsError, ValueError):
    """A BS-side equivalent channel lost rank, so ZF is undefined."""


class DegenerateChannel(TwrsError, ValueError):
    """No balancing factor yields a usable balanced transceiver."""


class InfeasibleDimensions(TwrsError, ValueError):
    """The interference-free constraints leave no degrees of freedom."""


class EmptyNullSpace(TwrsError, ValueError):
    """A per-stream feasible set is empty."""
