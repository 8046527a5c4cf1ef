"""Exception types raised by the simulator."""


class CapacityError(ValueError):
    """Requested dimension exceeds the configured desk-scale budget."""


class CommensurabilityError(ValueError):
    """A pointer shift does not land on an integer grid point."""


class NumericalConsistencyError(ArithmeticError):
    """A quantity that must be real (or otherwise exact) drifted past tolerance."""


class SupportError(ValueError):
    """Relative-entropy argument is supported outside the reference state."""


class CoherentInputError(ValueError):
    """Event reading was attempted on a state with off-sector coherence."""


class DegenerateDistributionError(ValueError):
    """All outcome probabilities vanish; nothing to sample."""


class SchemeConstraintError(RuntimeError):
    """A protocol step violated one of its structural requirements."""
