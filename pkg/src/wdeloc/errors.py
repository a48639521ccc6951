"""Exception hierarchy shared by all wdeloc modules."""


class WdelocError(Exception):
    """Base class for every error raised by this package."""


class InvalidState(WdelocError, ValueError):
    """A density matrix or ket failed validation.

    Attributes
    ----------
    invariant : str
        Name of the violated invariant.
    violation : float
        Measured size of the violation.
    """

    invariant = "state"

    def __init__(self, violation, detail=""):
        self.violation = float(violation)
        msg = f"{self.invariant} violated (magnitude {self.violation:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NonHermitian(InvalidState):
    invariant = "hermiticity"


class TraceNotOne(InvalidState):
    invariant = "unit trace"


class NotPositiveSemidefinite(InvalidState):
    invariant = "positive semidefiniteness"


class NotNormalized(InvalidState):
    invariant = "normalization"


class WeightsNotNormalized(WdelocError, ValueError):
    pass


class DimensionMismatch(WdelocError, ValueError):
    pass


class KOutOfRange(WdelocError, ValueError):
    pass


class IndexOutOfRange(WdelocError, IndexError):
    pass


class EqualIndices(WdelocError, ValueError):
    pass


class PurityOutOfRange(WdelocError, ValueError):
    pass


class InsufficientSamples(WdelocError, ValueError):
    pass


class RankOutOfRange(WdelocError, ValueError):
    pass


class BlockTooLarge(WdelocError, ValueError):
    pass


class InfeasiblePurity(WdelocError, ValueError):
    pass


class NegativeFrequency(WdelocError, ValueError):
    pass


class ZeroFrequency(WdelocError, ValueError):
    pass


class PositivityViolation(WdelocError, ArithmeticError):
    """Propagated state developed a negative eigenvalue (time step too large)."""

    def __init__(self, min_eigenvalue, time):
        self.min_eigenvalue = float(min_eigenvalue)
        self.time = float(time)
        super().__init__(
            f"min eigenvalue {self.min_eigenvalue:.3e} at t = {self.time:g} fs; "
            "reduce dt"
        )


class DegenerateBasisWarning(UserWarning):
    """Secular gap grouping merged frequencies farther apart than the tolerance."""


class StateFileError(WdelocError, ValueError):
    """A state file is unreadable or does not follow the {dim, re, im} schema."""


class ConfigError(WdelocError, ValueError):
    """An evolve config file is malformed or fails schema validation."""
