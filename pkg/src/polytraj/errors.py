"""Exception types raised by polytraj."""


class PolytrajError(Exception):
    """Base class for all library errors."""


class DegenerateHullError(PolytrajError):
    """Input points are affinely dependent; no full-dimensional hull exists."""


class SamplingError(PolytrajError):
    """Rejection sampling gave up (near-empty interior)."""


class GenerationError(PolytrajError):
    pass


class ProblemParseError(PolytrajError, ValueError):
    """A problem/solution document violates the schema.

    ``field`` names the offending key.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedDegreeError(PolytrajError, ValueError):
    pass


class ProgramMisuseError(PolytrajError, ValueError):
    pass


class InvalidProblemError(PolytrajError, ValueError):
    pass


class CellAbandonedError(PolytrajError):
    pass
