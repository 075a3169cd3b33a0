"""Exception types shared across the package."""


class AffectFuseError(Exception):
    """Base class for all package errors."""


class UnknownLabel(AffectFuseError, ValueError):
    """A string is not part of the vocabulary it was parsed against."""


class InvalidObservation(AffectFuseError, ValueError):
    """An observation record violates its invariants."""


class ConfigError(AffectFuseError, ValueError):
    """A mapping, fusion or simulation config is malformed or invalid."""


class InsufficientCues(AffectFuseError):
    """Fewer cues are present than the ``require`` policy demands."""

    def __init__(self, present: int, required: int):
        super().__init__(f"{present} cue(s) present, policy requires {required}")
        self.present = present
        self.required = required


class NoEvidence(AffectFuseError):
    """No cue contributed to a student-window, so no decision exists."""


class BadDistribution(AffectFuseError, ValueError):
    """A confidence distribution has negative mass or does not sum to 1."""


class UnsortedInput(AffectFuseError, ValueError):
    """Observations are not in non-decreasing timestamp order."""

    def __init__(self, index: int, timestamp: int, previous: int):
        super().__init__(
            f"observation {index} has timestamp {timestamp} < previous {previous}"
        )
        self.index = index


class EmptyMatrix(AffectFuseError, ValueError):
    """Metrics were requested for a confusion matrix with no counts."""


class SpaceMismatch(AffectFuseError, ValueError):
    """Two confusion matrices are over different label spaces."""


class MalformedInput(AffectFuseError, ValueError):
    """A line of an input file could not be parsed or validated."""

    def __init__(self, line: int, message: str, path=None):
        where = f"{path}:" if path is not None else ""
        super().__init__(f"{where}line {line}: {message}")
        self.line = line
        self.path = path
