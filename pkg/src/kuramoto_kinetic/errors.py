"""Exception types raised across the package."""


class KuramotoError(Exception):
    """Base class for all package errors."""


class NoPhaseLockedEquilibrium(KuramotoError):
    """The self-consistency map for R has no root; coupling too weak."""


class StepTooLarge(KuramotoError):
    pass


class CFLViolation(KuramotoError):
    pass


class PhiUndefined(KuramotoError):
    """Raised when an operation needs the mean phase but R is ~0."""


class MassMismatch(KuramotoError):
    pass


class MarginalMismatch(KuramotoError):
    pass


class InstanceTooLarge(KuramotoError):
    pass


class OutOfRange(KuramotoError):
    pass


class HypothesisNotMet(KuramotoError):
    """A check's hypotheses fail on the data; the check is skipped."""


class DegenerateTrajectory(KuramotoError):
    pass


class WindowBelowFloor(KuramotoError):
    pass


class NeverEntered(KuramotoError):
    pass


class ConfigError(KuramotoError):
    """Invalid configuration. ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if field is not None:
            loc.append(f"field '{field}'")
        if line is not None:
            loc.append(f"line {line}")
        full = message if not loc else f"{message} ({', '.join(loc)})"
        super().__init__(full)
        self.field = field
        self.line = line
