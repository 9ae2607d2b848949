"""Report containers shared by the checkers."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class InequalityReport:
    """Slack series for one inequality. Passing means min margin >= -tol."""

    name: str
    times: np.ndarray
    margins: np.ndarray
    tol: float
    hypotheses: dict = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.margins = np.asarray(self.margins, dtype=float)

    @property
    def min_margin(self):
        if self.margins.size == 0:
            return float("inf")
        return float(np.min(self.margins))

    @property
    def passed(self):
        if self.skipped:
            return True
        return bool(self.min_margin >= -self.tol)

    def summary(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "skipped": self.skipped,
            "reason": self.reason,
            "min_margin": self.min_margin if self.margins.size else None,
            "tol": self.tol,
            "n_points": int(self.margins.size),
            "hypotheses": self.hypotheses,
        }

    @classmethod
    def skip(cls, name, reason, hypotheses=None):
        return cls(name, np.zeros(0), np.zeros(0), 0.0, hypotheses or {}, True, reason)


def combine(name, reports):
    """Concatenate several reports into one, normalizing margins by their tolerances."""
    live = [r for r in reports if not r.skipped and r.margins.size]
    if not live:
        return InequalityReport.skip(name, "no live sub-checks")
    margins = np.concatenate([r.margins / max(r.tol, 1e-300) for r in live])
    times = np.concatenate([r.times for r in live])
    return InequalityReport(name, times, margins, 1.0,
                            extra={"parts": [r.summary() for r in reports]})
