"""Certified brackets, verification reports and shared error types."""

from __future__ import annotations

from dataclasses import dataclass, field


class NetCapExceeded(RuntimeError):
    def __init__(self, estimate, cap):
        super().__init__(f"net would hold about {estimate:.3g} points, cap is {cap}")
        self.estimate = estimate
        self.cap = cap


class SolverFailure(RuntimeError):
    pass


class CertificateFailure(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class CertifiedInterval:
    lower: float
    upper: float
    resolution: float = 0.0

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if lo > hi:
            raise ValueError(f"interval lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "resolution", float(self.resolution))

    @classmethod
    def exact(cls, value):
        return cls(value, value, 0.0)

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, slack=0.0):
        return self.lower - slack <= x <= self.upper + slack

    def __add__(self, other):
        if not isinstance(other, CertifiedInterval):
            other = CertifiedInterval.exact(other)
        return CertifiedInterval(self.lower + other.lower, self.upper + other.upper,
                                 self.resolution + other.resolution)

    __radd__ = __add__

    def scale(self, c):
        if c < 0:
            raise ValueError("scale factor must be nonnegative")
        return CertifiedInterval(c * self.lower, c * self.upper, c * self.resolution)

    def max(self, other):
        return CertifiedInterval(max(self.lower, other.lower), max(self.upper, other.upper),
                                 max(self.resolution, other.resolution))

    def min(self, other):
        return CertifiedInterval(min(self.lower, other.lower), min(self.upper, other.upper),
                                 max(self.resolution, other.resolution))

    def to_json(self):
        return {"lower": self.lower, "upper": self.upper, "resolution": self.resolution}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["lower"], obj["upper"], obj.get("resolution", 0.0))


def interval_max(*intervals):
    out = intervals[0]
    for iv in intervals[1:]:
        out = out.max(iv)
    return out


@dataclass
class Report:
    name: str
    passed: bool
    trials: int = 0
    worst_ratio: float = 0.0
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"name": self.name, "passed": self.passed, "trials": self.trials,
                "worst_ratio": self.worst_ratio, "witness": self.witness, "details": self.details}
