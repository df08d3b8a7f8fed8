"""Experiment designs: which side of the market is randomized, and how much."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class DesignKind(str, enum.Enum):
    GLOBAL_CONTROL = "gc"
    GLOBAL_TREATMENT = "gt"
    CR = "cr"  # customer-side randomization
    LR = "lr"  # listing-side randomization


@dataclass(frozen=True)
class DesignSpec:
    """A design kind plus its treatment allocation (unused for global kinds)."""

    kind: DesignKind
    allocation: float | None = None

    def __post_init__(self):
        if self.kind in (DesignKind.CR, DesignKind.LR):
            a = self.allocation
            if a is None or not 0.0 < a < 1.0:
                raise ValueError(
                    f"allocation must lie in (0, 1) for {self.kind.value} designs, got {a!r}"
                )

    @classmethod
    def global_control(cls) -> "DesignSpec":
        return cls(DesignKind.GLOBAL_CONTROL)

    @classmethod
    def global_treatment(cls) -> "DesignSpec":
        return cls(DesignKind.GLOBAL_TREATMENT)

    @classmethod
    def cr(cls, allocation: float) -> "DesignSpec":
        return cls(DesignKind.CR, allocation)

    @classmethod
    def lr(cls, allocation: float) -> "DesignSpec":
        return cls(DesignKind.LR, allocation)

    @property
    def is_randomized(self) -> bool:
        return self.kind in (DesignKind.CR, DesignKind.LR)

    def label(self) -> str:
        if self.is_randomized:
            return f"{self.kind.value}({self.allocation:g})"
        return self.kind.value
