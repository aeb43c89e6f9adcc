"""Step-size schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import ConfigError


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    ROBUST_SQRT = "robust-sqrt"
    DECAY_BETA_LAMBDA = "decay-beta-lambda"
    EIGEN_DECAY = "eigen-decay"


@dataclass(frozen=True)
class StepSchedule:
    """Positive, non-increasing step sizes ``alpha_t`` for t = 0, 1, ...

    constant            alpha_t = alpha0
    robust-sqrt         alpha_t = 1/sqrt(horizon)
    decay-beta-lambda   alpha_t = beta/(shift + t)
    eigen-decay         alpha_t = 1/(c (t + 1))
    """

    kind: ScheduleKind
    alpha0: float | None = None
    horizon: int | None = None
    beta: float | None = None
    shift: float | None = None
    c: float | None = None

    def __post_init__(self):
        kind = ScheduleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        need = {
            ScheduleKind.CONSTANT: ("alpha0",),
            ScheduleKind.ROBUST_SQRT: ("horizon",),
            ScheduleKind.DECAY_BETA_LAMBDA: ("beta", "shift"),
            ScheduleKind.EIGEN_DECAY: ("c",),
        }[kind]
        for name in need:
            value = getattr(self, name)
            if value is None or not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{kind.value} schedule needs a positive {name}, got {value!r}",
                                  field=f"schedule.{name}")

    @classmethod
    def constant(cls, alpha0: float) -> "StepSchedule":
        return cls(ScheduleKind.CONSTANT, alpha0=float(alpha0))

    @classmethod
    def robust_sqrt(cls, horizon: int) -> "StepSchedule":
        return cls(ScheduleKind.ROBUST_SQRT, horizon=int(horizon))

    @classmethod
    def decay_beta_lambda(cls, beta: float, shift: float) -> "StepSchedule":
        return cls(ScheduleKind.DECAY_BETA_LAMBDA, beta=float(beta), shift=float(shift))

    @classmethod
    def eigen_decay(cls, c: float) -> "StepSchedule":
        return cls(ScheduleKind.EIGEN_DECAY, c=float(c))

    def alphas(self, start: int, stop: int) -> np.ndarray:
        """Step sizes for t in ``[start, stop)``."""
        k = stop - start
        if self.kind is ScheduleKind.CONSTANT:
            return np.full(k, self.alpha0)
        if self.kind is ScheduleKind.ROBUST_SQRT:
            return np.full(k, 1.0 / math.sqrt(self.horizon))
        t = np.arange(start, stop, dtype=np.float64)
        if self.kind is ScheduleKind.DECAY_BETA_LAMBDA:
            return self.beta / (self.shift + t)
        return 1.0 / (self.c * (t + 1.0))

    def alpha(self, t: int) -> float:
        return float(self.alphas(t, t + 1)[0])

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        for name in ("alpha0", "horizon", "beta", "shift", "c"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out
