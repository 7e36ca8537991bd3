"""Step-size schedules and the constant-step ceiling ``gamma_bar``."""

import logging
import math
from dataclasses import dataclass
from enum import Enum

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)


class StepKind(str, Enum):
    CONSTANT = "constant"
    DIMINISHING = "diminishing"
    DECREASE_THEN_HOLD = "decrease-then-hold"


@dataclass(frozen=True)
class StepSchedule:
    """``gamma^r``: constant, harmonic ``gamma0 / (1 + eta r)``, or harmonic clamped at ``floor``."""

    kind: StepKind = StepKind.CONSTANT
    gamma0: float = 1.0
    eta: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StepKind(self.kind))
        if not 0 < self.gamma0 <= 1:
            raise InvalidArgumentError("gamma0 must lie in (0, 1]")
        if self.eta < 0:
            raise InvalidArgumentError("eta must be nonnegative")
        if self.kind is StepKind.DIMINISHING and self.eta <= 0:
            raise InvalidArgumentError("a diminishing schedule needs eta > 0")
        if self.kind is StepKind.DECREASE_THEN_HOLD:
            if not 0 < self.floor <= self.gamma0:
                raise InvalidArgumentError("floor must lie in (0, gamma0]")

    @classmethod
    def constant(cls, gamma):
        return cls(StepKind.CONSTANT, gamma)

    @property
    def limit(self):
        """``lim_r gamma^r``."""
        if self.kind is StepKind.CONSTANT:
            return self.gamma0
        if self.kind is StepKind.DIMINISHING:
            return 0.0
        return self.floor if self.eta > 0 else self.gamma0


def step_at(schedule, r):
    if schedule.kind is StepKind.CONSTANT:
        return schedule.gamma0
    g = schedule.gamma0 / (1.0 + schedule.eta * r)
    if schedule.kind is StepKind.DECREASE_THEN_HOLD:
        return max(schedule.floor, g)
    return g


def gamma_bar(tau, l_grad_f, l_tilde, n):
    """``min(tau / L_grad_f, tau / (tau + L~ sqrt(n)))``."""
    if not (tau > 0 and l_grad_f > 0 and l_tilde > 0 and n > 0):
        raise InvalidArgumentError("gamma_bar needs positive tau, L_grad_f, L~ and n")
    return min(tau / l_grad_f, tau / (tau + l_tilde * math.sqrt(n)))


def check_step_gate(schedule, gbar):
    """Refuse schedules whose limit is not below ``gbar``.

    With ``gbar=None`` (constants unknown) the gate is skipped with a warning.
    """
    if gbar is None:
        logger.warning("problem constants unknown; skipping the gamma_bar step gate")
        return
    if not schedule.limit < gbar:
        raise InvalidArgumentError(
            f"limiting step {schedule.limit:.6g} is not below gamma_bar = {gbar:.6g}"
        )
