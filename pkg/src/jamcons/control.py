"""Ternary control law with a bounded hold after each attempt.

At attempt ``k`` agent ``i`` computes ``ut_k = phi_k * sign_eps(ave_k)`` and
sets the input

* ``ut_k`` until ``t_k + T``           if ``ut_k != 0``
* ``ut_{k-1}`` until ``t_{k-1} + T``   if ``ut_k == 0`` and ``t_k < t_{k-1} + T``
* ``0``                                otherwise

The input is also cut at the next attempt, which re-runs the rule.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "OutOfOrderAttempt",
    "AttemptOutcome",
    "ControllerState",
    "sign_eps",
    "on_attempt",
    "control_value",
]


class OutOfOrderAttempt(ValueError):
    pass


def sign_eps(z: float, eps: float) -> int:
    """Sign of ``z`` with a deadband: 0 when ``|z| < eps``, inclusive at ``eps``."""
    if z >= eps:
        return 1
    if z <= -eps:
        return -1
    return 0


@dataclass(frozen=True)
class AttemptOutcome:
    time: float
    phi: int
    ave: float = float("nan")


@dataclass
class ControllerState:
    """Memory of one agent's controller.

    ``k == -1`` means no attempt processed yet; ``uhat`` is emitted on
    ``[t_prev, active_until)``.
    """

    agent: int
    k: int = -1
    t_prev: float = float("-inf")
    utilde_prev: int = 0
    uhat: int = 0
    active_until: float = float("-inf")

    def step(self, t: float, phi: int, ave: float, hold: float, eps: float) -> int:
        """Process the next attempt in place and return the new input value."""
        if t < self.t_prev:
            raise OutOfOrderAttempt(
                f"agent {self.agent}: attempt at {t!r} precedes previous attempt at {self.t_prev!r}"
            )
        ut = sign_eps(ave, eps) if phi else 0
        if ut != 0 or self.k < 0:
            uh, until = ut, t + hold
        elif t < self.t_prev + hold:
            uh, until = self.utilde_prev, self.t_prev + hold
        else:
            uh, until = 0, t + hold
        self.k += 1
        self.t_prev = t
        self.utilde_prev = ut
        self.uhat = uh
        self.active_until = until
        return uh

    def value(self, t: float) -> int:
        if self.k < 0 or t < self.t_prev:
            return 0
        return self.uhat if t < self.active_until else 0


def on_attempt(s: ControllerState, o: AttemptOutcome, hold: float, eps: float) -> ControllerState:
    """Functional form of :meth:`ControllerState.step`; ``s`` is left untouched."""
    new = ControllerState(s.agent, s.k, s.t_prev, s.utilde_prev, s.uhat, s.active_until)
    new.step(o.time, o.phi, o.ave, hold, eps)
    return new


def control_value(s: ControllerState, t: float) -> int:
    return s.value(t)
