"""Randomized attempt times: one uniform draw per agent per slot.

Agent ``i`` attempts once in every slot ``[k*delta_i, (k+1)*delta_i)``, at a
time drawn uniformly from that slot.

Stream rule: agent ``i`` owns the Philox stream seeded by
``SeedSequence(seed, spawn_key=(0, i))`` and its ``k``-th attempt uses the
``k``-th double drawn from that stream. Schedules are therefore prefix-stable
(a longer horizon only appends slots) and one agent's draws never depend on
another agent's parameters.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .graph import Graph

__all__ = [
    "ProtocolParams",
    "ParamViolation",
    "CommSchedule",
    "validate_params",
    "draw_schedule",
    "agent_stream",
    "SCHEDULE_STREAM",
    "INIT_STREAM",
]

# spawn_key prefixes; keep distinct so that streams never overlap
SCHEDULE_STREAM = 0
INIT_STREAM = 1


@dataclass(frozen=True)
class ProtocolParams:
    """Per-agent slot lengths ``delta``, hold times ``hold``, deadband ``eps``."""

    delta: tuple[float, ...]
    hold: tuple[float, ...]
    eps: float

    def __post_init__(self):
        if len(self.delta) != len(self.hold):
            raise ValueError("delta and hold must have one entry per agent")
        if any(not d > 0 for d in self.delta):
            raise ValueError(f"slot lengths must be positive, got {self.delta}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @classmethod
    def build(cls, n: int, delta, hold, eps: float) -> "ProtocolParams":
        """Broadcast scalars to ``n`` agents.

        ``hold`` may be a number, a sequence, or a rule string ``"delta/<c>"``.
        """
        d = _broadcast(n, delta, "delta")
        if isinstance(hold, str):
            h = _hold_rule(hold, d)
        else:
            h = _broadcast(n, hold, "T")
        return cls(delta=d, hold=h, eps=float(eps))

    @property
    def n(self) -> int:
        return len(self.delta)

    @property
    def uniform_delta(self) -> bool:
        return len(set(self.delta)) == 1

    def to_dict(self) -> dict:
        return {"delta": list(self.delta), "T": list(self.hold), "epsilon": self.eps}


def _broadcast(n: int, value, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * n
    vals = tuple(float(v) for v in value)
    if len(vals) != n:
        raise ValueError(f"{name}: expected {n} entries, got {len(vals)}")
    return vals


def _hold_rule(rule: str, delta: Sequence[float]) -> tuple[float, ...]:
    head, sep, tail = rule.replace(" ", "").partition("/")
    if head != "delta" or not sep:
        raise ValueError(f"unknown hold-time rule {rule!r}; expected 'delta/<number>'")
    c = float(tail)
    return tuple(d / c for d in delta)


@dataclass(frozen=True)
class ParamViolation:
    agent: int
    hold: float
    bound: float
    reason: str

    def __str__(self) -> str:
        return f"agent {self.agent}: T={self.hold!r} violates {self.reason} (bound {self.bound!r})"


def validate_params(p: ProtocolParams, g: Graph) -> ParamViolation | None:
    """Return ``None`` if ``0 < T_i < min(eps / (2 d_i), delta_i)`` for every agent.

    Otherwise return the first violating agent together with the bound it
    breaks.
    """
    if p.n != g.n:
        return ParamViolation(-1, float("nan"), float(g.n), f"parameter count {p.n} != n")
    for i in range(g.n):
        T = p.hold[i]
        if not T > 0:
            return ParamViolation(i, T, 0.0, "T > 0")
        eps_bound = p.eps / (2 * g.degree(i))
        if not T < eps_bound:
            return ParamViolation(i, T, eps_bound, "T < eps/(2 d_i)")
        if not T < p.delta[i]:
            return ParamViolation(i, T, p.delta[i], "T < delta_i")
    return None


def agent_stream(seed: int, agent: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(SCHEDULE_STREAM, int(agent)))
    return np.random.Generator(np.random.Philox(ss))


def slot_times(delta: float, u: np.ndarray, k0: int = 0) -> np.ndarray:
    """Map unit draws ``u`` in [0, 1) to attempt times in consecutive slots."""
    k = np.arange(k0, k0 + len(u), dtype=float)
    t = k * delta + u * delta
    # rounding can push k*delta + u*delta onto the next slot boundary
    upper = (k + 1.0) * delta
    over = t >= upper
    if over.any():
        t[over] = np.nextafter(upper[over], -np.inf)
    return t


@dataclass(frozen=True)
class CommSchedule:
    """Realized attempt times; ``times[i][k]`` lies in agent i's slot k."""

    times: tuple[np.ndarray, ...]
    delta: tuple[float, ...]
    seed: int
    horizon: float

    @property
    def n(self) -> int:
        return len(self.times)

    def slots(self, i: int) -> int:
        return len(self.times[i])


def draw_schedule(p: ProtocolParams, g: Graph, horizon: float, seed: int) -> CommSchedule:
    """Draw every attempt whose slot starts before ``horizon``."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if p.n != g.n:
        raise ValueError(f"parameters for {p.n} agents, graph has {g.n}")
    times = []
    for i, d in enumerate(p.delta):
        K = max(1, math.ceil(horizon / d))
        u = agent_stream(seed, i).random(K)
        t = slot_times(d, u)
        t.setflags(write=False)
        times.append(t)
    return CommSchedule(times=tuple(times), delta=p.delta, seed=int(seed), horizon=float(horizon))
