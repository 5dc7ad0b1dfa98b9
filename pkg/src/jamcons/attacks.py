"""Jamming processes and the duration budget they must respect.

Attacks are closed intervals ``[a_k, a_k + tau_k]`` with
``a_{k+1} > a_k + tau_k``. The budget condition is

    |jammed time in [s, t]| <= kappa + rho * (t - s)   for all 0 <= s <= t.

Both the checker and the online budget use the same observation: for a
window ``[s, t]`` the slack ``kappa + rho*(t - s) - jammed(s, t)`` is
piecewise linear, falling in ``s`` across gaps and rising across attacks, so
only attack starts (and 0) matter for ``s`` and only attack ends (and the
horizon) matter for ``t``. Pair maximisation then reduces to a running
minimum of ``P_j - rho * a_j`` where ``P_j`` is the jammed time before
attack ``j``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidInterval",
    "NonuniformDelta",
    "OutOfOrderEvent",
    "AttackIntervals",
    "Violation",
    "periodic_schedule",
    "explicit_intervals",
    "jammed_measure",
    "is_jammed",
    "check_assumption1",
    "aware_budget",
    "budget_at",
    "clip_to_budget",
    "AwareAttacker",
    "SlotStart",
    "SensedAttempt",
    "JamForcedEnd",
    "aware_step",
]

ASSUMPTION_TOL = 1e-9


class InvalidInterval(ValueError):
    pass


class NonuniformDelta(ValueError):
    pass


class OutOfOrderEvent(ValueError):
    pass


@dataclass(frozen=True)
class AttackIntervals:
    """Ordered, disjoint, closed jamming intervals (start, duration)."""

    starts: np.ndarray
    durations: np.ndarray
    kappa: float | None = None
    rho: float | None = None
    ends: np.ndarray = field(init=False, repr=False, compare=False)
    _prefix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.ascontiguousarray(self.starts, dtype=float)
        d = np.ascontiguousarray(self.durations, dtype=float)
        if a.shape != d.shape or a.ndim != 1:
            raise InvalidInterval("starts and durations must be 1-d arrays of equal length")
        if len(a) and (a[0] < 0 or (d < 0).any()):
            raise InvalidInterval("attack starts and durations must be nonnegative")
        e = a + d
        if len(a) > 1 and not (a[1:] > e[:-1]).all():
            k = int(np.argmax(~(a[1:] > e[:-1])))
            raise InvalidInterval(
                f"attack {k + 1} starts at {float(a[k + 1])!r}, not after the end {float(e[k])!r} of attack {k}"
            )
        for arr in (a, d, e):
            arr.setflags(write=False)
        prefix = np.concatenate(([0.0], np.cumsum(d)))
        prefix.setflags(write=False)
        object.__setattr__(self, "starts", a)
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "ends", e)
        object.__setattr__(self, "_prefix", prefix)

    def __len__(self) -> int:
        return len(self.starts)

    @classmethod
    def empty(cls, kappa=None, rho=None) -> "AttackIntervals":
        return cls(np.empty(0), np.empty(0), kappa, rho)

    def pairs(self) -> list[list[float]]:
        return [[float(a), float(d)] for a, d in zip(self.starts, self.durations)]

    def measure(self, tau: float, t: float) -> float:
        return jammed_measure(self, tau, t)

    def jammed(self, t) -> bool | np.ndarray:
        return is_jammed(self, t)


def explicit_intervals(pairs: Sequence[Sequence[float]], kappa=None, rho=None) -> AttackIntervals:
    if len(pairs) == 0:
        return AttackIntervals.empty(kappa, rho)
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInterval("intervals must be a list of [start, duration] pairs")
    return AttackIntervals(arr[:, 0], arr[:, 1], kappa, rho)


def periodic_schedule(rho: float, sigma: float, horizon: float, kappa: float | None = None) -> AttackIntervals:
    """Period ``1/sigma``; each period idles for ``(1-rho)/sigma`` then jams for ``rho/sigma``."""
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if not sigma > 0 or not horizon > 0:
        raise ValueError("sigma and horizon must be positive")
    offset = (1 - rho) / sigma
    K = math.floor((horizon - offset) * sigma) + 1 if horizon >= offset else 0
    k = np.arange(K + 1, dtype=float)
    a = k / sigma + offset
    a = a[a <= horizon]
    return AttackIntervals(a, np.full(len(a), rho / sigma), kappa, rho)


def jammed_measure(A: AttackIntervals, tau: float, t: float) -> float:
    """Lebesgue measure of the jammed set inside ``[tau, t]``."""
    if not 0 <= tau <= t:
        raise InvalidInterval(f"need 0 <= tau <= t, got tau={tau!r}, t={t!r}")
    lo = int(np.searchsorted(A.ends, tau, side="left"))
    hi = int(np.searchsorted(A.starts, t, side="right"))
    if lo >= hi:
        return 0.0
    total = A._prefix[hi] - A._prefix[lo]
    total -= max(0.0, tau - A.starts[lo])
    total -= max(0.0, A.ends[hi - 1] - t)
    return float(max(total, 0.0))


def is_jammed(A: AttackIntervals, t):
    """True where ``t`` falls in some closed attack interval; vectorizes over arrays."""
    idx = np.searchsorted(A.starts, t, side="right") - 1
    if np.ndim(t) == 0:
        return bool(idx >= 0 and t <= A.ends[idx])
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=bool)
    ok = idx >= 0
    out[ok] = t[ok] <= A.ends[idx[ok]]
    return out


@dataclass(frozen=True)
class Violation:
    tau: float
    t: float
    excess: float

    def __str__(self) -> str:
        return f"jammed time in [{self.tau!r}, {self.t!r}] exceeds kappa + rho*(t - tau) by {self.excess!r}"


def check_assumption1(
    A: AttackIntervals,
    kappa: float,
    rho: float,
    horizon: float,
    tol: float = ASSUMPTION_TOL,
) -> Violation | None:
    """Exact worst-window check of the duration budget over ``[0, horizon]``.

    Returns ``None`` when every window satisfies the budget to within ``tol``,
    else the maximizing window and its excess.
    """
    a = np.minimum(A.starts, horizon)
    e = np.minimum(A.ends, horizon)
    keep = A.starts <= horizon
    a, e = a[keep], e[keep]
    d = e - a
    P = np.concatenate(([0.0], np.cumsum(d)))
    # left endpoints: tau = 0 (value 0) and tau = a_i (value P_i - rho*a_i)
    left = np.concatenate(([0.0], P[:-1] - rho * a))
    left_pos = np.concatenate(([0.0], a))
    run_idx = _running_argmin(left)
    # right endpoints: t = e_j pairs with left candidates 0..j+1; t = horizon with all
    best_excess, best = -math.inf, (0.0, 0.0)
    if len(a):
        right = P[1:] - rho * e
        li = run_idx[1:]
        excess = right - left[li] - kappa
        j = int(np.argmax(excess))
        best_excess, best = float(excess[j]), (float(left_pos[li[j]]), float(e[j]))
    li = int(run_idx[-1])
    h_excess = float(P[-1] - rho * horizon - left[li] - kappa)
    if h_excess > best_excess:
        best_excess, best = h_excess, (float(left_pos[li]), float(horizon))
    if best_excess > tol:
        return Violation(best[0], best[1], best_excess)
    return None


def _running_argmin(v: np.ndarray) -> np.ndarray:
    mins = np.minimum.accumulate(v)
    # index of the running minimum: last position where v hits the running min
    hit = np.where(v == mins, np.arange(len(v)), 0)
    return np.maximum.accumulate(hit)


def budget_at(A: AttackIntervals, kappa: float, rho: float, start: float, cap: float) -> float:
    """Longest jam beginning at ``start`` (capped at ``cap``) that keeps the budget.

    ``A`` must end before ``start``.
    """
    keep = A.starts <= start
    a = A.starts[keep]
    measures = np.array([jammed_measure(A, x, start) for x in a]) if len(a) else np.empty(0)
    cand = kappa + rho * (start - a) - measures
    slack = min(kappa, kappa + rho * start - jammed_measure(A, 0.0, start), *cand.tolist())
    return float(min(max(slack / (1 - rho), 0.0), cap))


def aware_budget(history: AttackIntervals, kappa: float, rho: float, k: int, delta: float) -> float:
    """Jam budget ``s_k`` for the slot starting at ``k * delta``."""
    return budget_at(history, kappa, rho, k * delta, delta)


def clip_to_budget(
    starts: Sequence[float], durations: Sequence[float], kappa: float, rho: float
) -> AttackIntervals:
    """Shorten a proposed attack sequence, in order, until it respects the budget.

    Starts must be increasing; each duration is also trimmed so the interval
    ends strictly before the next start.
    """
    a = [float(x) for x in starts]
    out_a: list[float] = []
    out_d: list[float] = []
    jam, run_min = 0.0, 0.0
    for k, (s, want) in enumerate(zip(a, durations)):
        slack = min(kappa, kappa + rho * s - jam + run_min)
        dur = min(float(want), max(slack / (1 - rho), 0.0))
        if k + 1 < len(a):
            nxt = a[k + 1]
            while dur > 0 and not s + dur < nxt:
                # trimming to the gap can round back onto the next start
                dur = max(0.0, min(np.nextafter(nxt, -np.inf) - s, np.nextafter(dur, 0.0)))
        if dur <= 0 and want > 0:
            continue
        run_min = min(run_min, jam - rho * s)
        jam += dur
        out_a.append(s)
        out_d.append(dur)
    return AttackIntervals(np.array(out_a), np.array(out_d), kappa, rho)


@dataclass(frozen=True)
class SlotStart:
    k: int


@dataclass(frozen=True)
class SensedAttempt:
    t: float
    agent: int


@dataclass(frozen=True)
class JamForcedEnd:
    k: int


class AwareAttacker:
    """Online attacker that jams from each slot start until all agents have tried.

    The jam in slot ``k`` covers ``[k*delta, k*delta + min(tbar_k - k*delta, s_k)]``
    where ``tbar_k`` is the last attempt of the slot and ``s_k`` the budget.
    An attempt is blocked iff it falls inside that closed interval. The budget
    is kept in O(1) per slot from the total jammed time and a running minimum
    of ``P_j - rho * a_j`` over committed attacks.
    """

    def __init__(self, n: int, delta: float, kappa: float, rho: float):
        if not 0 < rho < 1 or kappa < 0 or not delta > 0:
            raise ValueError("need kappa >= 0, 0 < rho < 1, delta > 0")
        self.n = n
        self.delta = float(delta)
        self.kappa = float(kappa)
        self.rho = float(rho)
        self.k = -1
        self.budget = 0.0
        self.jam_end: float | None = None
        self.open = False
        self.seen: set[int] = set()
        self.last_attempt = -math.inf
        self._jam = 0.0
        self._run_min = 0.0
        self._starts: list[float] = []
        self._durs: list[float] = []

    def next_budget(self, k: int) -> float:
        start = k * self.delta
        slack = min(self.kappa, self.kappa + self.rho * start - self._jam + self._run_min)
        return min(max(slack / (1 - self.rho), 0.0), self.delta)

    def _commit(self, end: float) -> None:
        start = self.k * self.delta
        self._run_min = min(self._run_min, self._jam - self.rho * start)
        self._jam += end - start
        self._starts.append(start)
        self._durs.append(end - start)
        self.open = False

    def slot_start(self, k: int) -> float | None:
        """Begin slot ``k``; return the forced end time of its jam, if any."""
        if k != self.k + 1:
            raise OutOfOrderEvent(f"slot {k} started after slot {self.k}")
        if self.open:
            # only reachable when the forced end coincides with this slot start
            self._commit(min(self.jam_end, np.nextafter(k * self.delta, -np.inf)))
        self.k = k
        self.seen = set()
        self.budget = self.next_budget(k)
        if self.budget > 0:
            self.jam_end = k * self.delta + self.budget
            self.open = True
        else:
            self.jam_end = None
        self.last_attempt = -math.inf
        return self.jam_end

    def sense_attempt(self, t: float, agent: int) -> bool:
        """Record an attempt; return True if it is blocked."""
        start = self.k * self.delta
        if not start <= t < (self.k + 1) * self.delta:
            raise OutOfOrderEvent(f"attempt at {t!r} outside current slot {self.k}")
        if agent in self.seen:
            raise OutOfOrderEvent(f"agent {agent} attempted twice in slot {self.k}")
        if t < self.last_attempt:
            raise OutOfOrderEvent(f"attempt at {t!r} precedes the previous one at {self.last_attempt!r}")
        if self.open and t > self.jam_end:
            # the forced end was due before this attempt
            self._commit(self.jam_end)
        self.seen.add(agent)
        self.last_attempt = t
        blocked = self.jam_end is not None and t <= self.jam_end
        if self.open and len(self.seen) == self.n:
            self._commit(t)
        return blocked

    def forced_end(self, k: int) -> None:
        if k == self.k and self.open:
            self._commit(self.jam_end)

    def finish(self, t_end: float) -> None:
        """Close a jam still running when the simulation stops at ``t_end``."""
        if self.open:
            self._commit(max(min(self.jam_end, t_end), self.k * self.delta))

    def history(self) -> AttackIntervals:
        return AttackIntervals(np.array(self._starts), np.array(self._durs), self.kappa, self.rho)

    def step(self, event):
        """Dispatch one event; returns the forced-end time or blocked flag when relevant."""
        if isinstance(event, SlotStart):
            return self.slot_start(event.k)
        if isinstance(event, SensedAttempt):
            return self.sense_attempt(event.t, event.agent)
        if isinstance(event, JamForcedEnd):
            return self.forced_end(event.k)
        raise TypeError(f"unknown attacker event {event!r}")


def aware_step(state: AwareAttacker, event):
    return state.step(event)
