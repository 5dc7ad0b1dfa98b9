"""Trajectory invariants: hold guarantee, Lyapunov decay, speed bound, settling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import is_jammed
from .engine import Trajectory, consensus_times, lyapunov, neighbor_offsets

__all__ = [
    "HoldViolation",
    "hold_violations",
    "theta_violations",
    "lyapunov_max_increase",
    "lyapunov_decay_violations",
    "speed_violations",
    "settled_through_horizon",
    "phi_mismatches",
    "success_counts",
]


@dataclass(frozen=True)
class HoldViolation:
    agent: int
    slot: int
    time: float


def _qualifying(tr: Trajectory, i: int):
    a = tr.attempts_of(i)
    eps = tr.config.params.eps
    q = (a["phi"] == 1) & (np.abs(np.nan_to_num(a["ave"])) >= eps)
    return a, q


def hold_violations(tr: Trajectory) -> list[HoldViolation]:
    """Successful attempts with ``|ave| >= eps`` not followed by ``|u| = 1`` for ``T``.

    Checked on the recorded breakpoints: every segment overlapping
    ``[t_k, t_k + T)`` must carry a nonzero input for agent ``i``.
    """
    out = []
    times = tr.times
    for i in range(tr.n):
        a, q = _qualifying(tr, i)
        if not q.any():
            continue
        T = tr.config.params.hold[i]
        tk = a["time"][q]
        zero = np.concatenate(([0], np.cumsum(tr.inputs[:, i] == 0)))
        start = np.searchsorted(times, tk, side="right") - 1
        stop = np.searchsorted(times, np.minimum(tk + T, tr.horizon), side="left")
        stop = np.maximum(stop, start + 1)
        bad = (zero[stop] - zero[start]) > 0
        for k in np.flatnonzero(bad):
            out.append(HoldViolation(i, int(a["slot"][q][k]), float(tk[k])))
    return out


def theta_violations(tr: Trajectory) -> list[HoldViolation]:
    """The sign set at a qualifying attempt must persist for ``theta_k``.

    ``theta_k`` is ``t_{k+1} - t_k`` when the next attempt comes within ``T``
    and itself sets a nonzero sign, otherwise ``T``.
    """
    out = []
    eps = tr.config.params.eps
    for i in range(tr.n):
        a = tr.attempts_of(i)
        T = tr.config.params.hold[i]
        ut = np.where(a["phi"] == 1, np.sign(np.nan_to_num(a["ave"])) * (np.abs(np.nan_to_num(a["ave"])) >= eps), 0)
        t = a["time"]
        for k in np.flatnonzero(ut != 0):
            if k + 1 < len(t) and t[k + 1] - t[k] < T and ut[k + 1] != 0:
                theta = t[k + 1] - t[k]
            else:
                theta = T
            end = min(t[k] + theta, tr.horizon)
            s = int(np.searchsorted(tr.times, t[k], side="right") - 1)
            e = max(int(np.searchsorted(tr.times, end, side="left")), s + 1)
            if np.any(tr.inputs[s:e, i] != ut[k]):
                out.append(HoldViolation(i, int(a["slot"][k]), float(t[k])))
    return out


def lyapunov_max_increase(tr: Trajectory) -> float:
    """Largest one-step increase of ``0.5 x^T L x`` across breakpoints (<= 0 ideally)."""
    V = lyapunov(tr.states, tr.config.graph.laplacian())
    if len(V) < 2:
        return 0.0
    return float(np.max(np.diff(V)))


def lyapunov_decay_violations(tr: Trajectory, tol: float = 1e-9) -> int:
    """Segments where ``V`` drops by less than ``alpha * length * #moving agents``.

    ``alpha = min_i (eps - 2 d_i T_i)``; every moving agent is inside a hold
    started by a qualifying attempt, where ``|ave_i| >= alpha``.
    """
    p, g = tr.config.params, tr.config.graph
    alpha = min(p.eps - 2 * g.degree(i) * p.hold[i] for i in range(g.n))
    V = lyapunov(tr.states, g.laplacian())
    moving = np.count_nonzero(tr.inputs[:-1], axis=1)
    need = -alpha * np.diff(tr.times) * moving
    return int(np.count_nonzero(np.diff(V) > need + tol))


def speed_violations(tr: Trajectory, tol: float = 1e-12) -> int:
    dx = np.abs(np.diff(tr.states, axis=0))
    dt = np.diff(tr.times)[:, None]
    return int(np.count_nonzero(dx > dt + tol * (1 + np.abs(tr.states[1:]))))


def settled_through_horizon(tr: Trajectory) -> bool:
    """Settling is finite and every breakpoint after it lies strictly inside the set.

    ``|ave_i|`` is convex on each segment, so endpoint checks cover the
    segments in between.
    """
    eps = tr.config.params.eps
    ct = consensus_times(tr)
    if ct.settling is None:
        return False
    after = tr.times > ct.settling
    ave = neighbor_offsets(tr.states[after], tr.config.graph.laplacian())
    return bool(np.all(np.abs(ave) < eps))


def phi_mismatches(tr: Trajectory) -> int:
    """Logged outcomes that disagree with the realized closed attack intervals."""
    expected = ~is_jammed(tr.attacks, tr.attempt_time) if len(tr.attacks) else np.ones(len(tr.attempt_time), bool)
    return int(np.count_nonzero(expected.astype(np.int8) != tr.attempt_phi))


def success_counts(tr: Trajectory) -> np.ndarray:
    return np.bincount(tr.attempt_agent, weights=tr.attempt_phi, minlength=tr.n).astype(int)
