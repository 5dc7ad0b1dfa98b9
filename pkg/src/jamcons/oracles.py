"""Slow, independent reference computations used to cross-check the fast paths.

None of these reuse the prefix-sum, candidate-set or event-queue code they
are meant to check.
"""

from __future__ import annotations

import math

import numpy as np

from .attacks import AttackIntervals
from .control import sign_eps
from .engine import Trajectory

__all__ = [
    "clip_sum_measure",
    "grid_measure",
    "grid_budget",
    "grid_budget_tolerance",
    "grid_budget_excess",
    "euler_replay",
]


def clip_sum_measure(A: AttackIntervals, tau: float, t: float) -> float:
    """Direct sum of clipped interval lengths."""
    lo = np.maximum(A.starts, tau)
    hi = np.minimum(A.starts + A.durations, t)
    return float(np.sum(np.clip(hi - lo, 0.0, None)))


def grid_measure(A: AttackIntervals, tau: float, t: float, cell: float) -> float:
    """Count grid-cell midpoints inside some attack, times the cell width.

    Error is at most one cell per interval boundary inside ``[tau, t]``.
    """
    m = max(1, int(math.ceil((t - tau) / cell)))
    mids = tau + (np.arange(m) + 0.5) * ((t - tau) / m)
    hit = np.zeros(m, dtype=bool)
    for a, d in zip(A.starts, A.durations):
        hit |= (mids >= a) & (mids <= a + d)
    return float(hit.sum() * ((t - tau) / m))


def grid_budget(A: AttackIntervals, kappa: float, rho: float, k: int, delta: float, frac: float = 1e-4) -> float:
    """Budget for slot ``k`` by minimizing the window slack over a ``tau`` grid.

    The grid spacing is ``frac * k * delta``; the jammed measure for each grid
    point is a direct clip-and-sum over all intervals.
    """
    start = k * delta
    if start <= 0:
        taus = np.array([0.0])
    else:
        m = int(round(1 / frac))
        taus = np.linspace(0.0, start, m + 1)
    meas = np.zeros(len(taus))
    ends = A.starts + A.durations
    for c in range(0, len(A), 256):  # chunked to bound memory on long histories
        lo = np.maximum(A.starts[None, c:c + 256], taus[:, None])
        hi = np.minimum(ends[None, c:c + 256], start)
        meas += np.clip(hi - lo, 0.0, None).sum(axis=1)
    slack = kappa + rho * (start - taus) - meas
    return float(min(max(slack.min() / (1 - rho), 0.0), delta))


def grid_budget_tolerance(rho: float, k: int, delta: float, frac: float = 1e-4) -> float:
    """How far the grid minimum can sit above the true one, in budget units.

    The slack has slope ``-rho`` or ``1 - rho`` in ``tau``, so one grid cell
    moves it by at most ``max(rho, 1 - rho) * cell``.
    """
    cell = frac * k * delta
    return max(rho, 1 - rho) * cell / (1 - rho) + 1e-12


def grid_budget_excess(A: AttackIntervals, kappa: float, rho: float, horizon: float, cells: int = 4000) -> float:
    """Max over grid windows ``[tau_i, t_j]`` of jammed time minus the budget."""
    edges = np.linspace(0.0, horizon, cells + 1)
    jam = np.zeros(cells)
    for a, d in zip(A.starts, A.durations):
        lo = np.maximum(edges[:-1], a)
        hi = np.minimum(edges[1:], a + d)
        jam += np.clip(hi - lo, 0.0, None)
    C = np.concatenate(([0.0], np.cumsum(jam)))
    best = -math.inf
    # exhaustive over pairs i <= j, chunked to bound memory
    for i0 in range(0, cells + 1, 512):
        i1 = min(i0 + 512, cells + 1)
        Ci = C[i0:i1, None]
        ti = edges[i0:i1, None]
        val = (C[None, :] - Ci) - kappa - rho * (edges[None, :] - ti)
        mask = np.arange(cells + 1)[None, :] >= np.arange(i0, i1)[:, None]
        best = max(best, float(np.max(np.where(mask, val, -np.inf))))
    return best


def euler_replay(tr: Trajectory, h: float, horizon: float | None = None):
    """Re-run a trajectory with a fixed-step explicit integrator.

    Uses the same attempt times and realized attack intervals. The control
    law is evaluated in its closed form with one-step lookahead: the input set
    at attempt ``k`` is applied on ``[t_k, min(t_{k+1}, ttilde_k))``.
    Attempts are processed at the first grid time not before them, using the
    grid state. Returns grid times and states.
    """
    cfg = tr.config
    g, p = cfg.graph, cfg.params
    H = cfg.horizon if horizon is None else min(horizon, cfg.horizon)
    n = g.n
    L = g.laplacian()
    A = tr.attacks
    ends = A.starts + A.durations

    def jammed(t):
        hit = (A.starts <= t) & (t <= ends)
        return bool(hit.any())

    sched = [np.asarray(s) for s in tr.schedule.times]
    nxt = [0] * n  # index of the next unprocessed attempt
    ut_prev = [0] * n
    uh = [0] * n
    t_hat = [0.0] * n  # input uh is applied on [t_k, t_hat)
    steps = int(math.floor(H / h + 1e-9))
    grid = np.arange(steps + 1) * h
    out = np.empty((steps + 1, n))
    x = np.array(cfg.x0, dtype=float)
    out[0] = x
    u = np.zeros(n)
    for m in range(steps):
        tm = grid[m]
        for i in range(n):
            s = sched[i]
            while nxt[i] < len(s) and s[nxt[i]] <= tm:
                k = nxt[i]
                tk = s[k]
                ave = -(L[i] @ x)
                ut = sign_eps(ave, p.eps) if not jammed(tk) else 0
                T = p.hold[i]
                if k == 0 or ut != 0:
                    val, ttilde = ut, tk + T
                elif tk < s[k - 1] + T:
                    val, ttilde = ut_prev[i], s[k - 1] + T
                else:
                    val, ttilde = 0, tk + T
                t_next = s[k + 1] if k + 1 < len(s) else math.inf
                uh[i] = val
                t_hat[i] = min(t_next, ttilde)
                ut_prev[i] = ut
                nxt[i] += 1
            u[i] = uh[i] if (nxt[i] > 0 and tm < t_hat[i]) else 0
        x = x + h * u
        out[m + 1] = x
    return grid, out
