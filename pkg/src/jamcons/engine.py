"""Exact event-driven simulation of ternary consensus under jamming.

Every agent moves at constant speed ``u_i in {-1, 0, 1}`` between events, so
the state is integrated in closed form. A breakpoint is recorded whenever
some input changes; between breakpoints ``x(t) = x_m + u_m * (t - t_m)``.

Event order at equal timestamps: slot start, forced jam end, attempt, hold
expiry. Attempts at equal times are ordered by agent index. Attack intervals
are closed, so an attempt exactly at a jam boundary is blocked.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attacks import (
    AttackIntervals,
    AwareAttacker,
    NonuniformDelta,
    explicit_intervals,
    is_jammed,
    periodic_schedule,
)
from .control import ControllerState
from .graph import Graph
from .schedule import CommSchedule, ProtocolParams, draw_schedule, validate_params

__all__ = [
    "AttackSpec",
    "RunConfig",
    "Trajectory",
    "ConsensusTimes",
    "ConfigError",
    "HorizonTooSmall",
    "simulate",
    "lyapunov",
    "lyapunov_trace",
    "consensus_times",
    "neighbor_offsets",
]

SLOT_START, JAM_END, ATTEMPT, HOLD_EXPIRY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class HorizonTooSmall(UserWarning):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """``kind`` is ``"explicit"``, ``"periodic"`` or ``"aware"``."""

    kind: str = "explicit"
    intervals: tuple[tuple[float, float], ...] = ()
    rho: float | None = None
    sigma: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.kind not in ("explicit", "periodic", "aware"):
            raise ConfigError(f"attack.kind: unknown kind {self.kind!r}")
        if self.kind == "periodic" and (self.rho is None or self.sigma is None):
            raise ConfigError("attack: periodic attacks need 'rho' and 'sigma'")
        if self.kind == "aware" and (self.rho is None or self.kappa is None):
            raise ConfigError("attack: aware attacks need 'rho' and 'kappa'")

    def intervals_for(self, horizon: float) -> AttackIntervals:
        """Fixed intervals for deterministic kinds (built without any schedule)."""
        if self.kind == "explicit":
            return explicit_intervals(self.intervals, self.kappa, self.rho)
        if self.kind == "periodic":
            return periodic_schedule(self.rho, self.sigma, horizon, self.kappa)
        raise ConfigError("aware attacks have no fixed intervals")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "explicit":
            d["intervals"] = [list(p) for p in self.intervals]
        for key in ("rho", "sigma", "kappa"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        return d


@dataclass(frozen=True)
class RunConfig:
    graph: Graph
    params: ProtocolParams
    x0: tuple[float, ...]
    attack: AttackSpec
    horizon: float
    seed: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError(f"horizon: must be positive, got {self.horizon!r}")
        if len(self.x0) != self.graph.n:
            raise ConfigError(f"x0: expected {self.graph.n} entries, got {len(self.x0)}")
        if self.params.n != self.graph.n:
            raise ConfigError(f"params: expected {self.graph.n} agents, got {self.params.n}")

    def replace(self, **changes) -> "RunConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class Trajectory:
    """Piecewise-linear state history plus everything needed to replay it."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    schedule: CommSchedule
    attacks: AttackIntervals
    attempt_agent: np.ndarray
    attempt_slot: np.ndarray
    attempt_time: np.ndarray
    attempt_phi: np.ndarray
    attempt_ave: np.ndarray
    num_events: int
    config: RunConfig = field(repr=False)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> float:
        return self.config.horizon

    def state_at(self, t) -> np.ndarray:
        """Exact states at time(s) ``t`` (clipped to ``[0, horizon]``)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 1)
        dt = (t - self.times[idx])[..., None]
        return self.states[idx] + self.inputs[idx] * dt

    def input_at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.inputs[np.clip(idx, 0, len(self.times) - 1)]

    def attempts_of(self, i: int) -> dict[str, np.ndarray]:
        sel = self.attempt_agent == i
        order = np.argsort(self.attempt_slot[sel], kind="stable")
        return {
            "slot": self.attempt_slot[sel][order],
            "time": self.attempt_time[sel][order],
            "phi": self.attempt_phi[sel][order],
            "ave": self.attempt_ave[sel][order],
        }

    def phi_matrix(self) -> np.ndarray:
        """Success flags as an ``(n, K)`` array over the slots every agent completed."""
        K = min(int(np.sum(self.attempt_agent == i)) for i in range(self.n))
        out = np.zeros((self.n, K), dtype=np.int8)
        for i in range(self.n):
            a = self.attempts_of(i)
            out[i] = a["phi"][:K]
        return out


def _merged_attempts(schedule: CommSchedule, horizon: float):
    ts, ag, sl = [], [], []
    for i, t in enumerate(schedule.times):
        t = t[t <= horizon]
        ts.append(t)
        ag.append(np.full(len(t), i, dtype=np.int64))
        sl.append(np.arange(len(t), dtype=np.int64))
    t = np.concatenate(ts)
    a = np.concatenate(ag)
    s = np.concatenate(sl)
    order = np.lexsort((a, t))
    return t[order], a[order], s[order]


def simulate(cfg: RunConfig, schedule: CommSchedule | None = None, strict: bool = True) -> Trajectory:
    """Run one realization to ``cfg.horizon``.

    ``schedule`` defaults to :func:`draw_schedule` with ``cfg.seed``; pass one
    explicitly to replay fixed attempt times. With ``strict`` the hold times
    must satisfy ``0 < T_i < min(eps/(2 d_i), delta_i)``.
    """
    g, p, H = cfg.graph, cfg.params, float(cfg.horizon)
    if strict:
        bad = validate_params(p, g)
        if bad is not None:
            raise ConfigError(f"params: {bad}")
    if schedule is None:
        schedule = draw_schedule(p, g, H, cfg.seed)
    n = g.n
    nbrs = [list(nb) for nb in g.neighbors]
    deg = [len(nb) for nb in nbrs]
    hold = list(p.hold)
    eps = p.eps

    att_t, att_a, att_k = _merged_attempts(schedule, H)
    m = len(att_t)

    aware = cfg.attack.kind == "aware"
    attacker = None
    heap: list = []
    seq = 0
    if aware:
        if not p.uniform_delta:
            raise NonuniformDelta("aware attacks need a common slot length for all agents")
        attacker = AwareAttacker(n, p.delta[0], cfg.attack.kappa, cfg.attack.rho)
        heap.append((0.0, SLOT_START, seq, 0))
        seq += 1
        blocked = None
    else:
        fixed = cfg.attack.intervals_for(H)
        blocked = is_jammed(fixed, att_t).tolist() if len(fixed) else [False] * m

    ctrl = [ControllerState(i) for i in range(n)]
    token = [0] * n
    x = [float(v) for v in cfg.x0]
    u = [0] * n
    t_bp = 0.0
    bp_t = [0.0]
    bp_x = [tuple(x)]
    bp_u = [tuple(u)]
    phis = np.ones(m, dtype=np.int8)
    aves = np.full(m, np.nan)
    num_events = 0

    def set_input(i: int, val: int, t: float) -> None:
        nonlocal t_bp
        if t != t_bp:
            dt = t - t_bp
            for j in range(n):
                if u[j]:
                    x[j] += u[j] * dt
            t_bp = t
        u[i] = val
        if bp_t[-1] == t:
            bp_x[-1] = tuple(x)
            bp_u[-1] = tuple(u)
        else:
            bp_t.append(t)
            bp_x.append(tuple(x))
            bp_u.append(tuple(u))

    def fire(ev) -> None:
        nonlocal seq
        t, kind, _, payload = ev[:4]
        if kind == HOLD_EXPIRY:
            i = payload
            if ev[4] == token[i] and u[i] != 0:
                set_input(i, 0, t)
        elif kind == SLOT_START:
            k = payload
            end = attacker.slot_start(k)
            if end is not None:
                heapq.heappush(heap, (end, JAM_END, seq, k))
                seq += 1
            nxt = (k + 1) * attacker.delta
            if nxt <= H:
                heapq.heappush(heap, (nxt, SLOT_START, seq, k + 1))
                seq += 1
        else:
            attacker.forced_end(payload)

    for idx in range(m):
        t = float(att_t[idx])
        while heap and (heap[0][0] < t or (heap[0][0] == t and heap[0][1] < ATTEMPT)):
            fire(heapq.heappop(heap))
            num_events += 1
        i = int(att_a[idx])
        num_events += 1
        if aware:
            phi = 0 if attacker.sense_attempt(t, i) else 1
        else:
            phi = 0 if blocked[idx] else 1
        if phi:
            dt = t - t_bp
            xi = x[i] + u[i] * dt
            ave = -deg[i] * xi
            for j in nbrs[i]:
                ave += x[j] + u[j] * dt
            aves[idx] = ave
        else:
            phis[idx] = 0
            ave = 0.0
        c = ctrl[i]
        uh = c.step(t, phi, ave, hold[i], eps)
        token[i] += 1
        if uh != u[i]:
            set_input(i, uh, t)
        if uh != 0:
            heapq.heappush(heap, (c.active_until, HOLD_EXPIRY, seq, i, token[i]))
            seq += 1

    while heap and heap[0][0] <= H:
        fire(heapq.heappop(heap))
        num_events += 1
    if aware:
        attacker.finish(H)
        realized = attacker.history()
    else:
        realized = fixed

    # closing breakpoint at the horizon
    dt = H - t_bp
    xf = tuple(x[j] + u[j] * dt for j in range(n))
    if bp_t[-1] == H:
        bp_x[-1] = xf
    else:
        bp_t.append(H)
        bp_x.append(xf)
        bp_u.append(tuple(u))

    return Trajectory(
        times=np.array(bp_t),
        states=np.array(bp_x, dtype=float).reshape(len(bp_t), n),
        inputs=np.array(bp_u, dtype=np.int8).reshape(len(bp_t), n),
        schedule=schedule,
        attacks=realized,
        attempt_agent=att_a,
        attempt_slot=att_k,
        attempt_time=att_t,
        attempt_phi=phis,
        attempt_ave=aves,
        num_events=num_events,
        config=cfg,
    )


def lyapunov(x: np.ndarray, L: np.ndarray) -> np.ndarray:
    """``0.5 * x^T L x`` row-wise."""
    x = np.atleast_2d(x)
    return 0.5 * np.einsum("mi,ij,mj->m", x, L, x)


def lyapunov_trace(tr: Trajectory, g: Graph) -> tuple[np.ndarray, np.ndarray]:
    if g.n != tr.n:
        raise ValueError("trajectory and graph sizes differ")
    return tr.times, lyapunov(tr.states, g.laplacian())


def neighbor_offsets(x: np.ndarray, L: np.ndarray) -> np.ndarray:
    """``ave_i = sum_{j in N_i} (x_j - x_i) = -(L x)_i`` row-wise."""
    return -np.atleast_2d(x) @ L.T


@dataclass(frozen=True)
class ConsensusTimes:
    first_entry: float | None
    settling: float | None


def consensus_times(tr: Trajectory, eps: float | None = None) -> ConsensusTimes:
    """Entry and settling times of the set ``max_i |ave_i| < eps``.

    ``ave`` is affine on each inter-breakpoint segment, so both quantities
    are found by solving ``ave_i = +-eps`` per segment.
    """
    if eps is None:
        eps = tr.config.params.eps
    L = tr.config.graph.laplacian()
    t0 = tr.times[:-1]
    lengths = np.diff(tr.times)
    keep = lengths > 0
    t0, lengths = t0[keep], lengths[keep]
    a = neighbor_offsets(tr.states[:-1][keep], L)
    b = neighbor_offsets(tr.inputs[:-1][keep].astype(float), L)
    lens = lengths[:, None]

    if len(t0) == 0:
        inside = bool(np.all(np.abs(neighbor_offsets(tr.states[-1], L)) < eps))
        return ConsensusTimes(0.0 if inside else None, 0.0 if inside else None)

    with np.errstate(divide="ignore", invalid="ignore"):
        r_plus = (eps - a) / b
        r_minus = (-eps - a) / b

    # inside set per agent on s in [0, len]: -eps < a + b s < eps (open interval)
    lo = np.zeros_like(a)
    hi = np.broadcast_to(lens, a.shape).copy()
    pos, neg, flat = b > 0, b < 0, b == 0
    lo = np.where(pos, np.maximum(lo, r_minus), lo)
    hi = np.where(pos, np.minimum(hi, r_plus), hi)
    lo = np.where(neg, np.maximum(lo, r_plus), lo)
    hi = np.where(neg, np.minimum(hi, r_minus), hi)
    flat_out = flat & (np.abs(a) >= eps)
    hi = np.where(flat_out, -np.inf, hi)
    seg_lo = lo.max(axis=1)
    seg_hi = hi.min(axis=1)
    nonempty = seg_lo < seg_hi
    first = None
    if nonempty.any():
        j = int(np.argmax(nonempty))
        first = float(t0[j] + seg_lo[j])

    # latest outside point per agent: a + b s >= eps or <= -eps, s in [0, len]
    end_val = a + b * lens
    last = np.full(a.shape, -np.inf)
    last = np.where(np.abs(end_val) >= eps, lens, last)
    cand_p = np.where(pos | flat, np.nan, r_plus)  # a + b s >= eps holds for s <= r_plus when b < 0
    cand_m = np.where(neg | flat, np.nan, r_minus)  # a + b s <= -eps holds for s <= r_minus when b > 0
    ok_p = (a >= eps) & (np.abs(end_val) < eps) & neg
    ok_m = (a <= -eps) & (np.abs(end_val) < eps) & pos
    last = np.where(ok_p, np.maximum(last, cand_p), last)
    last = np.where(ok_m, np.maximum(last, cand_m), last)
    seg_last = last.max(axis=1)
    outside = np.isfinite(seg_last)
    if not outside.any():
        return ConsensusTimes(first, 0.0)
    j = len(outside) - 1 - int(np.argmax(outside[::-1]))
    settle = float(t0[j] + seg_last[j])
    if settle >= tr.horizon:
        return ConsensusTimes(first, None)
    return ConsensusTimes(first, settle)


def warn_if_unsettled(ct: ConsensusTimes, tr: Trajectory) -> None:
    if ct.settling is None:
        warnings.warn(
            f"seed {tr.config.seed}: no settling before horizon {tr.horizon}",
            HorizonTooSmall,
            stacklevel=2,
        )


def pilot_horizon(cfg: RunConfig, cap: float, factor: float = 3.0) -> float:
    """``factor`` times the settling time of a pilot run capped at ``cap``."""
    ct = consensus_times(simulate(cfg.replace(horizon=cap)))
    if ct.settling is None:
        return cap
    return max(factor * ct.settling, math.ulp(1.0))
