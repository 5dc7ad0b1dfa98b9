"""Block-success bounds and Monte Carlo statistics.

Attempts are grouped into blocks of ``gamma`` consecutive slots, where
``gamma`` is the smallest block count whose length exceeds the longest legal
continuous jam ``kappa / (1 - rho)``. Under the communication-aware attacker
each block succeeds with conditional probability at least ``2 q**gamma``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import RunConfig, Trajectory, consensus_times, simulate

__all__ = [
    "DomainError",
    "IncompleteBlock",
    "InsufficientSamples",
    "AllRunsUnsettled",
    "BoundParams",
    "bound_params",
    "phi_hat_series",
    "prop3_lower_bound",
    "BoundReport",
    "empirical_bound_check",
    "RunResult",
    "McSummary",
    "run_one",
    "run_many",
    "summarize",
    "monte_carlo",
]

log = logging.getLogger(__name__)


class DomainError(ValueError):
    pass


class IncompleteBlock(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class AllRunsUnsettled(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundParams:
    kappa: float
    rho: float
    delta: float
    delta_min: float  # kappa / (1 - rho), longest legal continuous jam
    gamma: int
    delta_hat: float
    delta_tilde: float
    q: float
    log_bound: float  # natural log of 2 q**gamma

    @property
    def bound(self) -> float:
        """``2 q**gamma``; underflows to 0.0 when gamma is large, see ``log_bound``."""
        return math.exp(self.log_bound)

    @property
    def log10_bound(self) -> float:
        return self.log_bound / math.log(10)


def bound_params(kappa: float, rho: float, delta: float) -> BoundParams:
    if not (kappa >= 0 and 0 < rho < 1 and delta > 0):
        raise DomainError(f"need kappa >= 0, 0 < rho < 1, delta > 0; got {kappa}, {rho}, {delta}")
    dmin = kappa / (1 - rho)
    gamma = max(1, math.floor(dmin / delta) + 1)
    while not gamma * delta > dmin:
        gamma += 1
    while gamma > 1 and (gamma - 1) * delta > dmin:
        gamma -= 1
    dhat = gamma * delta
    dtilde = (1 - rho) * (dhat - dmin) / (gamma + 1)
    q = dtilde / delta
    if not 0 < q < 1:
        raise DomainError(f"q = {q} outside (0, 1)")
    return BoundParams(
        kappa=kappa,
        rho=rho,
        delta=delta,
        delta_min=dmin,
        gamma=gamma,
        delta_hat=dhat,
        delta_tilde=dtilde,
        q=q,
        log_bound=math.log(2.0) + gamma * math.log(q),
    )


def phi_hat_series(phi: Sequence[int], gamma: int, strict: bool = False) -> np.ndarray:
    """1 for each complete block of ``gamma`` slots containing a success.

    A trailing partial block is dropped, or raises :class:`IncompleteBlock`
    when ``strict``.
    """
    if gamma < 1:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    phi = np.asarray(phi, dtype=np.int8)
    full = len(phi) // gamma
    if strict and full * gamma != len(phi):
        raise IncompleteBlock(f"{len(phi) - full * gamma} trailing slots do not fill a block of {gamma}")
    blocks = phi[: full * gamma].reshape(full, gamma)
    return blocks.any(axis=1).astype(np.int8)


def prop3_lower_bound(N: int, M: int, q: float, gamma: int) -> float:
    """``1 - sum_{m<M} C(N, m) (1 - 2 q**gamma)**(N - m)``, evaluated in log space.

    Not clamped: negative values are valid (vacuous) lower bounds.
    """
    if not (0 <= M <= N) or N < 1:
        raise DomainError(f"need 0 <= M <= N and N >= 1, got N={N}, M={M}")
    if not 0 < q < 1 or gamma < 1:
        raise DomainError(f"need 0 < q < 1 and gamma >= 1, got q={q}, gamma={gamma}")
    log_p = math.log(2.0) + gamma * math.log(q)
    log_fail = math.log1p(-math.exp(log_p))
    terms = []
    for m in range(M):
        log_c = math.lgamma(N + 1) - math.lgamma(m + 1) - math.lgamma(N - m + 1)
        terms.append(math.exp(log_c + (N - m) * log_fail))
    return 1.0 - math.fsum(terms)


@dataclass
class BoundReport:
    bound: float
    n_se: float
    block_freq: list[float]
    block_se: list[float]
    blocks: list[int]
    dropped_slots: int
    freq_ok: list[bool]
    prop3: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.freq_ok) and all(r["ok"] for r in self.prop3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def empirical_bound_check(
    runs: Iterable[Trajectory | np.ndarray],
    bp: BoundParams,
    NM: Sequence[tuple[int, int]] = (),
    n_se: float = 3.0,
    min_blocks: int = 1,
) -> BoundReport:
    """Compare empirical block success against ``2 q**gamma`` and the tail bound.

    Each run is a trajectory or an ``(n, K)`` array of success flags. The
    frequency check passes when ``freq >= bound - n_se * se`` per agent; each
    ``(N, M)`` check passes when the fraction of runs with at least ``M``
    successful blocks among the first ``N`` reaches the tail bound.
    """
    mats = [r.phi_matrix() if isinstance(r, Trajectory) else np.asarray(r) for r in runs]
    if not mats:
        raise InsufficientSamples("no runs given")
    n = mats[0].shape[0]
    hats = []
    dropped = 0
    for mat in mats:
        full = (mat.shape[1] // bp.gamma) * bp.gamma
        dropped += (mat.shape[1] - full) * n
        hats.append(np.stack([phi_hat_series(row, bp.gamma) for row in mat]))
    bound = bp.bound
    freq, se, blocks, ok = [], [], [], []
    for i in range(n):
        allb = np.concatenate([h[i] for h in hats])
        nb = len(allb)
        if nb < min_blocks:
            raise InsufficientSamples(f"agent {i}: {nb} blocks < {min_blocks}")
        p = float(allb.mean())
        s = math.sqrt(p * (1 - p) / nb) if nb else math.inf
        freq.append(p)
        se.append(s)
        blocks.append(nb)
        ok.append(p >= bound - n_se * s)
    prop3 = []
    for N, M in NM:
        lb = prop3_lower_bound(N, M, bp.q, bp.gamma)
        usable = [h for h in hats if h.shape[1] >= N]
        if not usable:
            raise InsufficientSamples(f"no run has {N} complete blocks")
        per_agent = []
        for i in range(n):
            hits = [int(h[i, :N].sum() >= M) for h in usable]
            per_agent.append(float(np.mean(hits)))
        prop3.append(
            {"N": N, "M": M, "bound": lb, "runs": len(usable), "empirical": per_agent,
             "ok": all(p >= lb for p in per_agent)}
        )
    return BoundReport(bound, n_se, freq, se, blocks, dropped, ok, prop3)


@dataclass(frozen=True)
class RunResult:
    seed: int
    first_entry: float | None
    settling: float | None
    num_events: int


def run_one(cfg: RunConfig) -> RunResult:
    tr = simulate(cfg)
    ct = consensus_times(tr)
    return RunResult(cfg.seed, ct.first_entry, ct.settling, tr.num_events)


def run_many(cfgs: Sequence[RunConfig], workers: int = 1, fn: Callable = run_one) -> list:
    """Apply ``fn`` to each config, in order, optionally across processes."""
    if workers <= 1 or len(cfgs) <= 1:
        return [fn(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cfgs, chunksize=max(1, len(cfgs) // (4 * workers))))


@dataclass(frozen=True)
class McSummary:
    times: tuple[float | None, ...]
    mean: float
    std: float
    runs: int
    unsettled: int
    metric: str = "settling"


def summarize(results: Sequence[RunResult], metric: str = "settling") -> McSummary:
    """Mean and sample (n-1) standard deviation over runs that reached consensus.

    Values are sorted before summation so the result does not depend on run
    order.
    """
    if metric not in ("settling", "first_entry"):
        raise ValueError(f"unknown metric {metric!r}")
    times = tuple(getattr(r, metric) for r in results)
    ok = sorted(t for t in times if t is not None)
    if not ok:
        raise AllRunsUnsettled(f"none of {len(times)} runs reached consensus before the horizon")
    mean = math.fsum(ok) / len(ok)
    std = math.sqrt(math.fsum((t - mean) ** 2 for t in ok) / (len(ok) - 1)) if len(ok) > 1 else math.nan
    unsettled = len(times) - len(ok)
    if unsettled:
        log.warning("%d of %d runs did not settle before the horizon", unsettled, len(times))
    return McSummary(times, mean, std, len(times), unsettled, metric)


def monte_carlo(cfg: RunConfig, seeds: Sequence[int], workers: int = 1, metric: str = "settling") -> McSummary:
    if len(seeds) < 2:
        raise ValueError("monte_carlo needs at least two seeds")
    results = run_many([cfg.replace(seed=int(s)) for s in seeds], workers)
    return summarize(results, metric)
