"""JSON experiment files.

One document describes one experiment::

    {
      "graph": {"n": 6, "edges": [[0, 1], [1, 2], ...]},
      "delta": 0.001,                 # scalar or per-agent list
      "T": "delta/1.01",              # scalar, per-agent list or "delta/<c>"
      "epsilon": 0.02,
      "x0": {"uniform": [0, 1]},      # or an explicit list
      "attack": {"kind": "aware", "rho": 0.8, "kappa": 0.2},
      "horizon": 30,
      "seed": 7,
      "sweep": {"rho": [...], "sigma": [...], "kappa": [...], "seeds": 50},
      "montecarlo": {"seeds": 50},
      "verify": {...}
    }

Initial states that are not listed explicitly are drawn once from the master
``seed`` and stay fixed across the run seeds of a sweep or Monte Carlo batch,
so only the attempt schedules vary between runs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .attacks import InvalidInterval, explicit_intervals
from .engine import AttackSpec, ConfigError, RunConfig
from .graph import Graph, GraphError, build_graph
from .schedule import INIT_STREAM, ProtocolParams

__all__ = ["Experiment", "SweepSpec", "load_config", "parse_config", "initial_state"]

_TOP_KEYS = {"graph", "delta", "T", "epsilon", "x0", "attack", "horizon", "seed",
             "sweep", "montecarlo", "verify", "description"}
_ATTACK_KEYS = {"kind", "intervals", "rho", "sigma", "kappa"}
_SWEEP_KEYS = {"rho", "sigma", "kappa", "seeds", "metric"}
_MC_KEYS = {"seeds", "metric"}
_VERIFY_KEYS = {"euler_h", "euler_horizon", "euler_runs", "budget_histories", "check_seeds"}
_METRICS = ("settling", "first_entry")


def initial_state(n: int, seed: int, lo: float = 0.0, hi: float = 1.0) -> tuple[float, ...]:
    ss = np.random.SeedSequence(int(seed), spawn_key=(INIT_STREAM,))
    rng = np.random.Generator(np.random.Philox(ss))
    return tuple(float(v) for v in rng.uniform(lo, hi, n))


@dataclass(frozen=True)
class SweepSpec:
    axes: dict[str, tuple[float, ...]]
    seeds: tuple[int, ...]
    metric: str = "settling"

    def cells(self) -> list[dict[str, float]]:
        names = [k for k in ("rho", "sigma", "kappa") if k in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[k] for k in names))]


@dataclass(frozen=True)
class Experiment:
    graph: Graph
    params: ProtocolParams
    x0: tuple[float, ...]
    attack: AttackSpec
    horizon: float
    seed: int
    sweep: SweepSpec | None = None
    montecarlo: SweepSpec | None = None
    verify: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def run_config(self, seed: int | None = None, horizon: float | None = None, **attack) -> RunConfig:
        spec = self.attack
        if attack:
            d = spec.to_dict()
            d.update(attack)
            spec = _attack(d)
        return RunConfig(
            graph=self.graph,
            params=self.params,
            x0=self.x0,
            attack=spec,
            horizon=float(self.horizon if horizon is None else horizon),
            seed=int(self.seed if seed is None else seed),
        )

    def with_overrides(self, seed: int | None = None, horizon: float | None = None) -> "Experiment":
        raw = dict(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if horizon is not None:
            raw["horizon"] = float(horizon)
        return parse_config(raw)


def load_config(path: str | Path) -> Experiment:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON at line {e.lineno}: {e.msg}") from e
    return parse_config(doc)


def _unknown(d: dict, allowed: set, where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}{extra[0]}: unknown key")


def _num(v, key: str, positive: bool = False, allow_zero: bool = True) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key}: expected a finite number, got {v!r}")
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise ConfigError(f"{key}: must be {'nonnegative' if allow_zero else 'positive'}, got {v!r}")
    return float(v)


def _num_list(v, key: str, positive: bool = False) -> tuple[float, ...]:
    if not isinstance(v, list):
        raise ConfigError(f"{key}: expected a list, got {v!r}")
    if not v:
        raise ConfigError(f"{key}: list is empty")
    return tuple(_num(x, f"{key}[{i}]", positive, allow_zero=False) for i, x in enumerate(v))


def _seed(v, key: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2**64:
        raise ConfigError(f"{key}: expected an integer in [0, 2**64), got {v!r}")
    return int(v)


def _attack(d) -> AttackSpec:
    if not isinstance(d, dict):
        raise ConfigError(f"attack: expected an object, got {d!r}")
    _unknown(d, _ATTACK_KEYS, "attack.")
    kind = d.get("kind", "explicit")
    if kind not in ("explicit", "periodic", "aware"):
        raise ConfigError(f"attack.kind: unknown kind {kind!r}")
    pairs = d.get("intervals", [])
    if not isinstance(pairs, list):
        raise ConfigError(f"attack.intervals: expected a list of [start, duration], got {pairs!r}")
    iv = []
    for j, p in enumerate(pairs):
        if not (isinstance(p, list) and len(p) == 2):
            raise ConfigError(f"attack.intervals[{j}]: expected [start, duration], got {p!r}")
        iv.append((_num(p[0], f"attack.intervals[{j}][0]"), _num(p[1], f"attack.intervals[{j}][1]", True)))
    rho = d.get("rho")
    if rho is not None:
        rho = _num(rho, "attack.rho")
        if not 0 < rho < 1:
            raise ConfigError(f"attack.rho: must lie in (0, 1), got {rho!r}")
    sigma = None if d.get("sigma") is None else _num(d["sigma"], "attack.sigma", True, allow_zero=False)
    kappa = None if d.get("kappa") is None else _num(d["kappa"], "attack.kappa", True)
    try:
        spec = AttackSpec(kind=kind, intervals=tuple(iv), rho=rho, sigma=sigma, kappa=kappa)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if kind == "explicit":
        try:
            explicit_intervals(spec.intervals)
        except InvalidInterval as e:
            raise ConfigError(f"attack.intervals: {e}") from e
    return spec


def _seeds(v, key: str, base: int) -> tuple[int, ...]:
    """An integer count expands to ``base, base + 1, ...``; a list is used as is."""
    if isinstance(v, int) and not isinstance(v, bool):
        if v < 1:
            raise ConfigError(f"{key}: need at least one seed, got {v}")
        return tuple(base + j for j in range(v))
    if isinstance(v, list) and v:
        return tuple(_seed(s, f"{key}[{j}]") for j, s in enumerate(v))
    raise ConfigError(f"{key}: expected a positive count or a nonempty list, got {v!r}")


def _sweep(d, key: str, base: int, axes_allowed: bool) -> SweepSpec:
    if not isinstance(d, dict):
        raise ConfigError(f"{key}: expected an object, got {d!r}")
    _unknown(d, _SWEEP_KEYS if axes_allowed else _MC_KEYS, f"{key}.")
    axes = {}
    if axes_allowed:
        for name in ("rho", "sigma", "kappa"):
            if name in d:
                axes[name] = _num_list(d[name], f"{key}.{name}", positive=True)
        if not axes:
            raise ConfigError(f"{key}: declare at least one of rho, sigma, kappa")
        for r in axes.get("rho", ()):
            if not r < 1:
                raise ConfigError(f"{key}.rho: values must lie in (0, 1), got {r!r}")
    seeds = _seeds(d.get("seeds", 10), f"{key}.seeds", base)
    metric = d.get("metric", "settling")
    if metric not in _METRICS:
        raise ConfigError(f"{key}.metric: expected one of {_METRICS}, got {metric!r}")
    return SweepSpec(axes, seeds, metric)


def parse_config(doc: Any) -> Experiment:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    _unknown(doc, _TOP_KEYS, "")
    for key in ("graph", "delta", "epsilon", "horizon"):
        if key not in doc:
            raise ConfigError(f"{key}: missing required key")

    gd = doc["graph"]
    if not isinstance(gd, dict):
        raise ConfigError(f"graph: expected an object, got {gd!r}")
    _unknown(gd, {"n", "edges"}, "graph.")
    if "n" not in gd or "edges" not in gd:
        raise ConfigError(f"graph.{'n' if 'n' not in gd else 'edges'}: missing required key")
    n = gd["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"graph.n: expected a positive integer, got {n!r}")
    try:
        graph = build_graph(n, gd["edges"])
    except (GraphError, TypeError, ValueError) as e:
        raise ConfigError(f"graph.edges: {e}") from e

    delta = doc["delta"]
    delta = _num_list(delta, "delta", True) if isinstance(delta, list) else _num(delta, "delta", True, False)
    hold = doc.get("T", "delta/1.01")
    if isinstance(hold, list):
        hold = _num_list(hold, "T", True)
    elif not isinstance(hold, str):
        hold = _num(hold, "T", True, False)
    eps = _num(doc["epsilon"], "epsilon", True, False)
    try:
        params = ProtocolParams.build(n, delta, hold, eps)
    except ValueError as e:
        msg = str(e)
        if msg.startswith(("delta:", "T:")):
            raise ConfigError(msg) from e
        raise ConfigError(f"T: {msg}") from e

    seed = _seed(doc.get("seed", 0), "seed")
    horizon = _num(doc["horizon"], "horizon", True, False)

    x0 = doc.get("x0", {"uniform": [0.0, 1.0]})
    if isinstance(x0, list):
        if len(x0) != n:
            raise ConfigError(f"x0: expected {n} entries, got {len(x0)}")
        x0 = tuple(_num(v, f"x0[{i}]") for i, v in enumerate(x0))
    elif isinstance(x0, dict):
        _unknown(x0, {"uniform", "seed"}, "x0.")
        rng = x0.get("uniform", [0.0, 1.0])
        if not (isinstance(rng, list) and len(rng) == 2):
            raise ConfigError(f"x0.uniform: expected [lo, hi], got {rng!r}")
        lo, hi = _num(rng[0], "x0.uniform[0]"), _num(rng[1], "x0.uniform[1]")
        if not lo <= hi:
            raise ConfigError(f"x0.uniform: need lo <= hi, got {rng!r}")
        x0 = initial_state(n, _seed(x0.get("seed", seed), "x0.seed"), lo, hi)
    else:
        raise ConfigError(f"x0: expected a list or an object, got {x0!r}")

    attack = _attack(doc.get("attack", {"kind": "explicit", "intervals": []}))
    if attack.kind == "aware" and not params.uniform_delta:
        raise ConfigError("delta: the aware attacker needs one common delta")

    sweep = _sweep(doc["sweep"], "sweep", seed, True) if "sweep" in doc else None
    mc = _sweep(doc["montecarlo"], "montecarlo", seed, False) if "montecarlo" in doc else None
    if sweep is not None:
        if "sigma" in sweep.axes and attack.kind != "periodic":
            raise ConfigError("sweep.sigma: only periodic attacks have a sigma")
        if attack.kind == "explicit":
            raise ConfigError("sweep: explicit attacks have no rho/sigma/kappa to sweep")

    ver = doc.get("verify", {})
    if not isinstance(ver, dict):
        raise ConfigError(f"verify: expected an object, got {ver!r}")
    _unknown(ver, _VERIFY_KEYS, "verify.")
    for k, v in ver.items():
        _num(v, f"verify.{k}", True, False)

    return Experiment(graph, params, x0, attack, horizon, seed, sweep, mc, dict(ver), raw=dict(doc))
