"""CSV and JSON artifacts. Floats are written with 17 significant digits."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

from .engine import Trajectory, consensus_times

__all__ = [
    "IoError",
    "fmt",
    "trajectory_csv",
    "attempts_csv",
    "summary_dict",
    "write_text",
    "write_json",
    "write_trajectory",
    "write_attempts",
    "write_summary",
    "sweep_csv",
    "runs_csv",
]


class IoError(OSError):
    pass


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return format(float(v), ".17g")


def _rows(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def trajectory_csv(tr: Trajectory) -> str:
    n = tr.n
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(n)]
    rows = (
        [t, *x, *(int(v) for v in u)]
        for t, x, u in zip(tr.times.tolist(), tr.states.tolist(), tr.inputs.tolist())
    )
    return _rows(header, rows)


def attempts_csv(tr: Trajectory) -> str:
    rows = zip(
        tr.attempt_agent.tolist(),
        tr.attempt_slot.tolist(),
        tr.attempt_time.tolist(),
        tr.attempt_phi.tolist(),
        tr.attempt_ave.tolist(),
    )
    return _rows(["agent", "slot", "time", "phi", "ave"], rows)


def summary_dict(tr: Trajectory) -> dict:
    cfg = tr.config
    ct = consensus_times(tr)
    params = {
        **cfg.params.to_dict(),
        "graph": cfg.graph.to_dict(),
        "x0": list(cfg.x0),
        "attack": cfg.attack.to_dict(),
        "horizon": cfg.horizon,
    }
    return {
        "first_entry": ct.first_entry,
        "settling": ct.settling,
        "num_events": tr.num_events,
        "seed": cfg.seed,
        "attack_kind": cfg.attack.kind,
        "params": params,
    }


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise IoError(e.errno, f"cannot write {path}: {e.strerror}") from e
    return path


def write_json(path: Path, obj) -> Path:
    return write_text(path, json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def write_trajectory(path: Path, tr: Trajectory) -> Path:
    return write_text(path, trajectory_csv(tr))


def write_attempts(path: Path, tr: Trajectory) -> Path:
    return write_text(path, attempts_csv(tr))


def write_summary(path: Path, tr: Trajectory) -> Path:
    return write_json(path, summary_dict(tr))


def sweep_csv(axes: Sequence[str], rows: Iterable[dict]) -> str:
    header = list(axes) + ["m_C", "s_C", "runs", "unsettled"]
    return _rows(header, ([r[k] for k in header] for r in rows))


def runs_csv(results) -> str:
    rows = ((r.seed, r.first_entry, r.settling, r.num_events) for r in results)
    return _rows(["seed", "first_entry", "settling", "num_events"], rows)
