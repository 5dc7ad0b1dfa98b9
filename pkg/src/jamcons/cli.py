"""Command-line front end: ``jamcons {run,sweep,montecarlo,verify}``.

Exit codes: 0 success, 2 bad configuration, 3 a verification check failed,
4 an output file could not be written.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import checks, oracles
from .analysis import AllRunsUnsettled, run_many, summarize
from .attacks import aware_budget, check_assumption1, explicit_intervals
from .config import Experiment, load_config
from .engine import ConfigError, HorizonTooSmall, consensus_times, simulate, warn_if_unsettled
from .io import (
    IoError,
    runs_csv,
    sweep_csv,
    write_attempts,
    write_json,
    write_summary,
    write_text,
    write_trajectory,
)
from .schedule import validate_params

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_IO = 4

log = logging.getLogger("jamcons")


class VerificationFailure(RuntimeError):
    def __init__(self, failed: list[str]):
        super().__init__("failed checks: " + ", ".join(failed))
        self.failed = failed


def _experiment(args) -> Experiment:
    exp = load_config(args.config)
    if args.seed is not None or args.horizon is not None:
        exp = exp.with_overrides(seed=args.seed, horizon=args.horizon)
    return exp


def cmd_run(args) -> int:
    exp = _experiment(args)
    tr = simulate(exp.run_config())
    out = Path(args.out)
    write_trajectory(out / "trajectory.csv", tr)
    write_attempts(out / "attempts.csv", tr)
    write_summary(out / "summary.json", tr)
    ct = consensus_times(tr)
    warn_if_unsettled(ct, tr)
    print(f"settling={ct.settling} first_entry={ct.first_entry} events={tr.num_events} -> {out}")
    return EXIT_OK


def _summary_row(results, metric: str) -> dict:
    try:
        s = summarize(results, metric)
        return {"m_C": s.mean, "s_C": s.std, "runs": s.runs, "unsettled": s.unsettled}
    except AllRunsUnsettled:
        return {"m_C": math.nan, "s_C": math.nan, "runs": len(results), "unsettled": len(results)}


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    if exp.sweep is None:
        raise ConfigError("sweep: missing required key for the sweep command")
    sw = exp.sweep
    cells = sw.cells()
    cfgs = [exp.run_config(seed=s, **cell) for cell in cells for s in sw.seeds]
    results = run_many(cfgs, args.workers)
    axes = [k for k in ("rho", "sigma", "kappa") if k in sw.axes]
    rows = []
    per = len(sw.seeds)
    for c, cell in enumerate(cells):
        row = dict(cell)
        row.update(_summary_row(results[c * per:(c + 1) * per], sw.metric))
        rows.append(row)
        log.info("cell %s: m_C=%.4g s_C=%.4g unsettled=%d", cell, row["m_C"], row["s_C"], row["unsettled"])
    path = write_text(Path(args.out) / "sweep.csv", sweep_csv(axes, rows))
    print(f"{len(rows)} cells x {per} seeds -> {path}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    exp = _experiment(args)
    mc = exp.montecarlo or exp.sweep
    if mc is None:
        raise ConfigError("montecarlo: missing required key for the montecarlo command")
    results = run_many([exp.run_config(seed=s) for s in mc.seeds], args.workers)
    row = _summary_row(results, mc.metric)
    out = Path(args.out)
    write_text(out / "runs.csv", runs_csv(results))
    write_json(out / "montecarlo.json", {**row, "metric": mc.metric, "seeds": list(mc.seeds)})
    print(f"m_C={row['m_C']} s_C={row['s_C']} unsettled={row['unsettled']} -> {out}")
    return EXIT_OK


# verification ---------------------------------------------------------------


def _check(name: str, ok: bool, detail: str = "", skipped: bool = False) -> dict:
    return {"name": name, "ok": bool(ok), "skipped": skipped, "detail": detail}


def _budget_params(exp: Experiment, cfg):
    a = cfg.attack
    if a.kappa is None or a.rho is None:
        return None
    return a.kappa, a.rho


def verify_experiment(exp: Experiment) -> list[dict]:
    """Run every invariant on the configured experiment; one record per check."""
    opts = exp.verify
    out = []
    pv = validate_params(exp.params, exp.graph)
    out.append(_check("params", pv is None, str(pv) if pv else "0 < T_i < min(eps/(2 d_i), delta_i)"))

    seeds = [exp.seed + j for j in range(int(opts.get("check_seeds", 3)))]
    trs = [simulate(exp.run_config(seed=s)) for s in seeds]
    cfg0 = trs[0].config
    kr = _budget_params(exp, cfg0)

    a1_ok = True
    if kr is None:
        out.append(_check("attack_budget", True, "no kappa/rho declared", skipped=True))
    else:
        bad = [(tr.config.seed, v) for tr in trs
               if (v := check_assumption1(tr.attacks, kr[0], kr[1], tr.horizon)) is not None]
        a1_ok = not bad
        detail = "; ".join(f"seed {s}: {v}" for s, v in bad) or f"{len(trs)} runs within budget"
        out.append(_check("attack_budget", a1_ok, detail))

    n_hold = sum(len(checks.hold_violations(tr)) for tr in trs)
    out.append(_check("hold_after_success", n_hold == 0, f"{n_hold} qualifying attempts without a full hold"))
    n_theta = sum(len(checks.theta_violations(tr)) for tr in trs)
    out.append(_check("hold_sign", n_theta == 0, f"{n_theta} sign changes inside a hold"))
    dv = max(checks.lyapunov_max_increase(tr) for tr in trs)
    out.append(_check("lyapunov_nonincreasing", dv <= 1e-9, f"max increase {dv:.3g}"))
    n_speed = sum(checks.speed_violations(tr) for tr in trs)
    out.append(_check("unit_speed", n_speed == 0, f"{n_speed} segments faster than 1"))
    n_phi = sum(checks.phi_mismatches(tr) for tr in trs)
    out.append(_check("phi_consistent", n_phi == 0, f"{n_phi} outcomes disagree with the attack intervals"))
    if a1_ok:
        unsettled = [tr.config.seed for tr in trs if not checks.settled_through_horizon(tr)]
        out.append(_check("settled", not unsettled, f"unsettled seeds {unsettled}" if unsettled else "all settled"))
    else:
        out.append(_check("settled", True, "attack exceeds its budget; convergence not guaranteed", skipped=True))

    h = float(opts.get("euler_h", 1e-6))
    eh = float(opts.get("euler_horizon", 0.1))
    worst = -math.inf
    for s in seeds[: int(opts.get("euler_runs", 1))]:
        tr = simulate(exp.run_config(seed=s, horizon=eh))
        grid, xs = oracles.euler_replay(tr, h)
        err = float(np.max(np.abs(xs - tr.state_at(grid))))
        worst = max(worst, err - tr.num_events * h)
    out.append(_check("euler_oracle", worst <= 0, f"max error minus n_events*h = {worst:.3g}"))

    if exp.attack.kind == "aware" and kr is not None:
        kappa, rho = kr
        d = exp.params.delta[0]
        hist = trs[0].attacks
        K = int(trs[0].horizon / d)
        rng = np.random.default_rng(exp.seed)
        ks = np.sort(rng.integers(1, max(K, 2), int(opts.get("budget_histories", 20))))
        worst_b = -math.inf
        for k in ks:
            start = k * d
            keep = hist.starts < start
            past = explicit_intervals(list(zip(hist.starts[keep], hist.durations[keep])), kappa, rho)
            fast = aware_budget(past, kappa, rho, int(k), d)
            slow = oracles.grid_budget(past, kappa, rho, int(k), d)
            tol = oracles.grid_budget_tolerance(rho, int(k), d)
            worst_b = max(worst_b, abs(fast - slow) - tol, fast - slow)
        out.append(_check("budget_oracle", worst_b <= 1e-12, f"{len(ks)} slots, worst excess {worst_b:.3g}"))
    else:
        out.append(_check("budget_oracle", True, "deterministic attack", skipped=True))
    return out


def cmd_verify(args) -> int:
    exp = _experiment(args)
    results = verify_experiment(exp)
    ok = all(r["ok"] for r in results)
    lines = [
        f"{'SKIP' if r['skipped'] else ('PASS' if r['ok'] else 'FAIL')} {r['name']}: {r['detail']}"
        for r in results
    ]
    out = Path(args.out)
    write_text(out / "verify.txt", "\n".join(lines) + "\n")
    write_json(out / "verify.json", {"ok": ok, "checks": results})
    print("\n".join(lines))
    if not ok:
        raise VerificationFailure([r["name"] for r in results if not r["ok"]])
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "montecarlo": cmd_montecarlo, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jamcons", description="Consensus under jamming: simulations and checks.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment JSON file")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, default=None, help="override the master seed")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for sweeps and Monte Carlo")
    ap.add_argument("--horizon", type=float, default=None, help="override the horizon in seconds")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings():
        warnings.simplefilter("always", HorizonTooSmall)
        try:
            return COMMANDS[args.command](args)
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except VerificationFailure as e:
            print(f"verification failed: {e}", file=sys.stderr)
            return EXIT_VERIFY
        except (IoError, OSError) as e:
            print(f"io error: {e}", file=sys.stderr)
            return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
