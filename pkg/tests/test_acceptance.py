"""Acceptance criteria C1..C10, each reported as one PASS/FAIL line.

The shared run set for C1, C2, C3 and C8 covers all three attack kinds at
kappa = 0.2, rho = 0.8, epsilon = 0.02 and T = delta / 1.01.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from jamcons.analysis import bound_params, empirical_bound_check, prop3_lower_bound, run_many, summarize
from jamcons.attacks import (
    AwareAttacker,
    aware_budget,
    check_assumption1,
    clip_to_budget,
    explicit_intervals,
    jammed_measure,
)
from jamcons.checks import hold_violations, lyapunov_max_increase, settled_through_horizon
from jamcons.cli import main
from jamcons.config import load_config
from jamcons.engine import AttackSpec, RunConfig, consensus_times, simulate
from jamcons.oracles import clip_sum_measure, euler_replay, grid_budget, grid_measure
from jamcons.schedule import ProtocolParams

from conftest import record

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
KAPPA, RHO = 0.2, 0.8
DET_IV = ((0.0, 0.8), (1.0, 0.6), (1.7, 0.5), (2.3, 0.45), (2.9, 0.4), (3.5, 0.4), (4.1, 0.4))


def shared_configs(g6, det_params, aware_params, x0):
    cfgs = []
    for s in range(70):
        cfgs.append(RunConfig(g6, det_params, x0, AttackSpec(intervals=DET_IV, kappa=KAPPA, rho=RHO), 8.0, 1000 + s))
    cells = [(r, sg) for r in (0.2, 0.5, 0.8) for sg in (10.0, 1e3, 1e5)]
    for s in range(70):
        r, sg = cells[s % len(cells)]
        spec = AttackSpec(kind="periodic", rho=r, sigma=sg, kappa=KAPPA)
        cfgs.append(RunConfig(g6, det_params, x0, spec, 8.0, 2000 + s))
    for s in range(60):
        spec = AttackSpec(kind="aware", rho=RHO, kappa=KAPPA)
        cfgs.append(RunConfig(g6, aware_params, x0, spec, 25.0, 3000 + s))
    return cfgs


def assess(cfg):
    """Everything C1..C3 and C8 need from one run, without keeping the trajectory."""
    tr = simulate(cfg)
    a = cfg.attack
    legal = check_assumption1(tr.attacks, a.kappa, a.rho, cfg.horizon) is None
    return {
        "kind": a.kind,
        "qualifying": int(sum(
            np.count_nonzero((tr.attempts_of(i)["phi"] == 1)
                             & (np.abs(np.nan_to_num(tr.attempts_of(i)["ave"])) >= cfg.params.eps))
            for i in range(tr.n)
        )),
        "hold_bad": len(hold_violations(tr)),
        "dV": lyapunov_max_increase(tr),
        "legal": legal,
        "settled": settled_through_horizon(tr),
        "settling": consensus_times(tr).settling,
    }


@pytest.fixture(scope="module")
def shared(g6, det_params, aware_params, x0):
    return [assess(c) for c in shared_configs(g6, det_params, aware_params, x0)]


def test_c1_hold_after_every_qualifying_success(shared):
    bad = sum(r["hold_bad"] for r in shared)
    kinds = sorted({r["kind"] for r in shared})
    q = sum(r["qualifying"] for r in shared)
    ok = bad == 0 and len(shared) >= 200 and kinds == ["aware", "explicit", "periodic"]
    record("C1", ok, f"{len(shared)} runs ({', '.join(kinds)}), {q} qualifying successes, {bad} without a full hold")
    assert ok


def test_c2_lyapunov_nonincreasing(shared):
    worst = max(r["dV"] for r in shared)
    ok = worst <= 1e-9
    record("C2", ok, f"largest per-step increase of V over {len(shared)} runs = {worst:.3g} (tol 1e-9)")
    assert ok


def test_c3_finite_time_consensus(shared):
    legal = [r for r in shared if r["legal"]]
    bad = [r for r in legal if not r["settled"]]
    worst = max(r["settling"] for r in legal if r["settling"] is not None)
    ok = not bad and len(legal) > 0
    record("C3", ok, f"{len(legal)} runs within budget, {len(bad)} not settled through the horizon; latest settling {worst:.3f}s")
    assert ok


def test_c4_settling_grows_with_rho_not_sigma():
    exp = load_config(CONFIGS / "periodic_sweep.json")
    sw = exp.sweep
    assert len(sw.seeds) == 50
    table = {}
    unsettled = 0
    for cell in sw.cells():
        res = run_many([exp.run_config(seed=s, **cell) for s in sw.seeds])
        summ = summarize(res)
        unsettled += summ.unsettled
        table[(cell["rho"], cell["sigma"])] = summ.mean
    rhos, sigmas = sw.axes["rho"], sw.axes["sigma"]
    increasing = all(table[(rhos[j], s)] < table[(rhos[j + 1], s)] for s in sigmas for j in range(len(rhos) - 1))
    spreads = {}
    for r in rhos:
        row = [table[(r, s)] for s in sigmas]
        spreads[r] = (max(row) - min(row)) / (sum(row) / len(row))
    ok = increasing and all(v <= 0.25 for v in spreads.values()) and unsettled == 0
    grid = "; ".join(f"rho={r}: " + ", ".join(f"{table[(r, s)]:.3f}" for s in sigmas) for r in rhos)
    spread = ", ".join(f"{v:.1%}" for v in spreads.values())
    record("C4", ok, f"m_C over sigma={list(sigmas)} -> {grid}; sigma spread {spread} (limit 25%); unsettled {unsettled}")
    assert ok


def aware_sweep_run(cfg):
    tr = simulate(cfg)
    legal = check_assumption1(tr.attacks, cfg.attack.kappa, cfg.attack.rho, cfg.horizon) is None
    return consensus_times(tr).settling, legal


@pytest.fixture(scope="module")
def aware_sweep():
    exp = load_config(CONFIGS / "aware_sweep.json")
    sw = exp.sweep
    out = {}
    for cell in sw.cells():
        out[(cell["rho"], cell["kappa"])] = run_many([exp.run_config(seed=s, **cell) for s in sw.seeds], fn=aware_sweep_run)
    return sw, out


def test_c5_aware_settling_monotone(aware_sweep):
    sw, out = aware_sweep
    rhos, kappas = sw.axes["rho"], sw.axes["kappa"]
    unsettled = sum(s is None for v in out.values() for s, _ in v)
    mean = {k: float(np.mean([s for s, _ in v])) for k, v in out.items()} if not unsettled else {}
    ok = unsettled == 0
    if ok:
        in_rho = all(mean[(rhos[j], k)] <= mean[(rhos[j + 1], k)] for k in kappas for j in range(len(rhos) - 1))
        in_kappa = all(mean[(r, kappas[j])] <= mean[(r, kappas[j + 1])] for r in rhos for j in range(len(kappas) - 1))
        ok = in_rho and in_kappa
        # per-seed view, reported for information
        per_seed = 0
        for i in range(len(sw.seeds)):
            t = {k: v[i][0] for k, v in out.items()}
            per_seed += sum(t[(rhos[j], k)] > t[(rhos[j + 1], k)] for k in kappas for j in range(len(rhos) - 1))
            per_seed += sum(t[(r, kappas[0])] > t[(r, kappas[1])] for r in rhos)
        curves = "; ".join(f"kappa={k}: " + ", ".join(f"{mean[(r, k)]:.2f}" for r in rhos) for k in kappas)
        detail = (f"mean settling over {len(sw.seeds)} matched seeds for rho={list(rhos)} -> {curves}; "
                  f"monotone in rho: {in_rho}, in kappa: {in_kappa}; per-seed reversals {per_seed}")
    else:
        detail = f"{unsettled} runs did not settle before the horizon"
    record("C5", ok, detail)
    assert ok


def test_c6_block_success_frequency(g6, aware_params, x0):
    bp = bound_params(0.0005, 0.2, 0.001)
    spec = AttackSpec(kind="aware", rho=0.2, kappa=0.0005)
    runs = [simulate(RunConfig(g6, aware_params, x0, spec, 0.2, 5000 + s)) for s in range(60)]
    rep = empirical_bound_check(runs, bp, n_se=3.0, min_blocks=10_000)
    ok = rep.ok and min(rep.blocks) >= 10_000 and bp.bound == pytest.approx(0.3)
    lo = min(f - bp.bound + 3 * s for f, s in zip(rep.block_freq, rep.block_se))
    record("C6", ok, f"2q^gamma={bp.bound:.3f}, gamma={bp.gamma}; per-agent block frequency "
           f"{min(rep.block_freq):.3f}..{max(rep.block_freq):.3f} over {min(rep.blocks)} blocks each; "
           f"smallest margin over bound-3se {lo:.3f}")
    assert ok


def test_c7_tail_bound(g6, aware_params, x0):
    bp = bound_params(0.0005, 0.2, 0.001)
    spec = AttackSpec(kind="aware", rho=0.2, kappa=0.0005)
    runs = [simulate(RunConfig(g6, aware_params, x0, spec, 0.021, 7000 + s)).phi_matrix() for s in range(1000)]
    rep = empirical_bound_check(runs, bp, NM=[(20, 2)])
    p3 = rep.prop3[0]
    exact = prop3_lower_bound(1, 1, bp.q, bp.gamma) == 2 * bp.q**bp.gamma
    ok = p3["ok"] and p3["runs"] >= 1000 and exact
    record("C7", ok, f"P[sum phi_hat >= 2 in 20 blocks] min over agents {min(p3['empirical']):.4f} "
           f"vs bound {p3['bound']:.4f} over {p3['runs']} runs; prop3(1,1) == 2q^gamma: {exact}")
    assert ok


def test_c8_aware_history_is_legal(shared, aware_sweep):
    sw, out = aware_sweep
    legal = [r["legal"] for r in shared if r["kind"] == "aware"]
    legal += [ok for v in out.values() for _, ok in v]
    ok = all(legal)
    record("C8", ok, f"{sum(legal)}/{len(legal)} aware-attack histories pass the exact budget check")
    assert ok


def random_history(rng):
    kappa = float(rng.uniform(0.0, 0.05))
    rho = float(rng.uniform(0.05, 0.95))
    delta = 0.001
    if rng.random() < 0.5:
        att = AwareAttacker(4, delta, kappa, rho)
        K = int(rng.integers(5, 400))
        for k in range(K):
            end = att.slot_start(k)
            for i, t in enumerate(np.sort(k * delta + rng.random(4) * delta)):
                if end is not None and att.open and t > end:
                    att.forced_end(k)
                att.sense_attempt(float(t), i)
            if att.open:
                att.forced_end(k)
        return att.history(), kappa, rho, K, delta
    K = int(rng.integers(5, 400))
    starts = np.sort(rng.uniform(0, K * delta, int(rng.integers(0, 40))))
    A = clip_to_budget(starts, rng.uniform(0, 0.02, len(starts)), kappa, rho)
    keep = A.starts + A.durations < K * delta
    return explicit_intervals(list(zip(A.starts[keep], A.durations[keep])), kappa, rho), kappa, rho, K, delta


def test_c9a_budget_matches_grid():
    rng = np.random.default_rng(909)
    worst = 0.0
    bad = 0
    for _ in range(100):
        A, kappa, rho, K, delta = random_history(rng)
        fast = aware_budget(A, kappa, rho, K, delta)
        slow = grid_budget(A, kappa, rho, K, delta, frac=1e-4)
        cell = 1e-4 * K * delta
        gap = (1 - rho) * abs(fast - slow)  # in jammed-time units, where slopes are at most 1
        worst = max(worst, gap / cell)
        bad += gap > cell or fast > slow + 1e-12
    ok = bad == 0
    record("C9a", ok, f"100 random histories; worst candidate-set vs grid gap = {worst:.3f} grid cells")
    assert ok


def test_c9b_event_engine_matches_euler(g6, det_params, aware_params):
    rng = np.random.default_rng(99)
    specs = [
        AttackSpec(intervals=((0.01, 0.03), (0.06, 0.015)), kappa=0.03, rho=0.5),
        AttackSpec(kind="periodic", rho=0.5, sigma=40, kappa=0.2),
        AttackSpec(kind="aware", rho=0.5, kappa=0.01),
        AttackSpec(),
    ]
    h = 1e-6
    worst = -math.inf
    for j in range(20):
        spec = specs[j % len(specs)]
        p = aware_params if spec.kind == "aware" else det_params
        x0 = tuple(rng.uniform(0, 5, 6))
        tr = simulate(RunConfig(g6, p, x0, spec, 0.1, 400 + j))
        grid, xs = euler_replay(tr, h)
        err = float(np.max(np.abs(xs - tr.state_at(grid))))
        worst = max(worst, err / (tr.num_events * h))
    ok = worst <= 1.0
    record("C9b", ok, f"20 runs at h=1e-6; worst error is {worst:.3f} of n_events*h")
    assert ok


def test_c9c_measure_matches_grid():
    rng = np.random.default_rng(77)
    worst_exact, worst_grid, bad = 0.0, 0.0, 0
    for _ in range(200):
        n = int(rng.integers(0, 15))
        cuts = np.sort(rng.uniform(0, 5, 2 * n))
        A = explicit_intervals([[cuts[2 * i], cuts[2 * i + 1] - cuts[2 * i]] for i in range(n)])
        tau, t = np.sort(rng.uniform(0, 5, 2))
        cell = 1e-4
        m = jammed_measure(A, tau, t)
        g = grid_measure(A, tau, t, cell)
        worst_exact = max(worst_exact, abs(m - clip_sum_measure(A, tau, t)))
        worst_grid = max(worst_grid, abs(m - g) / cell)
        bad += abs(m - g) > (2 * n + 1) * cell or abs(m - clip_sum_measure(A, tau, t)) > 1e-12
    ok = bad == 0
    record("C9c", ok, f"200 random sets; max |prefix-sum - clip-and-sum| = {worst_exact:.2g}, "
           f"max grid gap {worst_grid:.2f} cells (allowed 2 per interval + 1)")
    assert ok


def run_cli(args):
    assert main(args) == 0


def test_c10_byte_identical_outputs(tmp_path):
    files = {}
    small = json.loads((CONFIGS / "periodic_sweep.json").read_text())
    small["sweep"]["seeds"] = 4
    small["horizon"] = 8
    small_path = tmp_path / "small_periodic_sweep.json"
    small_path.write_text(json.dumps(small))
    jobs = [
        ("run", str(CONFIGS / "det_lowfreq.json"), ["--workers", "1"], ["trajectory.csv", "attempts.csv", "summary.json"]),
        ("run", str(CONFIGS / "aware.json"), ["--workers", "1", "--horizon", "4"], ["trajectory.csv", "attempts.csv", "summary.json"]),
        ("sweep", str(small_path), ["--workers", "{w}"], ["sweep.csv"]),
        ("montecarlo", str(CONFIGS / "det_lowfreq.json"), ["--workers", "{w}", "--horizon", "6"], ["runs.csv", "montecarlo.json"]),
    ]
    mismatches = []
    compared = 0
    for cmd, cfg, extra, outs in jobs:
        blobs = []
        for rep, w in [(0, 1), (1, 1), (2, 4)]:
            out = tmp_path / f"{cmd}-{Path(cfg).stem}-{rep}"
            run_cli([cmd, "--config", cfg, "--out", str(out)] + [e.format(w=w) for e in extra])
            blobs.append({f: (out / f).read_bytes() for f in outs})
        for f in outs:
            compared += 1
            if not blobs[0][f] == blobs[1][f] == blobs[2][f]:
                mismatches.append(f"{cmd}:{f}")
    ok = not mismatches
    record("C10", ok, f"{compared} artifacts compared over two invocations and workers 1 vs 4; mismatches: {mismatches or 'none'}")
    assert ok
