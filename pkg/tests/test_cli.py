import csv
import json
from pathlib import Path

import numpy as np
import pytest

from jamcons.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VERIFY, main
from jamcons.config import load_config, parse_config
from jamcons.engine import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def cfg_path(name):
    return str(CONFIGS / f"{name}.json")


def write_cfg(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def base_doc(**over):
    doc = json.loads((CONFIGS / "default.json").read_text())
    doc.update(over)
    return doc


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_run_det_lowfreq(tmp_path):
    assert main(["run", "--config", cfg_path("det_lowfreq"), "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {"first_entry", "settling", "num_events", "seed", "attack_kind", "params"}
    assert summary["attack_kind"] == "explicit"
    assert summary["settling"] is not None and 0 < summary["settling"] < 10
    rows = read_csv(tmp_path / "trajectory.csv")
    assert list(rows[0]) == ["t"] + [f"x{i}" for i in range(6)] + [f"u{i}" for i in range(6)]
    assert float(rows[-1]["t"]) == 10.0
    att = read_csv(tmp_path / "attempts.csv")
    assert list(att[0]) == ["agent", "slot", "time", "phi", "ave"]
    jammed = [r for r in att if 0.0 <= float(r["time"]) <= 0.8]
    assert jammed and all(r["phi"] == "0" for r in jammed)


def test_run_aware_blocks_early_then_recovers(tmp_path):
    args = ["run", "--config", cfg_path("aware"), "--out", str(tmp_path), "--horizon", "15"]
    assert main(args) == EXIT_OK
    att = read_csv(tmp_path / "attempts.csv")
    t = np.array([float(r["time"]) for r in att])
    phi = np.array([int(r["phi"]) for r in att])
    first = t[phi == 1].min()
    assert first > 1.0
    assert phi[t < first].sum() == 0
    assert phi[t > first].mean() > 0.05


def test_overrides_change_seed_and_horizon(tmp_path):
    main(["run", "--config", cfg_path("default"), "--out", str(tmp_path), "--seed", "99", "--horizon", "1.5"])
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["seed"] == 99 and s["params"]["horizon"] == 1.5


@pytest.mark.parametrize(
    "change, key",
    [
        ({"epsilon": "big"}, "epsilon"),
        ({"delta": -1}, "delta"),
        ({"colour": 1}, "colour"),
        ({"attack": {"kind": "laser"}}, "attack.kind"),
        ({"attack": {"kind": "periodic", "rho": 0.5}}, "attack"),
        ({"attack": {"kind": "explicit", "intervals": [[0, 1], [0.5, 1]]}}, "attack"),
        ({"graph": {"n": 3, "edges": [[0, 1]]}}, "graph.edges"),
        ({"x0": [0, 1]}, "x0"),
        ({"T": "delta*2"}, "T"),
        ({"sweep": {"rho": [], "seeds": 2}}, "sweep.rho"),
    ],
)
def test_malformed_config_names_key(tmp_path, capsys, change, key):
    rc = main(["run", "--config", write_cfg(tmp_path, base_doc(**change)), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert key in capsys.readouterr().err


def test_missing_key_and_bad_json(tmp_path, capsys):
    doc = base_doc()
    del doc["horizon"]
    assert main(["run", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "horizon" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", cfg_path("default"), "--out", str(blocker)]) == EXIT_IO


def test_sweep_rho_sigma(tmp_path):
    doc = json.loads((CONFIGS / "periodic_sweep.json").read_text())
    doc["sweep"]["seeds"] = 2
    doc["horizon"] = 8
    assert main(["sweep", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 9
    assert list(rows[0]) == ["rho", "sigma", "m_C", "s_C", "runs", "unsettled"]
    assert {(float(r["rho"]), float(r["sigma"])) for r in rows} == {
        (r, s) for r in (0.2, 0.5, 0.8) for s in (10.0, 1000.0, 100000.0)
    }


def test_sweep_kappa_rho(tmp_path):
    doc = json.loads((CONFIGS / "aware_sweep.json").read_text())
    doc["sweep"] = {"rho": [0.2, 0.6], "kappa": [0.05, 0.2], "seeds": 2}
    doc["horizon"] = 12
    assert main(["sweep", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "sweep.csv")
    assert list(rows[0])[:2] == ["rho", "kappa"] and len(rows) == 4


def test_sweep_requires_axes(tmp_path, capsys):
    assert main(["sweep", "--config", cfg_path("det_lowfreq"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "sweep" in capsys.readouterr().err


def test_montecarlo(tmp_path):
    doc = base_doc(montecarlo={"seeds": 3}, attack={"kind": "periodic", "rho": 0.5, "sigma": 10, "kappa": 0.2})
    assert main(["montecarlo", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    runs = read_csv(tmp_path / "runs.csv")
    assert [r["seed"] for r in runs] == ["7", "8", "9"]
    summary = json.loads((tmp_path / "montecarlo.json").read_text())
    assert summary["runs"] == 3 and summary["unsettled"] == 0


@pytest.mark.parametrize("name", ["default", "det_lowfreq", "bound_check"])
def test_verify_shipped_configs_pass(tmp_path, name):
    assert main(["verify", "--config", cfg_path(name), "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["ok"] and {c["name"] for c in rep["checks"]} >= {"hold_after_success", "euler_oracle", "attack_budget"}
    assert (tmp_path / "verify.txt").read_text().startswith("PASS params")


def test_verify_reports_violating_window(tmp_path):
    assert main(["verify", "--config", cfg_path("violating"), "--out", str(tmp_path)]) == EXIT_VERIFY
    rep = json.loads((tmp_path / "verify.json").read_text())
    a1 = next(c for c in rep["checks"] if c["name"] == "attack_budget")
    assert not a1["ok"]
    assert "[0.0, 4.6]" in a1["detail"]


def test_verify_catches_bad_hold(tmp_path):
    doc = base_doc(T=0.01)
    assert main(["verify", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path)]) in (EXIT_VERIFY, EXIT_CONFIG)


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.json")):
        exp = load_config(p)
        assert exp.graph.n == 6
        assert exp.x0 == load_config(p).x0
        assert all(0 <= v <= 1 for v in exp.x0)


def test_x0_is_fixed_across_run_seeds():
    exp = parse_config(base_doc())
    assert exp.run_config(seed=1).x0 == exp.run_config(seed=2).x0
    assert exp.with_overrides(seed=8).x0 != exp.x0


def test_aware_needs_common_delta():
    with pytest.raises(ConfigError, match="delta"):
        parse_config(base_doc(attack={"kind": "aware", "rho": 0.5, "kappa": 0.1}))
