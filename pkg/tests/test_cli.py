import csv
import json
import math

import numpy as np
import pytest

from noisefield import OhmicParams, OhmicTrajectory, field
from noisefield.channels import dump_tabulated
from noisefield.cli import main

from conftest import EQUATOR, mixed_tabulated

S = 1 / math.sqrt(2)


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def base(kind="ohmic", steps=41, t_f=1.0, **extra):
    params = {
        "ohmic": {"J0": 0.25, "Lambda": 10.0, "kBT": 1.0, "omega0": 2 * math.pi},
        "recurrence": {"N": 30, "P": 1.0},
        "amplitude-damping": {"T1": 1.0},
    }[kind]
    cfg = {
        "channel": {"kind": kind, **params},
        "initial_state": {"alpha": [S, 0.0], "beta": [S, 0.0]},
        "grid": {"t_i": 0.0, "t_f": t_f, "steps": steps},
        "estimator": {"kind": "gh", "n": 64},
    }
    cfg.update(extra)
    return cfg


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_validate_built_in(tmp_path):
    assert main(["validate", "--config", write(tmp_path, base()), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "validity.json").read_text())
    assert rep["passed"] is True
    man = json.loads((tmp_path / "manifest_validate.json").read_text())
    assert man["exit_code"] == 0 and man["config"]["channel"]["kind"] == "ohmic" and "version" in man


def test_validate_bad_tabulated_file(tmp_path, capsys):
    lines = ["t,rho00,rho11,re_rho10,im_rho10"] + [f"{0.1 * k},0.5,0.5,{0.6 if k == 3 else 0.1},0" for k in range(6)]
    (tmp_path / "traj.csv").write_text("\n".join(lines) + "\n")
    cfg = {"channel": {"kind": "tabulated", "file": "traj.csv"}}
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 1
    assert "row 4" in capsys.readouterr().err
    man = json.loads((tmp_path / "manifest_validate.json").read_text())
    assert man["summary"]["row"] == 4 and man["summary"]["passed"] is False


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"channel": {"kind": "ohmic",,}')
    assert main(["validate", "--config", str(p)]) == 2
    assert "line 1" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["validate"], ["simulate", "--config", "x", "--seed", "abc"]])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_config_errors(tmp_path):
    assert main(["validate", "--config", write(tmp_path, {"channel": {"kind": "nope"}, "grid": {"t_i": 0, "t_f": 1, "steps": 5},
                                                         "initial_state": {"alpha": 1, "beta": 0}})]) == 2
    cfg = base()
    cfg["grid"]["steps"] = 1
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 2
    cfg = base(estimator={"kind": "both"})
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 2
    cfg = base()
    cfg["channel"]["J1"] = 3
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 2


def test_unnormalized_state_is_a_domain_failure(tmp_path):
    cfg = base()
    cfg["initial_state"] = {"alpha": [1.0, 0.0], "beta": [1.0, 0.0]}
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 1


def test_synthesize_stationary_equator(tmp_path):
    cfg = base(synthesize={"paths": 4, "field_times": "nodes"})
    cfg["channel"].update(J0=0.0, omega0=0.0)
    assert main(["synthesize", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    for r in rows(tmp_path / "fields.csv"):
        assert float(r["Bx"]) == float(r["By"]) == float(r["Bz"]) == 0.0


def test_synthesize_dephasing_paths(tmp_path):
    cfg = base(synthesize={"paths": 3, "seed": 11})
    path = write(tmp_path, cfg)
    assert main(["synthesize", "--config", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["synthesize", "--config", path, "--out", str(tmp_path / "b")]) == 0
    data = (tmp_path / "a" / "fields.csv").read_bytes()
    assert data == (tmp_path / "b" / "fields.csv").read_bytes()
    rs = rows(tmp_path / "a" / "fields.csv")
    assert sorted({r["path_id"] for r in rs}) == ["0", "1", "2"]
    tr = OhmicTrajectory(OhmicParams(J0=0.25, Lambda=10.0, kBT=1.0, omega0=2 * math.pi), EQUATOR)
    bz = [float(r["Bz"]) for r in rs if r["path_id"] == "0"]
    assert np.ptp(bz) > 0
    r = rs[7]
    f = field(tr, float(r["t"]), float(r["z"]))
    assert [float(r["Bx"]), float(r["By"]), float(r["Bz"])] == pytest.approx([f.Bx, f.By, f.Bz], rel=1e-13, abs=1e-13)
    assert main(["synthesize", "--config", path, "--out", str(tmp_path / "c"), "--seed", "12"]) == 0
    assert data != (tmp_path / "c" / "fields.csv").read_bytes()


def test_synthesize_singular_node_reports_path_and_time(tmp_path, capsys):
    cfg = base("amplitude-damping", synthesize={"z": [0.5, 1.0], "field_times": "nodes"})
    assert main(["synthesize", "--config", write(tmp_path, cfg)]) == 1
    err = capsys.readouterr().err
    assert "path 0" in err and "t = 0.0" in err


def test_synthesize_states(tmp_path):
    cfg = base("amplitude-damping", synthesize={"z": [0.5], "states": True})
    assert main(["synthesize", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "states.csv")) == 41


@pytest.mark.slow
def test_simulate_recurrence(tmp_path):
    cfg = base("recurrence", steps=200, tolerances={"compare": 1e-7}, integrator={"max_angle": 5e-4})
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rs = rows(tmp_path / "result.csv")
    ent = np.array([float(r["entropy_est"]) for r in rs])
    t = np.array([float(r["t"]) for r in rs])
    assert ent[0] <= 1e-12
    assert abs(ent[np.argmin(np.abs(t - 0.5))] - math.log(2)) <= 1e-4
    assert ent[-1] <= 1e-6
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["max_deviation"] <= 1e-7


def test_simulate_damping(tmp_path):
    cfg = base("amplitude-damping", steps=200, t_f=3.0, tolerances={"compare": 1e-7})
    cfg["initial_state"] = {"alpha": [0.6, 0.0], "beta": [0.0, 0.8]}
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path), "--tol", "1e-12"]) == 1


def test_simulate_mixed_tabulated(tmp_path):
    tr = mixed_tabulated(n=101)
    dump_tabulated(tr, tr.t, tmp_path / "mixed.csv")
    cfg = {"channel": {"kind": "tabulated", "file": "mixed.csv",
                       "initial_matrix": {"rho00": 0.7, "rho11": 0.3, "rho10": [0.2, 0.0]}},
           "estimator": {"kind": "gh", "n": 64}, "tolerances": {"compare": 1e-7}}
    assert main(["simulate", "--config", write(tmp_path, cfg)]) == 0
    cfg["channel"]["initial_matrix"]["rho00"] = 0.6
    assert main(["simulate", "--config", write(tmp_path, cfg)]) == 1


def test_simulate_monte_carlo(tmp_path):
    cfg = base(steps=101, t_f=2.0, estimator={"kind": "mc", "M": 10_000, "seed": 5})
    cfg["initial_state"] = {"alpha": [0.6, 0.0], "beta": [0.8 * math.cos(0.7), 0.8 * math.sin(0.7)]}
    path = write(tmp_path, cfg)
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "a")]) == 0
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["se_consistency"]["fraction_within"] >= 0.95
    assert summary["seed"] == 5 and summary["size"] == 10_000
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "result.csv").read_bytes() == (tmp_path / "b" / "result.csv").read_bytes()


def test_sweep_recurrence_modes(tmp_path):
    cfg = base("recurrence", steps=51, integrator={"max_angle": 0.01}, tolerances={"compare": 1e-4},
               sweep={"parameter": "N", "values": [10, 20, 30]})
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rs = rows(tmp_path / "sweep.csv")
    assert [float(r["gamma_mid"]) for r in rs] == pytest.approx([40.0, 80.0, 120.0], abs=1e-9)
    assert all(float(r["entropy_max"]) == pytest.approx(math.log(2), abs=1e-9) for r in rs)


def test_sweep_damping_t1(tmp_path):
    cfg = base("amplitude-damping", steps=41, t_f=2.0, integrator={"max_angle": 0.01},
               tolerances={"compare": 1e-4}, sweep={"parameter": "T1", "values": [0.5, 1.0, -1.0, 2.0, 4.0]})
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 1
    rs = rows(tmp_path / "sweep.csv")
    assert len(rs) == 5
    assert rs[2]["error"].startswith("DomainError") and rs[2]["passed"] == "False"
    final = [float(r["final_rho11"]) for r in rs if not r["error"]]
    assert all(b > a for a, b in zip(final, final[1:]))
    assert final[0] == pytest.approx(0.5 * math.exp(-4.0), rel=1e-12)


def test_sweep_empty_range(tmp_path):
    cfg = base(sweep={"parameter": "J0", "values": []})
    out = tmp_path / "out"
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())
