from rrrflow.cli import *
from rrrflow.store import ResultStore, verify_manifest, OUTPUT_DIR_VARIABLE

import json
import os

import pytest


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def test_linearize(tmp_path, capsys):
    out = str(tmp_path / "spectral.json")
    assert main(["linearize", "--instance", "orthogonal-lines", "--out", out]) == 0
    report = json.loads(_read(out))["reports"][0]
    assert [round(a, 9) for a in report["angles_deg"]] == [90.0]
    assert os.path.isfile(out + ".manifest.json")
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"]


def test_linearize_angles(tmp_path):
    config = RunConfig("linearize", {"theta": [30.0, 60.0]}, out=str(tmp_path / "s.json"))
    status, summary = dispatch(config)
    assert status == 0
    assert len(summary["angles_deg"]) == 2
    assert abs(summary["eigenvalues"][0][0][0] + 0.25) < 1e-12


def test_unknown_command():
    with pytest.raises(SystemExit) as e:
        main(["teleport"])
    assert e.value.code == 2


def test_bad_configuration(tmp_path, capsys):
    assert main(["flow", "--param", "bogus=1", "--out", str(tmp_path / "a.csv")]) == 2
    assert "params.bogus" in capsys.readouterr().err
    assert main(["flow", "--instance", "no-such-instance", "--out", str(tmp_path / "b.csv")]) == 2
    path = str(tmp_path / "broken.json")
    with open(path, "w") as f:
        f.write("{")
    assert main(["flow", "--config", path]) == 2
    assert main(["flow", "--config", str(tmp_path / "missing.json")]) == 2
    assert not os.path.exists(str(tmp_path / "a.csv"))


def test_flags_override_config(tmp_path):
    path = str(tmp_path / "config.json")
    with open(path, "w") as f:
        json.dump({"command": "flow", "params": {"instance": "theta-lines", "T": 1.0}, "seed": 4}, f)
    args = build_parser().parse_args(["flow", "--config", path, "--T", "2", "--param", "step=0.01"])
    config = config_from_args(args)
    assert config.params["T"] == 2.0
    assert config.params["step"] == 0.01
    assert config.params["instance"] == "theta-lines"
    assert config.seed == 4


def test_reproducible_csv(tmp_path):
    args = ["ledm", "run", "--m", "2", "--beta", "0.2", "0.4", "--trials", "2", "--kmax", "20", "--seed", "3"]
    first, second = str(tmp_path / "first.csv"), str(tmp_path / "second.csv")
    assert main(args + ["--out", first]) == 0
    assert main(args + ["--out", second]) == 0
    assert _read(first) == _read(second)
    assert _read(first).startswith(b"m,beta,seed,k_enter,k_solve,censored,T_search,T_conv,err_final\n")


def test_refuses_overwrite(tmp_path):
    out = str(tmp_path / "trajectory.csv")
    args = ["flow", "--instance", "orthogonal-lines", "--T", "0.5", "--step", "0.1", "--out", out]
    assert main(args) == 0
    before = _read(out)
    assert main(args) == 1
    assert _read(out) == before


def test_result_store(tmp_path, monkeypatch):
    root = str(tmp_path / "runs")
    monkeypatch.setenv(OUTPUT_DIR_VARIABLE, root)
    assert main(["hitting", "--instance", "orthogonal-lines", "--eps", "0.1", "0.05"]) == 0
    runs = ResultStore(root).runs()
    assert len(runs) == 1
    run = os.path.join(root, runs[0])
    assert runs[0].startswith("hitting-")
    assert verify_manifest(run) == []
    assert {"config.json", "manifest.json", "hitting.csv", "hitting.json"} <= set(os.listdir(run))
    config = RunConfig.load(os.path.join(run, "config.json"))
    assert config.params["eps"] == [0.1, 0.05]


def test_wdomain(tmp_path):
    config = RunConfig("wdomain", {"T": 20.0}, format="json", out=str(tmp_path / "trajectory.json"))
    status, summary = dispatch(config)
    assert status == 0
    assert summary["events"][:3] == ["sliding-entry", "sliding-exit", "capture"]
    assert summary["capture"]["holds"] is True
    assert summary["chain_length"] == 1
    assert abs(summary["end"][0] - 1.0) < 1e-6 and abs(summary["end"][1] - 4.0) < 1e-6


def test_meso(tmp_path):
    store = ResultStore(str(tmp_path / "runs"))
    config = RunConfig("meso", {"beta": [0.5], "samples": 4000, "box": [-3.0, 4.0]})
    status, summary = dispatch(config, store)
    assert status == 0
    assert summary["cells"] == 4
    assert summary["components"] == 3
    assert summary["reachability_ok"]
    assert summary["phi"] == [0.5]
    run = summary["output"]
    assert "support.edgelist" in os.listdir(run)


def test_meso_needs_finite(tmp_path):
    config = RunConfig("meso", {"instance": "theta-lines"}, out=str(tmp_path / "x.csv"))
    with pytest.raises(ConfigError):
        dispatch(config)


def test_problem_file(tmp_path):
    from rrrflow.instances import planar_switch
    path = str(tmp_path / "problem.json")
    planar_switch().save(path)
    config = RunConfig("flow", {"instance": path, "x0": [5.0, -4.0], "T": 1.0}, out=str(tmp_path / "t.csv"))
    status, summary = dispatch(config)
    assert status == 0
    assert abs(summary["end"][0] - 2.0) < 1e-8


def test_hitting_summary(tmp_path):
    config = RunConfig("hitting", {"x0": [1.0, 0.0]}, out=str(tmp_path / "hitting.csv"))
    status, summary = dispatch(config)
    assert status == 0
    assert summary["bounded"] is True
    assert summary["growth_ok"] is True
    assert 3.5 <= summary["k_ratio"] <= 4.5


def test_ledm_store(tmp_path):
    store = ResultStore(str(tmp_path / "runs"))
    config = RunConfig("ledm-run", {"m": 2, "beta": [0.5], "trials": 2, "k_max": 30}, seed=1)
    status, summary = dispatch(config, store)
    assert status == 0
    assert set(summary["p_enter"]["0.5"]) == {"p_enter", "lower", "upper"}
    run = summary["output"]
    assert verify_manifest(run) == []
    assert {"results.csv", "ledm.json", "config.json", "manifest.json"} <= set(os.listdir(run))

    config = RunConfig("ledm-heatmap", {"m": [2], "beta": [0.5], "trials": 2, "k_max": 10, "bins": 5})
    status, summary = dispatch(config, store)
    assert status == 0
    assert summary["rows"] == 1
    assert verify_manifest(summary["output"]) == []
    assert "heatmap.csv" in os.listdir(summary["output"])


def test_selftest_status(tmp_path, monkeypatch):
    def fine(quick=True):
        return True, "fine"

    def wrong(quick=True):
        return False, "off by one"

    out = str(tmp_path / "selftest.csv")
    monkeypatch.setattr("rrrflow.checks.CHECKS", [("fine", fine)])
    assert main(["selftest", "--out", out]) == 0
    assert _read(out).startswith(b"name,passed,detail,seconds\n")

    monkeypatch.setattr("rrrflow.checks.CHECKS", [("fine", fine), ("wrong", wrong)])
    status, summary = dispatch(RunConfig("selftest", out=str(tmp_path / "second.csv")))
    assert status == 1
    assert summary["checks"]["wrong"] == {"passed": False, "detail": "off by one"}
