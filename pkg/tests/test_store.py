from rrrflow.store import *
from rrrflow.checks import GOLDEN_DIR
from rrrflow.exceptions import ConfigError

import json
import os

import pandas as pd
import pytest


def test_defaults_and_validation():
    config = RunConfig("hitting", {"delta": 0.2})
    assert config.params["delta"] == 0.2
    assert config.params["eps"] == [0.01, 0.005, 0.0025]
    assert config.format == "csv"

    with pytest.raises(ConfigError) as e:
        RunConfig("hitting", {"delta": "big", "bogus": 1}, seed=-1, format="xml")
    fields = [field for field, _ in e.value.diagnostics]
    assert fields == ["seed", "format", "params.delta", "params.bogus"]
    assert "params.delta" in str(e.value)

    with pytest.raises(ConfigError):
        RunConfig("nothing")
    with pytest.raises(ConfigError):
        RunConfig("ledm-run", {"m": True})


def test_from_dict_overrides():
    d = {"command": "flow", "params": {"T": 2.0, "instance": "theta-lines"}, "seed": 3}
    config = RunConfig.from_dict(d, seed=None, out="x.csv", params={"T": 5.0, "mode": None})
    assert config.seed == 3
    assert config.out == "x.csv"
    assert config.params["T"] == 5.0
    assert config.params["instance"] == "theta-lines"
    assert config.params["mode"] is None

    with pytest.raises(ConfigError):
        RunConfig.from_dict({"command": "flow", "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"params": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict([1, 2])


def test_load(tmp_path):
    path = str(tmp_path / "config.json")
    with open(path, "w") as f:
        f.write('{"command": "meso",\n "params": {"beta": [0.5,]}}')
    with pytest.raises(ConfigError) as e:
        RunConfig.load(path)
    assert e.value.diagnostics[0][0].startswith("line 2 column")


def test_golden_config():
    path = os.path.join(GOLDEN_DIR, "config.json")
    config = RunConfig.load(path)
    with open(path, "rb") as f:
        assert config.canonical_bytes() == f.read()
    assert sha256_file(path) == sha256_bytes(config.canonical_bytes())
    assert verify_manifest(GOLDEN_DIR) == []


def test_csv_bytes():
    frame = pd.DataFrame({"a": [1, 2], "b": [0.5, 0.25]})
    assert frame_to_csv_bytes(frame) == b"a,b\n1,0.5\n2,0.25\n"


def test_store_commit(tmp_path):
    store = ResultStore(str(tmp_path / "runs"))
    assert store.runs() == []
    config = RunConfig("selftest")
    first = store.commit(config, {"table.csv": b"x\n1\n"})
    second = store.commit(config, {"table.csv": b"x\n1\n"})
    assert first != second
    assert len(store.runs()) == 2
    assert verify_manifest(first) == []
    with open(os.path.join(first, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["command"] == "selftest"
    assert manifest["artifacts"]["table.csv"] == sha256_bytes(b"x\n1\n")
    assert not [d for d in os.listdir(str(tmp_path / "runs")) if d.startswith(".staging")]

    with open(os.path.join(first, "table.csv"), "wb") as f:
        f.write(b"tampered\n")
    assert verify_manifest(first) == ["table.csv does not match its hash"]


def test_store_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_VARIABLE, str(tmp_path / "env"))
    assert ResultStore().root == str(tmp_path / "env")
    monkeypatch.delenv(OUTPUT_DIR_VARIABLE)
    assert ResultStore().root == DEFAULT_OUTPUT_DIR


def test_commit_file(tmp_path):
    config = RunConfig("flow")
    path = str(tmp_path / "out" / "trajectory.csv")
    commit_file(path, b"t\n0\n", config)
    with open(path + ".manifest.json") as f:
        manifest = json.load(f)
    assert manifest["artifacts"] == {"trajectory.csv": sha256_bytes(b"t\n0\n")}
    assert manifest["config"]["command"] == "flow"
    with pytest.raises(FileExistsError):
        commit_file(path, b"t\n1\n", config)
    with open(path, "rb") as f:
        assert f.read() == b"t\n0\n"
