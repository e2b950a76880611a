from rrrflow.checks import *

import pytest


@pytest.mark.parametrize("name", [name for name, _ in CHECKS])
def test_quick_check(name):
    results = run_selftest(quick=True, names=[name])
    assert [r.name for r in results] == [name]
    assert results[0].passed, results[0].detail
    assert results[0].seconds >= 0


def test_check_names():
    names = [name for name, _ in CHECKS]
    assert len(names) == len(set(names))
    assert run_selftest(names=["no-such-check"]) == []


def test_failure_is_caught(monkeypatch):
    def broken(quick=True):
        raise RuntimeError("boom")

    monkeypatch.setattr("rrrflow.checks.CHECKS", [("broken", broken)])
    result, = run_selftest()
    assert not result.passed
    assert result.detail == "RuntimeError: boom"


def test_failure_is_logged(monkeypatch, caplog):
    def wrong(quick=True):
        return False, "off by %d" % 1

    monkeypatch.setattr("rrrflow.checks.CHECKS", [("wrong", wrong)])
    with caplog.at_level("INFO", logger="rrrflow.checks"):
        run_selftest()
    record, = [r for r in caplog.records if r.name == "rrrflow.checks"]
    assert record.levelname == "WARNING"
    assert record.args[:2] == ("FAIL", "wrong")
    assert record.getMessage().endswith(": off by 1")
