from rrrflow.ledm import *
from rrrflow.flow import FlowProblem, flow_field
from rrrflow.exceptions import *

from math import isclose, isnan

import numpy as np
import pandas as pd
import pytest


def test_instance():
    inst = build_instance(2)
    assert np.array_equal(inst.Y, [[0, 1], [1, 0]])
    assert inst.r_plus == 1
    assert inst.batch == 2
    assert inst.dim == 8

    inst = build_instance(3)
    assert np.allclose(inst.Y, [[0, 0.25, 1], [0.25, 0, 0.25], [1, 0.25, 0]])
    assert inst.dim == 2 * 3 * 3 * 2
    assert inst.omega == 0.75

    with pytest.raises(ValueError):
        build_instance(1)
    with pytest.raises(ValueError):
        LedmInstance(2, Y=[[0, 1], [0.5, 0]])
    with pytest.raises(ValueError):
        LedmInstance(2, Y=[[1, 1], [1, 1]])
    with pytest.raises(ValueError):
        LedmInstance(2, Y=[[0, 0], [0, 0]])
    with pytest.raises(DimensionError):
        LedmInstance(3, Y=[[0, 1], [1, 0]])


def test_instance_save_load(tmp_path):
    inst = build_instance(4, r_plus=2, k_max=50)
    path = str(tmp_path / "ledm.json")
    inst.save(path)
    loaded = LedmInstance.load(path)
    assert np.array_equal(loaded.Y, inst.Y)
    assert loaded.r_plus == 2 and loaded.k_max == 50


def test_wire_state():
    inst = build_instance(3)
    W = np.arange(6.0).reshape(3, 2)
    Z = np.arange(6.0, 12.0).reshape(3, 2)
    x = planted_state(inst, W, Z)
    state = WireState.from_vector(x, inst)
    assert state.is_consensus()
    assert np.array_equal(state.W, W)
    assert np.array_equal(state.Z, Z)
    assert np.array_equal(state.vector(), x)
    with pytest.raises(DimensionError):
        planted_state(inst, W[:, :1], Z[:, :1])


def test_residual():
    inst = build_instance(2, r_plus=2)
    x = planted_state(inst, np.eye(2), [[0, 0.5], [0.5, 0]])
    assert isclose(residual(inst, x), 0.5)
    assert isclose(residual(inst, planted_state(inst, np.zeros((2, 2)), np.zeros((2, 2)))), 1.0)
    # Negative averages are clamped
    assert isclose(residual(inst, planted_state(inst, -np.eye(2), [[0, 1], [1, 0]])), 1.0)


def test_lift_projections():
    inst = build_instance(3, r_plus=2)
    p = lift(inst)
    x = np.random.default_rng(0).normal(size=inst.dim)
    pb = p.project_B(x)
    assert WireState.from_vector(pb, inst).is_consensus()
    assert np.allclose(p.project_B(pb), pb)
    assert np.allclose(pb, p.B.project(x))
    pa = WireState.from_vector(p.project_A(x), inst)
    products = np.einsum("ivr,ivr->iv", pa.u, pa.s)
    assert np.allclose(products, inst.Y, atol=1e-8)
    assert pa.copies.min() >= 0


def test_batched_multiplier():
    from rrrflow.ledm import _batched_multiplier
    # Roots close to both poles, an exact zero and two ordinary entries
    a = np.array([1e-12, 1.0, 1.0, 2.5, 1e-6])
    b = np.array([1.0, 1e-12, 1.0, 0.5, 3.0])
    y = np.array([1.0, -1.0, 0.0, 0.3, -2.0])
    lam = _batched_multiplier(a, b, y)
    assert np.all(np.abs(lam) < 1)
    assert lam[0] > 1 - 1e-5 and lam[1] < -1 + 1e-5
    assert lam[2] == 0.0
    pos, neg = a / (1 - lam) ** 2, b / (1 + lam) ** 2
    assert np.all(np.abs(pos - neg - y) <= 1e-8 * (pos + neg + np.abs(y)))
    assert _batched_multiplier(a[:0], b[:0], y[:0]).shape == (0,)

    # Ordinary entries settle and freeze within a few steps
    a, b, y = np.array([2.5, 1.0, 0.3]), np.array([0.5, 1.0, 2.0]), np.array([0.3, 0.5, -1.0])
    assert np.array_equal(_batched_multiplier(a, b, y, iterations=20), _batched_multiplier(a, b, y))


@pytest.mark.parametrize("m", [2, 4])
def test_field_matches_generic(m):
    inst = build_instance(m)
    p = lift(inst)
    generic = FlowProblem(p.A, p.B)
    rng = np.random.default_rng(m)
    for _ in range(3):
        x = rng.random(inst.dim)
        assert np.allclose(p.field(x), generic.field(x), atol=1e-7)


def test_planted_fixed_point():
    inst, W, Z = planted_instance(4, r_plus=3)
    assert np.allclose(inst.Y, W @ Z.T)
    x = planted_state(inst, W, Z)
    assert np.linalg.norm(flow_field(lift(inst), x)) <= 1e-10
    assert residual(inst, x) <= 1e-12
    with pytest.raises(ValueError):
        planted_instance(3, r_plus=1)


def test_two_phase():
    inst = build_instance(2, k_max=30)
    a = run_two_phase(inst, 0.5, seed=1)
    b = run_two_phase(inst, 0.5, seed=1)
    assert np.array_equal(a.trace, b.trace)
    assert a.k_enter == b.k_enter and a.k_solve == b.k_solve
    with pytest.raises(ValueError):
        run_two_phase(inst, 0.0)
    with pytest.raises(ValueError):
        run_two_phase(inst, 1.5)

    inst = build_instance(2, delta_enter=1e3, delta_solve=1e3)
    r = run_two_phase(inst, 0.2)
    assert r.k_enter == 0 and r.k_solve == 0
    assert r.T_search == 0.0 and r.T_conv == 0.0
    assert len(r.trace) == 1

    inst = build_instance(2, delta_enter=0.0, delta_solve=0.0, k_max=5)
    r = run_two_phase(inst, 0.2)
    assert r.censored and not r.entered
    assert isnan(r.T_search) and isnan(r.T_conv)
    assert len(r.trace) == 6


def test_phase_record():
    r = PhaseRecord(3, 0.1, 0, [0.5, 0.02, 0.005], 2, 1)
    assert isclose(r.T_search, 0.2)
    assert r.T_conv == 0.0
    r = PhaseRecord(3, 0.1, 0, [0.5, 0.02, 0.005], 1, 2)
    assert isclose(r.T_search + r.T_conv, 0.2)
    assert r.err_final == 0.005
    assert r.to_row()["censored"] is False
    # Entry at the last allowed index is not an entry before the budget
    assert not PhaseRecord(2, 0.5, 0, [0.5, 0.001], 1, 1, k_max=1).entered
    assert PhaseRecord(2, 0.5, 0, [0.5, 0.001], 1, 1, k_max=2).entered
    assert PhaseRecord(2, 0.5, 0, [0.5, 0.001], 1, 1).entered


def test_entry_probability():
    est = entry_probability(build_instance(2, delta_enter=1e3, k_max=5), 0.5, 4)
    assert est.p_hat == 1.0
    assert est.entered == 4
    assert [r.seed for r in est.records] == [0, 1, 2, 3]
    assert isclose(est.upper, 1.0) and est.lower < 1.0

    est = entry_probability(build_instance(2, delta_enter=0.0, k_max=5), 0.5, 3, seeds=[10, 20, 30])
    assert est.p_hat == 0.0
    assert isclose(est.lower, 0.0, abs_tol=1e-12)
    with pytest.raises(ValueError):
        entry_probability(build_instance(2), 0.5, 2, seeds=[1])


def test_entry_at_budget():
    first = run_two_phase(build_instance(2, k_max=5), 0.5, seed=3)
    k = int(np.argmin(first.trace[:4]))
    delta = float(first.trace[k])
    instance = build_instance(2, delta_enter=delta, delta_solve=delta)
    est = entry_probability(instance, 0.5, 1, seed=3, k_max=k)
    assert est.records[0].k_enter == k
    assert est.entered == 0 and est.p_hat == 0.0
    est = entry_probability(instance, 0.5, 1, seed=3, k_max=k + 1)
    assert est.records[0].k_enter == k
    assert est.entered == 1


def test_wilson():
    lower, upper = wilson_interval(5, 10)
    assert isclose(lower, 0.2366, abs_tol=1e-4)
    assert isclose(upper, 0.7634, abs_tol=1e-4)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_recurrence_index():
    assert recurrence_index(np.full(50, 0.3)) == 1.0
    assert recurrence_index(np.logspace(0, -5, 40), bins=40, burn_in=0) == 0.0
    assert recurrence_index([1, 2, 1, 2, 1], bins=2, burn_in=1) == 1.0
    with pytest.raises(ValueError):
        recurrence_index([1.0], burn_in=1)


def test_euler_fit():
    betas = [0.05, 0.1, 0.2, 0.25, 0.5]
    records = [PhaseRecord(3, b, s, [1.0, 0.0], 10, 10 + round((1 + 2 * b) / b)) for b in betas for s in (0, 1)]
    frame = records_frame(records)
    assert list(frame.columns) == ["m", "beta", "seed", "k_enter", "k_solve", "censored", "T_search", "T_conv",
                                   "err_final"]
    assert str(frame["k_enter"].dtype) == "Int64"
    fit = euler_fit(frame)
    assert isclose(fit.a, 1.0, abs_tol=1e-9)
    assert isclose(fit.b, 2.0, abs_tol=1e-9)
    assert isclose(fit.r2, 1.0)
    assert list(fit.table["beta"]) == [0.05, 0.1, 0.2, 0.25]

    table = pd.DataFrame({"beta": [0.1, 0.2], "T_conv": [3.0, 3.0]})
    assert euler_fit(table).r2 == 1.0
    with pytest.raises(ValueError):
        euler_fit(table[:1])


def test_censored_rows():
    frame = records_frame([PhaseRecord(2, 0.5, 0, [0.9, 0.8], None, None)])
    assert frame["k_enter"].isna().all()
    assert bool(frame["censored"].iloc[0])


def test_heatmap():
    table = heatmap_sweep([2, 3], [0.5], 2, k_max=10)
    assert list(table.columns) == ["m", "beta", "trials", "p_enter", "p_lower", "p_upper", "R_mean", "R_std"]
    assert list(table["m"]) == [2, 3]
    assert ((table["R_mean"] >= 0) & (table["R_mean"] <= 1)).all()
