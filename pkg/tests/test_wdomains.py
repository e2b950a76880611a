from rrrflow.wdomains import *
from rrrflow.instances import planar_sliding, finite_1d, planar_switch
from rrrflow.exceptions import *

from math import isclose, sqrt

import numpy as np
import pytest


def test_cells():
    part = planar_sliding().partition
    assert cell_of(part, [2, -0.5]) == CellId(1, 1)
    assert np.allclose(part.velocity(CellId(1, 1)), [1, 1])
    assert np.allclose(part.velocity(CellId(1, 0)), [-2, 0])
    assert part.solution_cells == [CellId(0, 0)]
    assert part.d(CellId(0, 1)) == 10.0
    assert str(CellId(1, 0)) == "(1,0)"

    a, b = part.locate_many([[2, -0.5], [0.1, 0.1], [5, -2]])
    assert list(a) == [1, 0, 1]
    assert list(b) == [1, 0, 0]


def test_halfspaces():
    part = planar_sliding().partition
    G, h, tags = part.halfspaces(CellId(1, 1))
    assert tags == [("A", 0), ("B", 0)]
    assert np.all(G @ np.array([2, -0.5]) <= h)
    assert not np.all(G @ np.array([0.5, 0]) <= h)


def test_nonempty():
    part = finite_1d().partition
    assert set(part.nonempty_cells()) == {CellId(0, 0), CellId(0, 1), CellId(1, 0), CellId(1, 1)}
    # Two points with a far away second B point: W(1, 1) is empty
    part = CellPartition([[0.0], [1.0]], [[0.0], [100.0]])
    assert not part.is_nonempty(CellId(0, 1), bounds=[[-10, 10]])


def test_interface():
    part = planar_sliding().partition
    interface = part.adjacent(CellId(1, 1), CellId(1, 0))
    assert interface is not None
    assert interface.kind == "B"
    assert interface.convergent
    assert np.allclose(interface.normal, np.array([3, 1]) / sqrt(10))
    assert isclose(interface.offset, 7 / sqrt(10))
    assert np.allclose(interface.sliding, [-0.2, 0.6])
    assert isclose(interface.alpha, 0.6)
    assert isclose(interface.s0, sqrt(0.4))
    assert interface.length > 0

    other = part.adjacent(CellId(1, 1), CellId(0, 0))
    assert other.kind == "mixed"
    assert part.adjacent(CellId(1, 1), CellId(1, 1)) is None


def test_sliding_algebra():
    assert np.allclose(sliding_velocity([1, 1], [-2, 0], [3, 1]), [-0.2, 0.6])
    assert np.allclose(sliding_velocity([1.0], [-2.0], [1.0]), [0.0])
    assert np.allclose(min_norm_velocity([1, 1], [-2, 0]), [-0.2, 0.6])
    assert np.allclose(min_norm_velocity([1, 0], [1, 0]), [1, 0])
    assert not convergent_check([1, 0], [1, 0], [1, 0])
    with pytest.raises(NonConvergentInterfaceError):
        sliding_velocity([1, 0], [1, 0], [1, 0])

    rng = np.random.default_rng(5)
    for _ in range(200):
        v1, v2, n = rng.normal(size=(3, 3))
        if not convergent_check(v1, v2, n):
            continue
        vs = sliding_velocity(v1, v2, n)
        alpha = sliding_coefficient(v1, v2, n)
        assert 0 < alpha < 1
        assert np.allclose(vs, alpha * v1 + (1 - alpha) * v2)
        assert isclose(n @ vs, 0.0, abs_tol=1e-10)


def test_switch_analysis():
    s = a_switch_analysis([0, 0], [2, 0], [1.5, 0])
    assert s.alpha == 3.0
    assert s.convergent
    assert s.toward == 2
    assert s.d_from == 2.25 and s.d_to == 0.25

    s = b_switch_analysis([0, 0], [2, 0], [3, 0])
    assert not s.convergent
    assert s.toward == 2
    assert b_switch_analysis([0, 0], [2, 0], [1, 5]).toward is None
    with pytest.raises(ValueError):
        a_switch_analysis([1, 1], [1, 1], [0, 0])


def test_descent_chain():
    part = planar_sliding().partition
    assert pair_distance_gap(part) == 2.0
    chain = descent_chain(part, CellId(1, 1))
    assert chain.cells == [CellId(1, 1), CellId(0, 0)]
    assert chain.strictly_decreasing
    assert chain.within_bound
    assert chain.bound == 1
    assert not chain.stuck
    step, = chain.steps
    assert step.kind == "mixed"
    assert step.options == [CellId(0, 0)]

    chain = descent_chain(part, CellId(0, 1))
    assert chain.cells[-1] == CellId(0, 0)
    assert chain.strictly_decreasing
    # Steepest drop at every step, whatever the switch kind
    assert all(step.target == min(step.options, key=part.d) for step in chain.steps)

    with pytest.raises(DistinctnessError):
        descent_chain(CellPartition([[0.0], [1.0]], [[0.0], [-1.0]]), CellId(1, 1))


def test_random_chains():
    rng = np.random.default_rng(11)
    done = 0
    while done < 5:
        part = random_instance(3, 3, 2, rng)
        if pair_distance_gap(part) <= 1e-9:
            continue
        chain = descent_chain(part, part.cell_of(rng.uniform(-2, 2, size=2)))
        done += 1
        assert not chain.stuck
        assert chain.strictly_decreasing
        assert chain.within_bound
        assert all(step.verdict_agrees is not False for step in chain.steps)
        assert all(step.target == min(step.options, key=part.d) for step in chain.steps)
        assert all(step.kind in ("A", "B", "mixed") for step in chain.steps)


def test_capture_bound():
    p = planar_sliding()
    part = p.partition
    interface = part.interface_between(CellId(1, 1), CellId(1, 0))
    length = 6.875 * sqrt(0.4)
    bound = capture_time_bound([interface], lengths=[length], problem=p, x0=[2, -0.5], T=20.0)
    assert isclose(bound.bound, 6.875)
    assert isclose(bound.capture_time, 7.25, abs_tol=1e-6)
    assert isclose(bound.sliding_time, 6.875, abs_tol=1e-6)
    assert bound.holds
    # Sliding starts at the entry event, not at t = 0
    assert isclose(bound.capture_time - bound.sliding_time, 0.375, abs_tol=1e-6)

    unmeasured = capture_time_bound([interface], lengths=[length])
    assert unmeasured.capture_time is None and unmeasured.sliding_time is None
    assert unmeasured.holds is None

    assert capture_time_bound([]).bound == 0.0
    assert capture_time_bound([interface], s0=0.0, lengths=[1.0]).bound is None
    assert capture_time_bound([interface], lengths=[None]).bound is None


def test_sliding_interfaces():
    from rrrflow.flow import integrate_flow
    p = planar_sliding()
    part = p.partition
    traj = integrate_flow(p, [2, -0.5], 20.0, mode="piecewise")
    found = sliding_interfaces(part, traj, part.default_bounds())
    assert len(found) == 1
    assert found[0].cells == (CellId(1, 1), CellId(1, 0))
    assert found[0].length > 6.875 * sqrt(0.4)
    bound = capture_time_bound(found, problem=p, x0=[2, -0.5], T=20.0)
    assert bound.holds

    q = planar_switch()
    assert sliding_interfaces(q.partition, integrate_flow(q, [5, -4], 20.0, mode="piecewise")) == []


def test_save_load(tmp_path):
    part = planar_switch().partition
    path = str(tmp_path / "partition.json")
    part.save(path)
    loaded = CellPartition.load(path)
    assert loaded.cell_of([5, -4]) == part.cell_of([5, -4]) == CellId(1, 1)
