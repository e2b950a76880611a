from rrrflow.linearize import *
from rrrflow.flow import integrate_flow, rrr_step
from rrrflow.instances import *
from rrrflow.exceptions import *

from math import isclose, sin, cos, pi, radians

import numpy as np
import pytest


def _report(p, x):
    return jacobian_at_feasible(tangent_projector(p.A, x), tangent_projector(p.B, x))


def test_lines_spectrum():
    for deg in (15, 30, 45, 60, 75, 90):
        theta = radians(deg)
        report = _report(theta_lines(theta), np.zeros(2))
        assert report.passed
        assert np.allclose(report.J, rotation_block(theta))
        assert isclose(report.angles[0], theta, rel_tol=1e-9)
        assert isclose(report.sigma, sin(theta) ** 2, rel_tol=1e-9)
        expected = sorted([complex(-sin(theta) ** 2, s * sin(theta) * cos(theta)) for s in (-1, 1)],
                          key=lambda z: z.imag)
        found = sorted(report.eigenvalues, key=lambda z: z.imag)
        assert np.allclose(found, expected, atol=1e-10)
        assert np.allclose(report.sym_eigenvalues, [-sin(theta) ** 2] * 2)


def test_orthogonal_is_minus_identity():
    report = _report(orthogonal_lines(), np.zeros(2))
    assert np.allclose(report.J, -np.eye(2))


def test_planes_with_intersection():
    report = _report(planes_r4(pi / 6), np.zeros(4))
    assert report.passed
    assert report.intersection_dim == 1
    assert len(report.angles) == 1
    assert isclose(report.angles[0], pi / 6, rel_tol=1e-9)
    assert np.allclose(report.J @ np.eye(4)[0], 0)
    # e3 is orthogonal to both planes, where J vanishes too
    assert np.allclose(report.J @ np.eye(4)[3], 0)

    report = _report(lines_with_axis_r3(pi / 4), np.zeros(3))
    assert report.intersection_dim == 1
    assert report.passed


def test_circle_line_angle():
    p = circle_line()
    report = _report(p, feasible_point("circle-line"))
    assert isclose(report.angles[0], pi / 3, rel_tol=1e-9)
    assert report.passed
    with pytest.raises(ValueError):
        tangent_projector(p.A, [0.5, 0.5])
    with pytest.raises(UnsupportedSetError):
        tangent_projector(finite_1d().A, [0.0])


def test_finite_differences():
    p = theta_lines(pi / 5)
    J = finite_difference_jacobian(p, [0.2, 0.1])
    assert np.allclose(J, rotation_block(pi / 5), atol=1e-8)
    with pytest.raises(NonSmoothError):
        finite_difference_jacobian(finite_1d(), [2.5])


def test_lyapunov():
    report = _report(theta_lines(pi / 4), np.zeros(2))
    cert = solve_transverse_lyapunov(report)
    assert isclose(cert.gamma, 0.5)
    assert np.allclose(cert.H, np.eye(2))
    assert cert.kernel_basis.shape[1] == 0
    assert cert.margin <= 1e-12

    iterates = linearized_iterates(report.J, np.zeros(2), [0.3, -0.2], 0.05, 300)
    margins = verify_discrete_lyapunov(iterates, cert, 0.05)
    assert margins.holds
    assert margins.envelope_holds
    assert margins.checked == 300

    # The nonlinear iterates coincide with the linear ones for lines
    p = theta_lines(pi / 4)
    x = np.array([0.3, -0.2])
    for k in range(10):
        x = rrr_step(p, x, 0.05)
    assert np.allclose(x, iterates[10])


def test_lyapunov_kernel():
    report = _report(planes_r4(pi / 6), np.zeros(4))
    cert = solve_transverse_lyapunov(report, intersection_dim=1)
    assert isclose(cert.gamma, 0.25)
    assert cert.kernel_basis.shape[1] == 2
    with pytest.raises(NotTransversalError):
        solve_transverse_lyapunov(report, intersection_dim=0)


def test_lyapunov_tangential_sets():
    # Coincident lines leave nothing transverse
    with pytest.raises(NotTransversalError):
        solve_transverse_lyapunov(_report(theta_lines(0.0), np.zeros(2)))
    # Above the angle threshold but with a rate sin^2 lost in the tolerance
    with pytest.raises(NotTransversalError):
        solve_transverse_lyapunov(_report(theta_lines(2e-6), np.zeros(2)))
    cert = solve_transverse_lyapunov(_report(theta_lines(1e-3), np.zeros(2)), tol=1e-12)
    assert isclose(cert.gamma, sin(1e-3) ** 2)


def test_lyapunov_violation_detected():
    report = _report(theta_lines(pi / 4), np.zeros(2))
    cert = solve_transverse_lyapunov(report)
    growing = np.array([[0.1, 0.0], [0.2, 0.0], [0.4, 0.0]])
    margins = verify_discrete_lyapunov(growing, cert, 0.05)
    assert not margins.holds
    assert margins.violations == 2
    assert not margins.envelope_holds


def test_tube_decay():
    p = theta_lines(pi / 3)
    tube = TubeSpec(1.0, pi / 4)
    assert isclose(tube.sigma, 0.25)
    traj = integrate_flow(p, [0.3, 0.2], 4.0, mode="smooth", step=1e-2)
    report = verify_tube_decay(p, tube, traj)
    assert report.holds
    assert report.no_revisit
    assert report.excluded == 0
    assert report.worst_margin < 0
    with pytest.raises(ValueError):
        TubeSpec(0.0, 0.1)


def test_tube_decay_planes():
    p = planes_r4(pi / 6)
    tube = TubeSpec(1.0, pi / 6)
    assert isclose(tube.sigma, 0.125)
    traj = integrate_flow(p, [0.05, 0.1, 0.05, 0.02], 4.0, mode="smooth", step=1e-2)
    report = verify_tube_decay(p, tube, traj)
    assert report.holds
    assert report.no_revisit
    assert report.checked > 0
    # The gap decays at rate sin^2(30 deg) = 0.25, twice sigma
    assert report.worst_margin < -0.1
