"""Named problems with known closed-form behaviour, used by the command line and the self-test"""
import numpy as np

from .flow import FlowProblem
from .sets import AffineSubspace, FinitePoints, Sphere


def orthogonal_lines():
    """The two coordinate axes of the plane, meeting at the origin"""
    return FlowProblem(AffineSubspace.line(0.0), AffineSubspace.line(np.pi / 2))


def theta_lines(theta=np.pi / 6):
    """Two lines through the origin at angle theta; the gap decays as exp(-sin^2(theta) t)"""
    return FlowProblem(AffineSubspace.line(0.0), AffineSubspace.line(theta))


def parallel_lines(offset=1.0):
    """Two disjoint horizontal lines, a problem without solutions"""
    return FlowProblem(AffineSubspace.line(0.0), AffineSubspace.line(0.0, through=[0.0, offset]))


def planes_r4(theta=np.pi / 6):
    """Two planes of R^4 sharing one direction and making the angle theta in the other"""
    e = np.eye(4)
    A = AffineSubspace(np.zeros(4), [e[0], e[1]])
    B = AffineSubspace(np.zeros(4), [e[0], np.cos(theta) * e[1] + np.sin(theta) * e[2]])
    return FlowProblem(A, B)


def lines_with_axis_r3(theta=np.pi / 4):
    """Two planes of R^3 through the common axis e3, at angle theta"""
    e = np.eye(3)
    A = AffineSubspace(np.zeros(3), [e[0], e[2]])
    B = AffineSubspace(np.zeros(3), [np.cos(theta) * e[0] + np.sin(theta) * e[1], e[2]])
    return FlowProblem(A, B)


def circle_line(height=0.5):
    """The unit circle and the horizontal line y = height, crossing at 60 degrees for height 1/2"""
    return FlowProblem(Sphere([0.0, 0.0], 1.0), AffineSubspace.line(0.0, through=[0.0, height]))


def finite_1d():
    """A = {0, 2}, B = {0, 3} on the real line"""
    return FlowProblem(FinitePoints([[0.0], [2.0]]), FinitePoints([[0.0], [3.0]]))


def planar_switch():
    """A = {(0,0), (4,0)}, B = {(0,0), (0,4)}: a B-switch on the way to the common point"""
    return FlowProblem(FinitePoints([[0.0, 0.0], [4.0, 0.0]]), FinitePoints([[0.0, 0.0], [0.0, 4.0]]))


def planar_sliding():
    """A = {(0,0), (2,0)}, B = {(0,0), (3,1)}: a convergent interface 3 x1 + x2 = 7 with sliding to capture"""
    return FlowProblem(FinitePoints([[0.0, 0.0], [2.0, 0.0]]), FinitePoints([[0.0, 0.0], [3.0, 1.0]]))


_instances = {
    "orthogonal-lines": (orthogonal_lines, [1.0, 0.0], [0.0, 0.0]),
    "theta-lines": (theta_lines, [1.0, 0.0], [0.0, 0.0]),
    "parallel-lines": (parallel_lines, [0.0, 0.5], None),
    "planes-r4": (planes_r4, [0.3, 0.2, 0.1, 0.05], [0.0, 0.0, 0.0, 0.0]),
    "lines-axis-r3": (lines_with_axis_r3, [0.3, 0.2, 0.5], [0.0, 0.0, 0.0]),
    "circle-line": (circle_line, [0.9, 0.6], [0.75 ** 0.5, 0.5]),
    "finite-1d": (finite_1d, [-2.0], [0.0]),
    "planar-switch": (planar_switch, [5.0, -4.0], [0.0, 0.0]),
    "planar-sliding": (planar_sliding, [2.0, -0.5], [0.0, 0.0]),
}


def instance_names():
    return sorted(_instances)


def get_instance(name, **kwargs):
    """Return the named problem and its default starting point.

    Args:
        name (str): One of :func:`instance_names`.
        **kwargs: Parameters of the problem factory.

    Returns:
        tuple: (FlowProblem, np.ndarray).

    """
    try:
        factory, x0, _ = _instances[name]
    except KeyError:
        raise ValueError("Unknown instance %r. Available: %s" % (name, ", ".join(instance_names())))
    return factory(**kwargs), np.array(x0, dtype=float)


def feasible_point(name):
    """A point of the intersection of the named problem's default parameters, or None if they do not meet"""
    if name not in _instances:
        raise ValueError("Unknown instance %r. Available: %s" % (name, ", ".join(instance_names())))
    point = _instances[name][2]
    return None if point is None else np.array(point, dtype=float)
