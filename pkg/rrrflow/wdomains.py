"""W-domain partitions of finite feasibility problems.

For finite sets A and B the RRR field is constant on each cell W(a, b) = {x : P_A x = a, P_B(2a - x) = b}, where it
equals b - a. Each cell is the intersection of the Voronoi cell of a with a reflected Voronoi cell of b, so it is a
convex polyhedron. This module locates points in cells, builds the interfaces between adjacent cells, computes
Filippov sliding velocities and follows descent chains of the pair distance d(a, b) = |b - a|^2.
"""
import json
import logging
import re
from collections import namedtuple

import numpy as np
from scipy.optimize import linprog

from .context import get_active_context
from .exceptions import DistinctnessError, NonConvergentInterfaceError, DimensionError
from .sets import FinitePoints, as_point

logger = logging.getLogger(__name__)

CellId = namedtuple("CellId", ["a_index", "b_index"])
CellId.__str__ = lambda self: "(%d,%d)" % (self.a_index, self.b_index)


def _as_finite(points):
    return points if isinstance(points, FinitePoints) else FinitePoints(points)


class Interface:
    """The common facet of two adjacent cells.

    Attributes:
        cells (tuple of CellId): The pair (i, j). The normal points from i to j.
        normal (np.ndarray): Unit normal of the separating hyperplane.
        offset (float): The hyperplane is {x : normal . x = offset}.
        kind (str): "A" if only the A-point changes, "B" if only the B-point changes, "mixed" otherwise.
        v1, v2 (np.ndarray): Velocities in cells i and j.
        convergent (bool): Whether both velocities point toward the facet.
        sliding (np.ndarray or None): Filippov sliding velocity when convergent.
        alpha (float or None): Weight of v1 in the sliding velocity.
        witness (np.ndarray or None): A point in the relative interior of the facet.
        length (float or None): Length of the facet inside the bounding box (planar problems only).

    """

    def __init__(self, cells, normal, offset, kind, v1, v2, witness=None, length=None):
        self.cells = tuple(cells)
        self.normal = normal
        self.offset = float(offset)
        self.kind = kind
        self.v1 = v1
        self.v2 = v2
        self.convergent = convergent_check(v1, v2, normal)
        if self.convergent:
            self.alpha = sliding_coefficient(v1, v2, normal)
            self.sliding = sliding_velocity(v1, v2, normal)
        else:
            self.alpha = None
            self.sliding = None
        self.witness = witness
        self.length = length

    @property
    def s0(self):
        """Tangential sliding speed, or None if the interface is not convergent"""
        if self.sliding is None:
            return None
        tangential = self.sliding - (self.sliding @ self.normal) * self.normal
        return float(np.linalg.norm(tangential))

    def signed_distance(self, x):
        return float(self.normal @ x - self.offset)

    def to_dict(self):
        def _list(v):
            return None if v is None else np.asarray(v).tolist()

        return {"cells": [list(c) for c in self.cells], "kind": self.kind, "normal": _list(self.normal),
                "offset": self.offset, "v1": _list(self.v1), "v2": _list(self.v2), "convergent": self.convergent,
                "sliding": _list(self.sliding), "alpha": self.alpha, "s0": self.s0, "witness": _list(self.witness),
                "length": self.length}

    def __repr__(self):
        return "Interface(%s -> %s, kind=%s, convergent=%s)" % (self.cells[0], self.cells[1], self.kind,
                                                               self.convergent)


class CellPartition:
    """The partition of R^m into W-domains of two finite sets"""

    def __init__(self, A, B):
        """

        Args:
            A (FinitePoints or array-like): First finite set.
            B (FinitePoints or array-like): Second finite set, same dimension.

        """
        self.A = _as_finite(A)
        self.B = _as_finite(B)
        if self.A.dim != self.B.dim:
            raise DimensionError("A and B live in different dimensions (%d, %d)" % (self.A.dim, self.B.dim))
        self.dim = self.A.dim
        self._adjacency = {}

    @staticmethod
    def from_problem(problem):
        """Partition of a FlowProblem whose sets are finite"""
        return CellPartition(problem.A, problem.B)

    @property
    def cells(self):
        """All index pairs, including empty cells"""
        return [CellId(i, j) for i in range(len(self.A)) for j in range(len(self.B))]

    def velocity(self, cell):
        return self.B[cell.b_index] - self.A[cell.a_index]

    def d(self, cell):
        """Pair distance |b - a|^2"""
        v = self.velocity(cell)
        return float(v @ v)

    def is_solution(self, cell):
        return not np.any(self.velocity(cell))

    @property
    def solution_cells(self):
        return [c for c in self.cells if self.is_solution(c)]

    def locate(self, x):
        """Return (CellId, tie flag) for a point"""
        x = as_point(x, self.dim)
        i, tie_a = self.A.nearest_index(x)
        j, tie_b = self.B.nearest_index(2 * self.A[i] - x)
        return CellId(i, j), tie_a or tie_b

    def cell_of(self, x):
        return self.locate(x)[0]

    def locate_many(self, X):
        """Vectorized cell location. Returns arrays of A and B indices"""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        a_idx = self.A.nearest_indices(X)
        b_idx = self.B.nearest_indices(2 * self.A.points[a_idx] - X)
        return a_idx, b_idx

    def halfspaces(self, cell):
        """Return (G, h, tags) with the cell equal to {x : G x <= h}.

        Tags are ("A", i') or ("B", j') naming the competing point of each row.
        """
        a = self.A[cell.a_index]
        b = self.B[cell.b_index]
        rows, rhs, tags = [], [], []
        for k, other in enumerate(self.A.points):
            if k == cell.a_index:
                continue
            rows.append(2 * (other - a))
            rhs.append(other @ other - a @ a)
            tags.append(("A", k))
        for k, other in enumerate(self.B.points):
            if k == cell.b_index:
                continue
            rows.append(-2 * (other - b))
            rhs.append(other @ other - b @ b - 4 * (other - b) @ a)
            tags.append(("B", k))
        G = np.asarray(rows, dtype=float).reshape(-1, self.dim)
        return G, np.asarray(rhs, dtype=float), tags

    def default_bounds(self, margin=10.0):
        """A box containing every point of A, B and their reflections, enlarged by a margin"""
        reflected = (2 * self.A.points[:, None, :] - self.B.points[None, :, :]).reshape(-1, self.dim)
        pts = np.vstack([self.A.points, self.B.points, reflected])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = margin * (max(float(np.max(hi - lo)), 0.0) + 1.0)
        return np.stack([lo - pad, hi + pad], axis=1)

    def _chebyshev(self, G, h, bounds, equality=None):
        """Maximize the slack t in G x + t |G_k| <= h inside the box. Returns (t, x) or (None, None)"""
        norms = np.linalg.norm(G, axis=1) if G.size else np.zeros(0)
        m = self.dim
        c = np.zeros(m + 1)
        c[-1] = -1.0
        A_ub = np.hstack([G, norms[:, None]]) if G.size else None
        b_ub = h if G.size else None
        A_eq = b_eq = None
        if equality is not None:
            A_eq = np.append(equality[0], 0.0)[None, :]
            b_eq = [equality[1]]
        var_bounds = [tuple(b) for b in bounds] + [(None, 1.0)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=var_bounds, method="highs")
        if res.status != 0:
            return None, None
        return float(res.x[-1]), res.x[:-1]

    def is_nonempty(self, cell, bounds=None, tol=1e-9):
        """Whether the cell has interior points inside the bounding box"""
        bounds = self.default_bounds() if bounds is None else np.asarray(bounds, dtype=float)
        G, h, _ = self.halfspaces(cell)
        t, _ = self._chebyshev(G, h, bounds)
        return t is not None and t > tol

    def nonempty_cells(self, bounds=None):
        return [c for c in self.cells if self.is_nonempty(c, bounds)]

    def _separating_plane(self, c1, c2):
        """Hyperplane (normal, offset, kind) between two cells, normal oriented from c1 to c2"""
        if c1.a_index != c2.a_index:
            a1, a2 = self.A[c1.a_index], self.A[c2.a_index]
            g = a2 - a1
            offset = (a2 @ a2 - a1 @ a1) / 2
            kind = "A" if c1.b_index == c2.b_index else "mixed"
        else:
            a = self.A[c1.a_index]
            b1, b2 = self.B[c1.b_index], self.B[c2.b_index]
            g = -(b2 - b1)
            offset = (b2 @ b2 - b1 @ b1) / 2 - 2 * (b2 - b1) @ a
            kind = "B"
        norm = np.linalg.norm(g)
        return g / norm, offset / norm, kind

    def interface_between(self, c1, c2, witness=None, length=None):
        """Build the Interface of two distinct cells (adjacency is not checked)"""
        if c1 == c2:
            raise ValueError("An interface needs two different cells")
        n, offset, kind = self._separating_plane(c1, c2)
        return Interface((c1, c2), n, offset, kind, self.velocity(c1), self.velocity(c2), witness, length)

    def adjacent(self, c1, c2, bounds=None, tol=1e-9):
        """Return the Interface of two cells if they share a facet of positive area, else None.

        The facet is found by a linear program maximizing the slack of every other constraint on the separating
        hyperplane. The witness is then confirmed by locating points on both sides of it.
        """
        key = (c1, c2)
        if key in self._adjacency:
            return self._adjacency[key]
        result = None
        if c1 != c2:
            bounds = self.default_bounds() if bounds is None else np.asarray(bounds, dtype=float)
            n, offset, kind = self._separating_plane(c1, c2)
            G1, h1, _ = self.halfspaces(c1)
            G2, h2, _ = self.halfspaces(c2)
            G = np.vstack([G1, G2])
            h = np.concatenate([h1, h2])
            # Rows that coincide with the separating plane hold with equality on the facet
            norms = np.linalg.norm(G, axis=1)
            along = G @ n
            parallel = np.abs(np.abs(along) - norms) <= 1e-12 * np.maximum(norms, 1.0)
            on_plane = np.abs(along * offset - h) <= 1e-9 * np.maximum(np.abs(h), 1.0)
            keep = ~(parallel & on_plane)
            t, witness = self._chebyshev(G[keep], h[keep], bounds, equality=(n, offset))
            if t is not None and t > tol:
                eta = min(t, 1.0) * 1e-3
                if self.cell_of(witness - eta * n) == c1 and self.cell_of(witness + eta * n) == c2:
                    length = self._facet_length(G[keep], h[keep], bounds, n, offset) if self.dim == 2 else None
                    result = Interface((c1, c2), n, offset, kind, self.velocity(c1), self.velocity(c2), witness,
                                       length)
                else:
                    logger.debug("Facet LP between %s and %s not confirmed by location; general position may fail",
                                 c1, c2)
        self._adjacency[key] = result
        return result

    def _facet_length(self, G, h, bounds, n, offset):
        tangent = np.array([-n[1], n[0]])
        ends = []
        for sign in (1.0, -1.0):
            res = linprog(sign * tangent, A_ub=G if G.size else None, b_ub=h if G.size else None,
                          A_eq=n[None, :], b_eq=[offset], bounds=[tuple(b) for b in bounds], method="highs")
            if res.status != 0:
                return None
            ends.append(float(tangent @ res.x))
        return abs(ends[0] - ends[1])

    def neighbors(self, cell, bounds=None):
        """Interfaces from a cell to every adjacent cell"""
        out = []
        for other in self.cells:
            if other == cell:
                continue
            interface = self.adjacent(cell, other, bounds)
            if interface is not None:
                out.append(interface)
        return out

    def _get_description(self):
        return {"type": "partition", "A": self.A.points.tolist(), "B": self.B.points.tolist()}

    @staticmethod
    def _from_description(description):
        return CellPartition(description["A"], description["B"])

    def save(self, path):
        """Save the partition point lists to a path"""
        with open(path, "w") as f:
            json.dump(self._get_description(), f)

    @staticmethod
    def load(path):
        """Load a partition from the given path"""
        with open(path) as f:
            s = json.load(f)
        return CellPartition._from_description(s)

    def __repr__(self):
        return "CellPartition(|A|=%d, |B|=%d, dim=%d)" % (len(self.A), len(self.B), self.dim)


def cell_of(part, x):
    """Cell of x: a = nearest point of A to x, b = nearest point of B to 2a - x (lowest index on ties)"""
    cell, tie = part.locate(x)
    if tie:
        logger.debug("Tie while locating %s; lowest index used", np.asarray(x).tolist())
    return cell


def convergent_check(v1, v2, n):
    """Whether two velocities point toward the interface from both sides: (n.v1)(n.v2) < 0 strictly"""
    n = as_point(n)
    return bool((n @ as_point(v1)) * (n @ as_point(v2)) < 0)


def sliding_coefficient(v1, v2, n):
    """Weight alpha of v1 in the sliding velocity alpha v1 + (1 - alpha) v2"""
    v1, v2, n = as_point(v1), as_point(v2), as_point(n)
    if not convergent_check(v1, v2, n):
        raise NonConvergentInterfaceError("Sliding needs (n.v1)(n.v2) < 0")
    return float((n @ v2) / (n @ (v2 - v1)))


def sliding_velocity(v1, v2, n):
    """Filippov sliding velocity ((n.v2) v1 - (n.v1) v2) / (n.(v2 - v1)) on a convergent interface"""
    v1, v2, n = as_point(v1), as_point(v2), as_point(n)
    if not convergent_check(v1, v2, n):
        raise NonConvergentInterfaceError("Sliding needs (n.v1)(n.v2) < 0")
    return ((n @ v2) * v1 - (n @ v1) * v2) / (n @ (v2 - v1))


def min_norm_velocity(v1, v2):
    """Minimum-norm element of the segment between two velocities"""
    v1, v2 = as_point(v1), as_point(v2)
    diff = v2 - v1
    den = diff @ diff
    if den == 0:
        return v1.copy()
    alpha = np.clip((v2 @ diff) / den, 0.0, 1.0)
    return alpha * v1 + (1 - alpha) * v2


SwitchAnalysis = namedtuple("SwitchAnalysis", ["alpha", "convergent", "toward", "d_from", "d_to"])


def _switch_analysis(p1, p2, q):
    p1, p2, q = as_point(p1), as_point(p2), as_point(q)
    step = p2 - p1
    length2 = float(step @ step)
    if length2 == 0:
        raise ValueError("Switching needs two different points")
    alpha = float(step @ (q - p1))
    convergent = 0 < alpha < length2
    if alpha > length2 / 2:
        toward = 2
    elif alpha < length2 / 2:
        toward = 1
    else:
        toward = None
    d1 = float((q - p1) @ (q - p1))
    d2 = float((q - p2) @ (q - p2))
    return SwitchAnalysis(alpha, convergent, toward, d1, d2)


def a_switch_analysis(a1, a2, b):
    """Analyze the switch a1 -> a2 with b fixed.

    alpha = <a2 - a1, b - a1>. The bisector interface is convergent iff 0 < alpha < |a2 - a1|^2, and the pair distance
    decreases toward a2 iff alpha > |a2 - a1|^2 / 2 (toward=2), toward a1 if alpha is below it (toward=1).

    Returns:
        SwitchAnalysis: alpha, convergent flag, preferred side (1, 2 or None on ties) and both pair distances.

    """
    return _switch_analysis(a1, a2, b)


def b_switch_analysis(b1, b2, a):
    """Analyze the switch b1 -> b2 with a fixed, the mirror image of a_switch_analysis"""
    return _switch_analysis(b1, b2, a)


class ChainStep:
    """One step of a descent chain"""

    def __init__(self, source, target, interface, options, analysis=None, verdict_agrees=None):
        self.source = source
        self.target = target
        self.interface = interface
        self.options = options
        self.analysis = analysis
        self.verdict_agrees = verdict_agrees

    @property
    def kind(self):
        return self.interface.kind

    def to_dict(self):
        return {"source": list(self.source), "target": list(self.target), "kind": self.kind,
                "options": [list(o) for o in self.options], "interface": self.interface.to_dict(),
                "alpha": None if self.analysis is None else self.analysis.alpha,
                "verdict_agrees": self.verdict_agrees}


class DescentChain:
    """Result of descent_chain"""

    def __init__(self, cells, d_values, steps, delta, bound, stuck=False, diagnostics=None):
        self.cells = cells
        self.d_values = d_values
        self.steps = steps
        self.delta = delta
        self.bound = bound
        self.stuck = stuck
        self.diagnostics = diagnostics or {}

    def __len__(self):
        return len(self.steps)

    @property
    def strictly_decreasing(self):
        return all(d2 < d1 for d1, d2 in zip(self.d_values, self.d_values[1:]))

    @property
    def within_bound(self):
        return len(self) <= self.bound

    @property
    def interfaces(self):
        return [s.interface for s in self.steps]

    def to_dict(self):
        return {"cells": [list(c) for c in self.cells], "d": self.d_values, "length": len(self),
                "delta": self.delta, "bound": self.bound, "stuck": self.stuck,
                "steps": [s.to_dict() for s in self.steps], "diagnostics": self.diagnostics}


def pair_distance_gap(part):
    """Smallest difference between two pair distances d(a, b), over every pair in A x B"""
    d = np.sort([part.d(c) for c in part.cells])
    if len(d) < 2:
        return np.inf
    return float(np.min(np.diff(d)))


def descent_chain(part, start, bounds=None):
    """Follow adjacent cells of strictly smaller pair distance down to a solution cell.

    At each cell all adjacent cells with smaller d are listed as options and the steepest drop is taken. A-switch and
    B-switch steps carry the switch analysis and whether its convergence verdict agrees with the interface geometry.

    Args:
        part (CellPartition): The partition.
        start (CellId): Starting cell.
        bounds (array-like): Bounding box for the facet programs (default: CellPartition.default_bounds()).

    Returns:
        DescentChain: The chain, with the bound floor((d_start - d*) / Delta) on its length. Steps follow the largest
        drop in d rather than alternating A-switches and B-switches, so consecutive steps may be of the same kind;
        each step records which kind of switch it is.

    """
    start = CellId(*start)
    if not part.solution_cells:
        raise ValueError("A and B do not intersect")
    delta = pair_distance_gap(part)
    if delta <= 1e-12:
        raise DistinctnessError("Pair distances are not pairwise distinct (min gap %g)" % delta)
    d_star = 0.0
    bound = int(np.floor((part.d(start) - d_star) / delta))
    cells = [start]
    d_values = [part.d(start)]
    steps = []
    current = start
    while not part.is_solution(current):
        options = [i for i in part.neighbors(current, bounds) if part.d(i.cells[1]) < part.d(current)]
        if not options:
            logger.warning("Descent chain stuck at %s (d=%g)", current, part.d(current))
            return DescentChain(cells, d_values, steps, delta, bound, stuck=True,
                                diagnostics={"stuck_at": list(current),
                                             "neighbors": [list(i.cells[1]) for i in part.neighbors(current, bounds)]})
        chosen = min(options, key=lambda i: part.d(i.cells[1]))
        target = chosen.cells[1]
        analysis = None
        agrees = None
        if chosen.kind == "A":
            b = part.B[current.b_index]
            analysis = a_switch_analysis(part.A[current.a_index], part.A[target.a_index], b)
            agrees = analysis.convergent == chosen.convergent
        elif chosen.kind == "B":
            a = part.A[current.a_index]
            analysis = b_switch_analysis(part.B[current.b_index], part.B[target.b_index], a)
            agrees = analysis.convergent == chosen.convergent
        if agrees is False:
            logger.warning("Switch analysis disagrees with interface geometry between %s and %s", current, target)
        steps.append(ChainStep(current, target, chosen, [i.cells[1] for i in options], analysis, agrees))
        cells.append(target)
        d_values.append(part.d(target))
        current = target
    return DescentChain(cells, d_values, steps, delta, bound)


class CaptureBound:
    """Capture-time bound sum(l_j) / s0 and, optionally, the measured sliding time"""

    def __init__(self, bound, s0, lengths, capture_time=None, sliding_time=None):
        self.bound = bound
        self.s0 = s0
        self.lengths = lengths
        self.capture_time = capture_time
        self.sliding_time = sliding_time

    @property
    def defined(self):
        return self.bound is not None

    @property
    def holds(self):
        """Whether the measured sliding time respects the bound. None when nothing can be compared"""
        if self.bound is None or self.sliding_time is None:
            return None
        return self.sliding_time <= self.bound + 1e-8

    def to_dict(self):
        return {"bound": self.bound, "s0": self.s0, "lengths": self.lengths, "capture_time": self.capture_time,
                "sliding_time": self.sliding_time, "holds": self.holds}

    def __repr__(self):
        return "CaptureBound(bound=%s, s0=%s, sliding_time=%s)" % (self.bound, self.s0, self.sliding_time)


def capture_time_bound(interfaces, s0=None, lengths=None, problem=None, x0=None, T=None):
    """Bound the time spent sliding before capture by sum(l_j) / s0.

    Args:
        interfaces (list of Interface): Convergent interfaces traversed. May be empty.
        s0 (float): Uniform lower bound of the tangential sliding speeds. Defaults to the minimum measured one.
        lengths (list of float): Facet lengths. Default to the lengths stored in the interfaces.
        problem (FlowProblem): If given together with x0, the Filippov trajectory is integrated and its time between the
            first sliding entry and capture is measured.
        x0 (array-like): Start point of the measured trajectory.
        T (float): Integration horizon (default: active censoring horizon).

    Returns:
        CaptureBound: The bound (None if s0 = 0 on some interface) and the measurements. capture_time is the time of
        the capture event; sliding_time runs from the first sliding entry to capture and is the quantity compared with
        the bound. Both are None without a measured trajectory or when no capture happens before T.

    """
    interfaces = list(interfaces)
    if lengths is None:
        lengths = [i.length for i in interfaces]
    lengths = [None if l is None else float(l) for l in lengths]
    if s0 is None:
        speeds = [i.s0 for i in interfaces]
        s0 = min([0.0 if s is None else s for s in speeds], default=None)
    if interfaces and not s0:
        logger.warning("Zero sliding speed on the chain; capture bound undefined")
        bound = None
    elif None in lengths:
        logger.warning("Facet length unknown; capture bound undefined")
        bound = None
    elif not interfaces:
        bound = 0.0
    else:
        bound = sum(lengths) / s0
    capture_time = sliding_time = None
    if problem is not None and x0 is not None:
        from .flow import integrate_flow
        T = get_active_context().horizon if T is None else T
        traj = integrate_flow(problem, x0, T, mode="piecewise")
        captures = [e for e in traj.events if e.kind == "capture"]
        if captures:
            capture_time = captures[0].time
            entries = [e.time for e in traj.events if e.kind == "sliding-entry" and e.time <= capture_time]
            sliding_time = capture_time - entries[0] if entries else 0.0
    return CaptureBound(bound, s0, lengths, capture_time, sliding_time)


_SLIDING_LABEL = re.compile(r"sliding:\((\d+),(\d+)\)\|\((\d+),(\d+)\)")


def sliding_interfaces(part, traj, bounds=None):
    """Interfaces a piecewise trajectory slides along, in the order they are entered.

    Facet lengths are attached for planar problems when the two cells are confirmed adjacent.
    """
    out = []
    for event in traj.events_of("sliding-entry"):
        match = _SLIDING_LABEL.match(event.detail)
        if match is None:
            continue
        i, j, k, l = (int(g) for g in match.groups())
        c1, c2 = CellId(i, j), CellId(k, l)
        out.append(part.adjacent(c1, c2, bounds) or part.interface_between(c1, c2))
    return out


def random_instance(size_a, size_b, dim, rng, shared=1, scale=1.0):
    """Random finite sets sharing `shared` points, so that A and B intersect"""
    A = rng.uniform(-scale, scale, size=(size_a, dim))
    B = rng.uniform(-scale, scale, size=(size_b, dim))
    for k in range(min(shared, size_a, size_b)):
        B[k] = A[k]
    return CellPartition(A, B)
