"""The RRR field, its Euler iteration (RRR itself) and the flow it discretizes"""
import json
import logging
import math
from collections import namedtuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.stats import linregress

from .context import get_active_context
from .exceptions import DimensionError, EventBudgetExceeded, UnsupportedSetError
from .sets import SetOracle, FinitePoints, as_point
from .wdomains import CellPartition, min_norm_velocity

logger = logging.getLogger(__name__)

Event = namedtuple("Event", ["time", "kind", "detail"])


class FlowProblem:
    """A two-set feasibility problem: find x in A and B"""

    def __init__(self, A, B):
        """

        Args:
            A (SetOracle): First set, projected first.
            B (SetOracle): Second set.

        """
        if A.dim != B.dim:
            raise DimensionError("Sets of different dimension (%d, %d)" % (A.dim, B.dim))
        self.A = A
        self.B = B
        self.dim = A.dim
        self._partition = None

    @property
    def is_finite(self):
        """Whether both sets are finite, so that the field is piecewise constant"""
        return isinstance(self.A, FinitePoints) and isinstance(self.B, FinitePoints)

    @property
    def partition(self):
        if not self.is_finite:
            raise UnsupportedSetError("W-domain partitions need two finite sets")
        if self._partition is None:
            self._partition = CellPartition(self.A, self.B)
        return self._partition

    def field(self, x):
        """v(x) = P_B(2 P_A x - x) - P_A x"""
        pa = self.A.project(x)
        return self.B.project(2 * pa - x) - pa

    def _get_description(self):
        return {"A": self.A._get_description(), "B": self.B._get_description()}

    @staticmethod
    def _from_description(description):
        return FlowProblem(SetOracle._from_description(description["A"]),
                           SetOracle._from_description(description["B"]))

    def save(self, path):
        """Save the problem definition to a path"""
        with open(path, "w") as f:
            json.dump(self._get_description(), f)

    @staticmethod
    def load(path):
        """Load a problem from the given path"""
        with open(path) as f:
            s = json.load(f)
        return FlowProblem._from_description(s)

    def __repr__(self):
        return "FlowProblem(A=%r, B=%r)" % (self.A, self.B)


def flow_field(p, x):
    """The RRR field v(x) = P_B(R_A x) - P_A x"""
    return p.field(as_point(x, p.dim))


def gap(p, x):
    """The gap g(x) = |v(x)|, zero exactly at fixed points of RRR"""
    return float(np.linalg.norm(flow_field(p, x)))


def rrr_step(p, x, eps):
    """One RRR iteration x + eps v(x)"""
    if not 0 < eps <= 1:
        raise ValueError("The step must lie in (0, 1], got %g" % eps)
    x = as_point(x, p.dim)
    return x + eps * p.field(x)


class Trajectory:
    """A time-stamped piecewise-linear path.

    Every sample carries the label and gap of the segment that starts at it; the last sample repeats the last segment.
    Labels are "smooth", "iterate", "interior:(i,j)", "sliding:(i,j)|(k,l)", "equilibrium:solution" or
    "equilibrium:non-solution".
    """

    def __init__(self, times, points, labels, gaps, events=()):
        self.times = np.asarray(times, dtype=float)
        self.points = np.asarray(points, dtype=float).reshape(len(self.times), -1)
        self.labels = list(labels)
        self.gaps = np.asarray(gaps, dtype=float)
        self.events = list(events)
        if not (len(self.labels) == len(self.gaps) == len(self.times)):
            raise ValueError("Trajectory fields of different length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def end(self):
        return self.points[-1]

    def at(self, t):
        """Position at time t by linear interpolation, clamped to the time span"""
        t = min(max(t, self.times[0]), self.times[-1])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i >= len(self.times) - 1:
            return self.points[-1].copy()
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1 - w) * self.points[i] + w * self.points[i + 1]

    def events_of(self, kind):
        return [e for e in self.events if e.kind == kind]

    def to_frame(self):
        """DataFrame with columns t, x1..xm, label, gap"""
        df = pd.DataFrame(self.points, columns=["x%d" % (i + 1) for i in range(self.dim)])
        df.insert(0, "t", self.times)
        df["label"] = self.labels
        df["gap"] = self.gaps
        return df

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def to_dict(self):
        return {"t_end": self.t_end, "end": self.end.tolist(), "samples": len(self),
                "events": [{"time": e.time, "kind": e.kind, "detail": e.detail} for e in self.events]}

    def __repr__(self):
        return "Trajectory(%d samples, t_end=%g, %d events)" % (len(self), self.t_end, len(self.events))


class HittingRecord:
    """Hitting indices of the iteration for several steps, plus the continuous hitting time.

    Only the indices are stored; discrete hitting times are always recomputed as eps * k.
    """

    def __init__(self, delta, T_star=None):
        self.delta = float(delta)
        self.T_star = T_star
        self.k = {}
        self.censored = {}

    def add(self, eps, k, censored=False):
        self.k[eps] = int(k)
        self.censored[eps] = bool(censored)

    def update(self, other):
        for eps in other.k:
            self.add(eps, other.k[eps], other.censored[eps])

    @property
    def t_star(self):
        return {eps: (eps * k if not self.censored[eps] else math.inf) for eps, k in self.k.items()}

    def to_frame(self):
        rows = []
        for eps in sorted(self.k, reverse=True):
            t = eps * self.k[eps] if not self.censored[eps] else math.inf
            error = abs(t - self.T_star) if self.T_star is not None else math.nan
            rows.append({"eps": eps, "k": self.k[eps], "t_star": t, "T_star": self.T_star, "error": error,
                         "censored": self.censored[eps]})
        return pd.DataFrame(rows, columns=["eps", "k", "t_star", "T_star", "error", "censored"])

    def to_dict(self):
        return {"delta": self.delta, "T_star": self.T_star,
                "runs": [{"eps": eps, "k": k, "t_star": self.t_star[eps], "censored": self.censored[eps]}
                         for eps, k in self.k.items()]}


class DecayFit:
    """Exponential fit g(t) ~ C e^{-mu t} g(0) of a gap trace"""

    def __init__(self, mu_hat, C_hat, window, r2):
        self.mu_hat = mu_hat
        self.C_hat = C_hat
        self.window = window
        self.r2 = r2

    def to_dict(self):
        return {"mu_hat": self.mu_hat, "C_hat": self.C_hat, "window": list(self.window), "r2": self.r2}

    def __repr__(self):
        return "DecayFit(mu_hat=%.6g, C_hat=%.6g, r2=%.6g)" % (self.mu_hat, self.C_hat, self.r2)


def _labeler(p):
    if not p.is_finite:
        return lambda x: "iterate"
    part = p.partition

    def label(x):
        cell = part.cell_of(x)
        return "equilibrium:solution" if part.is_solution(cell) else "interior:%s" % (cell,)

    return label


def run_rrr(p, x0, eps, k_max, delta):
    """Iterate RRR until the gap drops to delta or k_max steps are done.

    Args:
        p (FlowProblem): The problem.
        x0 (array-like): Start point.
        eps (float): Step in (0, 1].
        k_max (int): Iteration budget.
        delta (float): Gap threshold.

    Returns:
        tuple: (Trajectory of the iterates at times eps * k, HittingRecord with one entry).

    """
    if not 0 < eps <= 1:
        raise ValueError("The step must lie in (0, 1], got %g" % eps)
    if delta <= 0:
        raise ValueError("The gap threshold must be positive")
    if k_max < 1:
        raise ValueError("The iteration budget must be at least 1")
    label = _labeler(p)
    x = as_point(x0, p.dim)
    points, gaps, labels = [], [], []
    k = 0
    censored = True
    while True:
        v = p.field(x)
        g = float(np.linalg.norm(v))
        points.append(x)
        gaps.append(g)
        labels.append(label(x))
        if g <= delta:
            censored = False
            break
        if k >= k_max:
            break
        x = x + eps * v
        k += 1
    if censored:
        logger.warning("RRR with eps=%g censored after %d iterations (gap %g > %g)", eps, k_max, gaps[-1], delta)
    traj = Trajectory(eps * np.arange(len(points)), points, labels, gaps)
    record = HittingRecord(delta)
    record.add(eps, k, censored)
    return traj, record


def _rk4_step(p, x, h, k1=None):
    k1 = p.field(x) if k1 is None else k1
    k2 = p.field(x + h / 2 * k1)
    k3 = p.field(x + h / 2 * k2)
    k4 = p.field(x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_smooth(p, x0, T, step):
    n = max(1, int(math.ceil(T / step - 1e-9)))
    h = T / n
    x = x0
    v = p.field(x)
    points, gaps = [x], [float(np.linalg.norm(v))]
    for _ in range(n):
        x = _rk4_step(p, x, h, v)
        v = p.field(x)
        points.append(x)
        gaps.append(float(np.linalg.norm(v)))
    return Trajectory(h * np.arange(n + 1), points, ["smooth"] * (n + 1), gaps)


class _TrajectoryBuilder:
    def __init__(self):
        self.starts = []
        self.events = []

    def segment(self, t, x, label, g):
        if self.starts and self.starts[-1][0] >= t:
            self.starts[-1] = (t, x, label, g)
        else:
            self.starts.append((t, x, label, g))

    def event(self, t, kind, detail=""):
        logger.debug("%s at t=%.12g %s", kind, t, detail)
        self.events.append(Event(float(t), kind, detail))

    def build(self, t_end, x_end):
        times = [s[0] for s in self.starts]
        points = [s[1] for s in self.starts]
        labels = [s[2] for s in self.starts]
        gaps = [s[3] for s in self.starts]
        if t_end > times[-1]:
            times.append(t_end)
            points.append(x_end)
            labels.append(labels[-1])
            gaps.append(gaps[-1])
        return Trajectory(times, points, labels, gaps, self.events)


def _bisect_boundary(inside, hi, tol):
    """Largest known inside time and smallest known outside time of a convex membership along a ray"""
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def _cells_near(part, x, radius):
    m = part.dim
    directions = list(np.eye(m))
    if m <= 3:
        for i in range(m):
            for j in range(i + 1, m):
                directions.append((np.eye(m)[i] + np.eye(m)[j]) / math.sqrt(2))
                directions.append((np.eye(m)[i] - np.eye(m)[j]) / math.sqrt(2))
    cells = set()
    for d in directions:
        cells.add(part.cell_of(x + radius * d))
        cells.add(part.cell_of(x - radius * d))
    return cells


def _integrate_piecewise(p, x0, T):
    ctx = get_active_context()
    part = p.partition
    builder = _TrajectoryBuilder()
    t = 0.0
    x = x0
    cell = part.cell_of(x)
    events = 0
    while t < T:
        v = part.velocity(cell)
        if part.is_solution(cell):
            builder.segment(t, x, "equilibrium:solution", 0.0)
            break
        builder.segment(t, x, "interior:%s" % (cell,), float(np.linalg.norm(v)))
        rest = T - t
        if part.cell_of(x + rest * v) == cell:
            # Cells are convex, so the whole segment stays inside
            x, t = x + rest * v, T
            break
        _, tau = _bisect_boundary(lambda s: part.cell_of(x + s * v) == cell, rest, ctx.event_tol)
        t_new, x_new = t + tau, x + tau * v
        new_cell = part.cell_of(x_new)
        events += 1
        if events > ctx.event_budget:
            raise EventBudgetExceeded("More than %d events before t=%g" % (ctx.event_budget, t_new),
                                      builder.build(t_new, x_new))
        radius = ctx.junction_radius * max(1.0, float(np.linalg.norm(x_new)))
        if part.is_solution(new_cell):
            builder.event(t_new, "interface-cross", "%s->%s" % (cell, new_cell))
            builder.event(t_new, "capture", str(new_cell))
            t, x, cell = t_new, x_new, new_cell
            continue
        if len(_cells_near(part, x_new, radius)) >= 3:
            builder.event(t_new, "junction", "near %s" % np.round(x_new, 12).tolist())
            return builder.build(t_new, x_new)
        interface = part.interface_between(cell, new_cell)
        if not interface.convergent:
            builder.event(t_new, "interface-cross", "%s->%s" % (cell, new_cell))
            t, x, cell = t_new, x_new, new_cell
            continue

        # Attracting interface: slide along it with the Filippov velocity
        n = interface.normal
        q = x_new - (n @ x_new - interface.offset) * n
        label = "sliding:%s|%s" % (cell, new_cell)
        builder.event(t_new, "sliding-entry", label)
        g_slide = float(np.linalg.norm(min_norm_velocity(interface.v1, interface.v2)))
        vs = interface.sliding
        speed = float(np.linalg.norm(vs))
        if speed <= 1e-14 * max(np.linalg.norm(interface.v1), np.linalg.norm(interface.v2)):
            builder.segment(t_new, q, "equilibrium:non-solution", g_slide)
            t, x = t_new, q
            logger.info("Filippov equilibrium at a non-solution interface %s", label)
            break
        builder.segment(t_new, q, label, g_slide)
        c1, c2 = cell, new_cell

        def on_facet(s):
            point = q + s * vs
            return part.cell_of(point - radius * n) == c1 and part.cell_of(point + radius * n) == c2

        rest = T - t_new
        if on_facet(rest):
            x, t = q + rest * vs, T
            break
        _, tau = _bisect_boundary(on_facet, rest, ctx.event_tol)
        t_exit, q_exit = t_new + tau, q + tau * vs
        builder.event(t_exit, "sliding-exit", label)
        events += 1
        following = part.cell_of(q_exit + radius * vs / speed)
        if part.is_solution(following):
            builder.event(t_exit, "capture", str(following))
            t, x, cell = t_exit, q_exit, following
            continue
        builder.event(t_exit, "junction", "end of %s" % label)
        return builder.build(t_exit, q_exit)
    return builder.build(T, x)


def integrate_flow(p, x0, T, mode=None, step=None):
    """Integrate the flow dx/dt = v(x) over [0, T].

    Args:
        p (FlowProblem): The problem.
        x0 (array-like): Start point.
        T (float): Final time.
        mode (str): "smooth" for a fixed-step fourth-order Runge-Kutta reference solution, "piecewise" for event-driven
            exact integration of finite problems with Filippov sliding. Defaults to "piecewise" for finite problems.
        step (float): Step of the smooth mode (default: active fine step).

    Returns:
        Trajectory: The solution. Piecewise trajectories stop early at junctions.

    """
    if not T > 0:
        raise ValueError("The final time must be positive")
    x0 = as_point(x0, p.dim)
    if mode is None:
        mode = "piecewise" if p.is_finite else "smooth"
    if mode == "smooth":
        return _integrate_smooth(p, x0, T, get_active_context().fine_step if step is None else step)
    elif mode == "piecewise":
        return _integrate_piecewise(p, x0, T)
    else:
        raise ValueError("Unknown integration mode: %s" % mode)


def hitting_time_continuous(p, x0, delta, mode=None, horizon=None):
    """First time the flow's gap falls to delta.

    On sliding segments the gap is the minimum norm of the local Filippov set.

    Returns:
        float: The hitting time, or inf if it is censored by the horizon (default: active horizon).

    """
    if delta <= 0:
        raise ValueError("The gap threshold must be positive")
    ctx = get_active_context()
    horizon = ctx.horizon if horizon is None else horizon
    x = as_point(x0, p.dim)
    if gap(p, x) <= delta:
        return 0.0
    if mode is None:
        mode = "piecewise" if p.is_finite else "smooth"
    if mode == "piecewise":
        traj = integrate_flow(p, x, horizon, "piecewise")
        hits = np.flatnonzero(traj.gaps <= delta)
        if len(hits):
            return float(traj.times[hits[0]])
    elif mode == "smooth":
        h = ctx.fine_step
        t = 0.0
        v = p.field(x)
        while t < horizon:
            x_next = _rk4_step(p, x, h, v)
            v_next = p.field(x_next)
            if np.linalg.norm(v_next) <= delta:
                def excess(s):
                    return np.linalg.norm(p.field(_rk4_step(p, x, s))) - delta

                return t + brentq(excess, 0.0, h, xtol=1e-14)
            x, v, t = x_next, v_next, t + h
    else:
        raise ValueError("Unknown integration mode: %s" % mode)
    logger.warning("Continuous hitting time censored at horizon %g (delta=%g)", horizon, delta)
    return math.inf


def _euler_path(p, x0, eps, n):
    points = [x0]
    x = x0
    for _ in range(n):
        x = x + eps * p.field(x)
        points.append(x)
    return np.asarray(points)


def _halving_ratios(eps, values):
    ratios = []
    for e, val in zip(eps, values):
        half = [w for f, w in zip(eps, values) if math.isclose(f, e / 2, rel_tol=1e-9)]
        ratios.append(val / half[0] if half and half[0] > 0 else math.nan)
    return ratios


def euler_error_study(p, x0, T, eps_list, mode=None):
    """Sup-norm distance between the RRR iterates and a reference flow on [0, T].

    The reference uses a fine step min(fine_step, min(eps) / 10). The error of each step is the maximum over the
    iteration times eps * k <= T. ratio is e(eps) / e(eps / 2) when eps / 2 is also in the list, order is its log2.

    On smooth problems the ratio approaches 2. On finite problems the sup-norm error is set by where the last step
    before a crossing happens to land, so the ratios are irregular. The quadratic normal offset at a convergent
    interface is measured by :func:`crossing_excursion_study` instead.

    Returns:
        pd.DataFrame: Columns eps, error, ratio, order.

    """
    x0 = as_point(x0, p.dim)
    eps_list = sorted(eps_list, reverse=True)
    step = min(get_active_context().fine_step, min(eps_list) / 10)
    reference = integrate_flow(p, x0, T, mode, step=step)
    errors = []
    for eps in eps_list:
        n = int(math.floor(T / eps + 1e-9))
        path = _euler_path(p, x0, eps, n)
        errors.append(max(float(np.linalg.norm(path[k] - reference.at(k * eps))) for k in range(n + 1)))
    ratios = _halving_ratios(eps_list, errors)
    df = pd.DataFrame({"eps": eps_list, "error": errors, "ratio": ratios})
    df["order"] = np.log2(df["ratio"])
    logger.info("Euler error study:\n%s", df.to_string(index=False))
    return df


def _positive_area(s_a, s_b, dt):
    """Integral of max(s, 0) for s linear from s_a to s_b over a step dt"""
    if s_a >= 0 and s_b >= 0:
        return dt * (s_a + s_b) / 2
    if s_a <= 0 and s_b <= 0:
        return 0.0
    pos = max(s_a, s_b)
    return dt * pos * pos / (2 * abs(s_b - s_a))


def crossing_excursion_study(p, x0, eps_list, n_starts=1000, spread=0.1, seed=0, k_max=100000):
    """Excursion of the iterates beyond the first interface they cross.

    Starts are drawn uniformly in a cube of half-side `spread` around x0. For each start and step, the excursion is
    the time integral of the positive normal distance beyond the interface of the piecewise-linear interpolant over
    the two steps following the first cell change. The pointwise overshoot is O(eps), while this excursion is O(eps^2)
    on attracting interfaces.

    Returns:
        pd.DataFrame: Columns eps, excursion, overshoot, ratio, order (ratio and order refer to the excursion).

    """
    part = p.partition
    rng = np.random.default_rng(seed)
    x0 = as_point(x0, p.dim)
    starts = x0 + rng.uniform(-spread, spread, size=(n_starts, p.dim))
    eps_list = sorted(eps_list, reverse=True)
    excursions, overshoots = [], []
    for eps in eps_list:
        total = 0.0
        total_overshoot = 0.0
        count = 0
        for start in starts:
            cell = part.cell_of(start)
            x = start
            for _ in range(k_max):
                x_next = x + eps * part.velocity(part.cell_of(x))
                new_cell = part.cell_of(x_next)
                if new_cell != cell:
                    break
                x = x_next
            else:
                continue
            interface = part.interface_between(cell, new_cell)
            x_after = x_next + eps * part.velocity(new_cell)
            s = [interface.signed_distance(y) for y in (x, x_next, x_after)]
            total += _positive_area(s[0], s[1], eps) + _positive_area(s[1], s[2], eps)
            total_overshoot += max(s[1], 0.0)
            count += 1
        if count < n_starts:
            logger.warning("%d starts never left their cell with eps=%g", n_starts - count, eps)
        excursions.append(total / count if count else math.nan)
        overshoots.append(total_overshoot / count if count else math.nan)
    df = pd.DataFrame({"eps": eps_list, "excursion": excursions, "overshoot": overshoots,
                       "ratio": _halving_ratios(eps_list, excursions)})
    df["order"] = np.log2(df["ratio"])
    logger.info("Crossing excursion study:\n%s", df.to_string(index=False))
    return df


class HittingStudy(namedtuple("HittingStudy", ["record", "slope", "bounded", "k_ratio", "growth_ok"])):
    """Outcome of :func:`hitting_convergence_study`.

    Attributes:
        record (HittingRecord): Indices per step and the continuous hitting time.
        slope (float): Log-log regression slope of |t*(eps) - T*| against eps (nan with fewer than two positive errors).
        bounded (bool): Every run hit and |eps k - T*| <= C eps for every step, so eps k stays bounded.
        k_ratio (float): k at the smallest step over k at the largest one (nan when the largest step hits at k = 0).
        growth_ok (bool): k_ratio is within 12.5% of the step ratio, i.e. k grows like 1/eps.

    """

    @property
    def passed(self):
        return self.bounded and self.growth_ok


def hitting_convergence_study(p, x0, delta, eps_list, k_max=None, mode=None, error_constant=3.0):
    """Compare discrete hitting times eps * k with the continuous one across steps.

    Args:
        p (FlowProblem): The problem.
        x0 (array-like): Start point.
        delta (float): Gap threshold.
        eps_list (list of float): Steps. At least two are needed for the growth verdict.
        k_max (int): Iteration budget per step (default: horizon / eps).
        mode (str): Integration mode of the continuous reference.
        error_constant (float): The C in |eps k - T*| <= C eps.

    Returns:
        HittingStudy: The record and the boundedness and growth verdicts.

    """
    T_star = hitting_time_continuous(p, x0, delta, mode)
    record = HittingRecord(delta, T_star)
    horizon = get_active_context().horizon
    for eps in eps_list:
        budget = k_max if k_max is not None else int(math.ceil(horizon / eps))
        _, entry = run_rrr(p, x0, eps, budget, delta)
        record.update(entry)
    df = record.to_frame()
    usable = df[np.isfinite(df["error"]) & (df["error"] > 0)]
    slope = math.nan
    if len(usable) >= 2:
        slope = float(linregress(np.log(usable["eps"]), np.log(usable["error"])).slope)
    bounded = bool((~df["censored"]).all() and (df["error"] <= error_constant * df["eps"]).all())
    largest, smallest = max(record.k), min(record.k)
    k_ratio = math.nan
    growth_ok = False
    if bounded and record.k[largest] > 0:
        k_ratio = record.k[smallest] / record.k[largest]
        growth_ok = abs(k_ratio / (largest / smallest) - 1) <= 0.125
    elif bounded:
        # Immediate hits need no growth
        growth_ok = all(k == 0 for k in record.k.values())
    level = logging.INFO if bounded and growth_ok else logging.WARNING
    logger.log(level, "Hitting convergence (delta=%g, T*=%g): slope %g, bounded %s, k ratio %g", delta, T_star, slope,
               bounded, k_ratio)
    return HittingStudy(record, slope, bounded, k_ratio, growth_ok)


def _r_squared(x, y, slope, intercept):
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0:
        return 1.0
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    return min(1.0, max(0.0, 1 - ss_res / ss_tot))


def fit_decay_rate(traj, window=None):
    """Least-squares fit of log g(t) against t.

    Args:
        traj (Trajectory): A trajectory with positive gaps on the window.
        window (tuple of float): Time window (default: the whole trajectory). Gaps at the round-off floor are skipped.

    Returns:
        DecayFit: mu_hat = -slope, C_hat = max(1, max g(t) e^{mu t} / g(0)) and R^2.

    """
    t0, t1 = (traj.times[0], traj.times[-1]) if window is None else window
    g = traj.gaps
    floor = max(1e-14 * float(np.max(g)), 1e-300)
    mask = (traj.times >= t0) & (traj.times <= t1) & (g > floor)
    if mask.sum() < 2:
        raise ValueError("At least two samples with positive gap are needed in the window")
    t = traj.times[mask]
    y = np.log(g[mask])
    fit = linregress(t, y)
    mu = -float(fit.slope)
    r2 = _r_squared(t, y, fit.slope, fit.intercept)
    g0 = g[0] if g[0] > 0 else g[mask][0]
    C = max(1.0, float(np.max(g[mask] * np.exp(mu * (t - traj.times[0])) / g0)))
    return DecayFit(mu, C, (float(t0), float(t1)), r2)


def hitting_time_bound(fit, g0, delta):
    """Upper bound log(C g0 / delta) / mu of the hitting time implied by an exponential decay"""
    if g0 <= delta:
        return 0.0
    if fit.mu_hat <= 0:
        return math.inf
    return max(0.0, math.log(fit.C_hat * g0 / delta) / fit.mu_hat)


LogLawFit = namedtuple("LogLawFit", ["slope", "intercept", "r2", "table"])


def log_law_fit(p, x0, deltas, mode=None):
    """Regress the continuous hitting time on log(1/delta) over a grid of thresholds.

    Returns:
        LogLawFit: slope, intercept, R^2 and a DataFrame with columns delta, log_inv_delta, T_star.

    """
    rows = [{"delta": d, "log_inv_delta": math.log(1 / d), "T_star": hitting_time_continuous(p, x0, d, mode)}
            for d in deltas]
    table = pd.DataFrame(rows, columns=["delta", "log_inv_delta", "T_star"])
    finite = table[np.isfinite(table["T_star"])]
    if len(finite) < 2:
        raise ValueError("At least two uncensored hitting times are needed")
    fit = linregress(finite["log_inv_delta"], finite["T_star"])
    r2 = _r_squared(finite["log_inv_delta"].to_numpy(), finite["T_star"].to_numpy(), fit.slope, fit.intercept)
    return LogLawFit(float(fit.slope), float(fit.intercept), r2, table)
