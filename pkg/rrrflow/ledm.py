"""The one-layer LEDM factorization benchmark: instance, local-copy lift, two-phase RRR runs and their estimators"""
import json
import logging
import math
from collections import namedtuple

import numpy as np
import pandas as pd
from scipy.stats import linregress, norm

from .context import get_active_context
from .exceptions import DimensionError, VerificationError
from .flow import FlowProblem
from .sets import BilinearBlock, ConsensusDiagonal, ProductSet, as_point

logger = logging.getLogger(__name__)


class LedmInstance:
    """A nonnegative factorization problem Y = W Z^T with W, Z >= 0 of inner dimension r_plus.

    The default matrix is the squared linear distance matrix Y_ij = ((i - j)/(m - 1))^2 with batch size n = m.
    """

    def __init__(self, m, Y=None, r_plus=None, omega=0.75, k_max=20000, delta_enter=1e-2, delta_solve=3e-2):
        """

        Args:
            m (int): Matrix size.
            Y (array-like): Target matrix. If None, the linear distance matrix is used.
            r_plus (int): Inner dimension. Defaults to m - 1.
            omega (float): Normalization constant. Stored only.
            k_max (int): Iteration budget per run.
            delta_enter (float): Entry threshold on the residual.
            delta_solve (float): Solve threshold on the residual.

        """
        self.m = int(m)
        if self.m < 2:
            raise ValueError("LEDM instances need m >= 2, got %d" % self.m)
        if Y is None:
            i = np.arange(self.m)
            Y = ((i[:, None] - i[None, :]) / (self.m - 1)) ** 2
        self.Y = np.array(Y, dtype=float)
        if self.Y.shape != (self.m, self.m):
            raise DimensionError("Target matrix must be %dx%d, got %s" % (self.m, self.m, self.Y.shape))
        if not np.allclose(self.Y, self.Y.T, rtol=0, atol=1e-12):
            raise ValueError("Target matrix must be symmetric")
        if np.any(np.diag(self.Y) != 0):
            raise ValueError("Target matrix must have a zero diagonal")
        if self.Y.min() < 0 or self.Y.max() > 1:
            raise ValueError("Target entries must lie in [0, 1]")
        if not self.Y.any():
            raise ValueError("Target matrix must not vanish")
        self.n = self.m
        self.r_plus = self.m - 1 if r_plus is None else int(r_plus)
        if self.r_plus < 1:
            raise ValueError("Inner dimension must be at least 1")
        self.omega = float(omega)
        self.k_max = int(k_max)
        if self.k_max < 0:
            raise ValueError("Iteration budget must be nonnegative")
        self.delta_enter = float(delta_enter)
        self.delta_solve = float(delta_solve)
        if self.delta_enter < 0 or self.delta_solve < 0:
            raise ValueError("Thresholds must be nonnegative")

    @property
    def batch(self):
        return self.n

    @property
    def dim(self):
        """Number of real coordinates of the lifted state"""
        return 2 * self.m * self.n * self.r_plus

    def _get_description(self):
        return {"m": self.m, "Y": self.Y.tolist(), "r_plus": self.r_plus, "omega": self.omega, "k_max": self.k_max,
                "delta_enter": self.delta_enter, "delta_solve": self.delta_solve}

    @staticmethod
    def _from_description(description):
        return LedmInstance(**description)

    def save(self, path):
        """Save the instance to a path"""
        with open(path, "w") as f:
            json.dump(self._get_description(), f)

    @staticmethod
    def load(path):
        """Load an instance from the given path"""
        with open(path) as f:
            s = json.load(f)
        return LedmInstance._from_description(s)

    def __repr__(self):
        return "LedmInstance(m=%d, r_plus=%d, k_max=%d, delta_enter=%g, delta_solve=%g)" % (
            self.m, self.r_plus, self.k_max, self.delta_enter, self.delta_solve)


def build_instance(m, **overrides):
    """Build the LEDM instance of size m, with any field overridden by keyword"""
    return LedmInstance(m, **overrides)


class WireState:
    """Local copies (u_iv, s_iv) of every relation block, stored as an (m, n, 2, r) array with u first"""

    def __init__(self, copies):
        self.copies = np.array(copies, dtype=float)
        if self.copies.ndim != 4 or self.copies.shape[2] != 2:
            raise DimensionError("Wire states are (m, n, 2, r) arrays, got shape %s" % (self.copies.shape,))

    @staticmethod
    def from_vector(x, instance):
        x = as_point(x, instance.dim)
        return WireState(x.reshape(instance.m, instance.n, 2, instance.r_plus))

    @staticmethod
    def planted(W, Z):
        """Consensus state whose copies all agree with the factors W (m x r) and Z (n x r)"""
        W = np.asarray(W, dtype=float)
        Z = np.asarray(Z, dtype=float)
        if W.ndim != 2 or Z.ndim != 2 or W.shape[1] != Z.shape[1]:
            raise DimensionError("Factors must be matrices with the same number of columns")
        m, n = W.shape[0], Z.shape[0]
        copies = np.empty((m, n, 2, W.shape[1]))
        copies[:, :, 0, :] = W[:, None, :]
        copies[:, :, 1, :] = Z[None, :, :]
        return WireState(copies)

    @property
    def u(self):
        return self.copies[:, :, 0, :]

    @property
    def s(self):
        return self.copies[:, :, 1, :]

    @property
    def W(self):
        """Consensus average of the copies of each row factor"""
        return self.u.mean(axis=1)

    @property
    def Z(self):
        """Consensus average of the copies of each column factor"""
        return self.s.mean(axis=0)

    def is_consensus(self, tol=1e-12):
        return bool(np.abs(self.u - self.W[:, None, :]).max() <= tol and
                    np.abs(self.s - self.Z[None, :, :]).max() <= tol)

    def vector(self):
        return self.copies.ravel().copy()


def _batched_multiplier(a, b, y, iterations=100):
    """Safeguarded Newton for a/(1-l)^2 - b/(1+l)^2 = y on (-1, 1), one root per entry.

    An entry is frozen once its residual is small relative to the magnitude of the terms, or once its bracket has
    shrunk to a few ulps.
    """
    eps = np.finfo(float).eps
    lam = np.zeros_like(a)
    lo = -np.ones_like(a)
    hi = np.ones_like(a)
    active = np.arange(len(a))
    for _ in range(iterations):
        if not active.size:
            break
        l, ya = lam[active], y[active]
        pos = a[active] / (1 - l) ** 2
        neg = b[active] / (1 + l) ** 2
        h = pos - neg - ya
        L = np.where(h <= 0, l, lo[active])
        H = np.where(h > 0, l, hi[active])
        lo[active], hi[active] = L, H
        converged = (np.abs(h) <= 1e-14 * (pos + neg + np.abs(ya))) | (H - L <= 4 * eps * np.maximum(1.0, np.abs(l)))
        dh = 2 * pos / (1 - l) + 2 * neg / (1 + l)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = l - h / dh
        new = np.where((step > L) & (step < H), step, (L + H) / 2)
        lam[active] = np.where(converged, l, new)
        active = active[~converged]
    return lam


def _batched_equality(U0, S0, free, y):
    """Nearest points of {u.s = y} on the free coordinates of every row; fixed coordinates are returned as zero"""
    Uf = np.where(free, U0, 0.0)
    Sf = np.where(free, S0, 0.0)
    a = np.sum((Uf + Sf) ** 2, axis=1) / 4
    b = np.sum((Uf - Sf) ** 2, axis=1) / 4
    tol = 1e-24 * np.maximum(1.0, np.sum(Uf ** 2, axis=1) + np.sum(Sf ** 2, axis=1))
    a_zero = 4 * a <= tol
    b_zero = 4 * b <= tol
    first = np.zeros_like(Uf)
    has_free = free.any(axis=1)
    first[np.flatnonzero(has_free), np.argmax(free, axis=1)[has_free]] = 1.0

    lam = np.zeros_like(a)
    interior = ~a_zero & ~b_zero
    lam[interior] = _batched_multiplier(a[interior], b[interior], y[interior])
    grow = b_zero & ~a_zero & (y > a / 4)
    lam[grow] = 1 - np.sqrt(a[grow] / y[grow])
    shrink = a_zero & ~b_zero & (y < -b / 4)
    lam[shrink] = np.sqrt(-b[shrink] / y[shrink]) - 1
    by_multiplier = interior | grow | shrink
    denominator = (1 - lam ** 2)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        U = np.where(by_multiplier[:, None], (Uf + lam[:, None] * Sf) / denominator, 0.0)
        S = np.where(by_multiplier[:, None], (Sf + lam[:, None] * Uf) / denominator, 0.0)

    # Multiplier -1: u0 = s0
    plus = b_zero & ~by_multiplier & ~(a_zero & (y > 0))
    c = (Uf + Sf) / 2
    norm_c = np.linalg.norm(c, axis=1)
    direction = np.where((norm_c > 0)[:, None], c / np.where(norm_c > 0, norm_c, 1.0)[:, None], first)
    z = np.sqrt(np.maximum(a / 4 - y, 0.0))[:, None] * direction
    U = np.where(plus[:, None], c / 2 + z, U)
    S = np.where(plus[:, None], c / 2 - z, S)

    # Multiplier 1: u0 = -s0
    minus = a_zero & ~by_multiplier & ~plus
    d = (Uf - Sf) / 2
    norm_d = np.linalg.norm(d, axis=1)
    direction = np.where((norm_d > 0)[:, None], d / np.where(norm_d > 0, norm_d, 1.0)[:, None], first)
    z = np.sqrt(np.maximum(y + b / 4, 0.0))[:, None] * direction
    U = np.where(minus[:, None], d / 2 + z, U)
    S = np.where(minus[:, None], -d / 2 + z, S)
    return np.where(free, U, 0.0), np.where(free, S, 0.0)


def project_blocks_clamped(U0, S0, y, rounds=None):
    """Project each row pair (u0, s0) onto {u, s >= 0 : u.s = y} with the clamp-then-resolve heuristic.

    This is the row-batched counterpart of the many-coordinate path of :func:`rrrflow.sets.project_bilinear`, with the
    same pinning rule and the same rescaling fallback.

    Args:
        U0 (np.ndarray): N x r first factors.
        S0 (np.ndarray): N x r second factors.
        y (np.ndarray): N targets, all nonnegative.
        rounds (int): Clamp rounds. Defaults to the active context.

    Returns:
        tuple of np.ndarray: The projected U, S and a boolean array flagging rows solved in the first round.

    """
    rounds = get_active_context().clamp_rounds if rounds is None else rounds
    U0 = np.asarray(U0, dtype=float)
    S0 = np.asarray(S0, dtype=float)
    y = np.asarray(y, dtype=float)
    N, r = U0.shape
    free = np.ones((N, r), dtype=bool)
    pin_u = np.zeros((N, r), dtype=bool)
    pin_s = np.zeros((N, r), dtype=bool)
    out_U = np.maximum(U0, 0.0)
    out_S = np.maximum(S0, 0.0)
    U, S = out_U.copy(), out_S.copy()
    exact = np.zeros(N, dtype=bool)
    pending = np.ones(N, dtype=bool)
    stuck = np.zeros(N, dtype=bool)
    for k in range(rounds + 1):
        dead = pending & ~free.any(axis=1) & (y != 0)
        stuck |= dead
        pending &= ~dead
        if not pending.any():
            break
        rows = np.flatnonzero(pending)
        Ue, Se = _batched_equality(U0[rows], S0[rows], free[rows], y[rows])
        Ur = np.where(pin_u[rows], 0.0, np.maximum(U0[rows], 0.0))
        Sr = np.where(pin_s[rows], 0.0, np.maximum(S0[rows], 0.0))
        Ur = np.where(free[rows], Ue, Ur)
        Sr = np.where(free[rows], Se, Sr)
        U[rows], S[rows] = Ur, Sr
        negative = free[rows] & ((Ur < 0) | (Sr < 0))
        settled = ~negative.any(axis=1)
        done = rows[settled]
        out_U[done], out_S[done] = Ur[settled], Sr[settled]
        exact[done] = k == 0
        pending[done] = False
        zero_u = negative & (Ur < Sr)
        pin_u[rows] |= zero_u
        pin_s[rows] |= negative & ~zero_u
        free[rows] &= ~negative
    stuck |= pending
    if stuck.any():
        rows = np.flatnonzero(stuck)
        Uf = np.where(pin_u[rows], 0.0, np.where(pin_s[rows], np.maximum(U0[rows], 0.0), np.maximum(U[rows], 0.0)))
        Sf = np.where(pin_s[rows], 0.0, np.where(pin_u[rows], np.maximum(S0[rows], 0.0), np.maximum(S[rows], 0.0)))
        p = np.sum(Uf * Sf, axis=1)
        scale = np.sqrt(np.where(p > 0, y[rows] / np.where(p > 0, p, 1.0), 1.0))
        Uf, Sf = Uf * scale[:, None], Sf * scale[:, None]
        spike = (p <= 0) & (y[rows] > 0)
        if spike.any():
            j = np.argmax(U0[rows] + S0[rows], axis=1)
            idx = np.flatnonzero(spike)
            Uf[idx, j[idx]] = Sf[idx, j[idx]] = np.sqrt(y[rows][idx])
        out_U[rows], out_S[rows] = Uf, Sf
        logger.debug("%d blocks used the rescaling fallback", len(rows))
    return out_U, out_S, exact


class WireProblem(FlowProblem):
    """The lifted problem: A is the product of the mn nonnegative relation blocks, B the product of the consensus
    diagonals of the shared row and column factors.

    The field is evaluated with batched array operations; the sets A and B are kept so the generic machinery of
    :class:`rrrflow.flow.FlowProblem` applies unchanged.
    """

    def __init__(self, instance):
        self.instance = instance
        m, n, r = instance.m, instance.n, instance.r_plus
        layout = np.arange(instance.dim).reshape(m, n, 2, r)
        A = ProductSet([BilinearBlock(instance.Y[i, v], r, nonneg=True) for i in range(m) for v in range(n)])
        row_blocks = [layout[i, :, 0, :].ravel() for i in range(m)]
        column_blocks = [layout[:, v, 1, :].ravel() for v in range(n)]
        B = ProductSet([ConsensusDiagonal(n, r) for _ in range(m)] + [ConsensusDiagonal(m, r) for _ in range(n)],
                       row_blocks + column_blocks)
        super().__init__(A, B)
        self._targets = instance.Y.ravel()

    def project_A(self, x):
        """Blockwise projection onto the relations"""
        inst = self.instance
        if inst.r_plus <= 2:
            return self.A.project(x)
        X = as_point(x, self.dim).reshape(inst.m * inst.n, 2, inst.r_plus)
        U, S, _ = project_blocks_clamped(X[:, 0, :], X[:, 1, :], self._targets)
        return np.stack([U, S], axis=1).ravel()

    def project_B(self, x):
        """Replace every copy by the average of its wire"""
        state = WireState.from_vector(x, self.instance)
        return WireState.planted(state.W, state.Z).vector()

    def parts(self, x):
        """Return (P_A x, v(x))"""
        pa = self.project_A(x)
        return pa, self.project_B(2 * pa - x) - pa

    def field(self, x):
        return self.parts(x)[1]

    def __repr__(self):
        return "WireProblem(%r)" % self.instance


def lift(instance):
    """Local-copy lift of an instance into a two-set feasibility problem"""
    return WireProblem(instance)


def residual(instance, state):
    """Relative Frobenius error |Y - W Z^T| / |Y| of the consensus averages clamped at zero.

    Args:
        instance (LedmInstance): The instance.
        state (WireState or array-like): The lifted state.

    Returns:
        float: The residual.

    """
    if not isinstance(state, WireState):
        state = WireState.from_vector(state, instance)
    W = np.maximum(state.W, 0.0)
    Z = np.maximum(state.Z, 0.0)
    return float(np.linalg.norm(instance.Y - W @ Z.T) / np.linalg.norm(instance.Y))


def planted_state(instance, W, Z):
    """Lifted vector of the consensus state built from the factors W, Z"""
    state = WireState.planted(W, Z)
    if state.copies.shape != (instance.m, instance.n, 2, instance.r_plus):
        raise DimensionError("Factors do not match the instance")
    return state.vector()


def planted_instance(m, r_plus=2, seed=0, **overrides):
    """An instance with a known nonnegative factorization.

    Row i uses a single coordinate 2p + (i mod 2) of the pair p = (i // 2) mod (r_plus // 2), and its column factor the
    other coordinate of the pair, so Y = W Z^T is symmetric with zero diagonal.

    Returns:
        tuple: (LedmInstance, W, Z).

    """
    if r_plus < 2:
        raise ValueError("Planted instances need r_plus >= 2")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.5, 1.0, size=m)
    W = np.zeros((m, r_plus))
    Z = np.zeros((m, r_plus))
    for i in range(m):
        pair = (i // 2) % (r_plus // 2)
        side = i % 2
        W[i, 2 * pair + side] = weights[i]
        Z[i, 2 * pair + 1 - side] = weights[i]
    instance = LedmInstance(m, Y=W @ Z.T, r_plus=r_plus, **overrides)
    return instance, W, Z


class PhaseRecord:
    """Outcome of a single two-phase run"""

    def __init__(self, m, beta, seed, trace, k_enter, k_solve, k_max=None):
        self.m = m
        self.k_max = k_max
        self.beta = beta
        self.seed = seed
        self.trace = np.asarray(trace, dtype=float)
        self.k_enter = k_enter
        self.k_solve = k_solve
        self.T_search = beta * k_enter if k_enter is not None else math.nan
        if k_enter is not None and k_solve is not None:
            self.T_conv = beta * max(k_solve - k_enter, 0)
            if k_enter <= k_solve and not math.isclose(self.T_search + self.T_conv, beta * k_solve,
                                                       rel_tol=1e-12, abs_tol=1e-12):
                raise VerificationError("Phase times do not add up to the solve time")
        else:
            self.T_conv = math.nan

    @property
    def censored(self):
        return self.k_enter is None or self.k_solve is None

    @property
    def entered(self):
        """Whether entry happened strictly before the budget k_max"""
        if self.k_enter is None:
            return False
        return self.k_max is None or self.k_enter < self.k_max

    @property
    def err_final(self):
        return float(self.trace[-1]) if len(self.trace) else math.nan

    def to_row(self):
        return {"m": self.m, "beta": self.beta, "seed": self.seed, "k_enter": self.k_enter, "k_solve": self.k_solve,
                "censored": self.censored, "T_search": self.T_search, "T_conv": self.T_conv,
                "err_final": self.err_final}

    def __repr__(self):
        return "PhaseRecord(m=%d, beta=%g, seed=%d, k_enter=%s, k_solve=%s)" % (
            self.m, self.beta, self.seed, self.k_enter, self.k_solve)


def run_two_phase(instance, beta, seed=0, k_max=None, problem=None):
    """Run RRR with step beta from a uniform [0, 1] initialization, recording the residual of the shadow P_A x_k.

    The entry and solve indices are the first k with residual below delta_enter and delta_solve respectively; each is
    found on its own and the run stops once both are known or the budget is spent.

    Args:
        instance (LedmInstance): The instance.
        beta (float): Step in (0, 1].
        seed (int): Seed of the initialization.
        k_max (int): Iteration budget. Defaults to the instance's.
        problem (WireProblem): Lifted problem to reuse.

    Returns:
        PhaseRecord: The run.

    """
    if not 0 < beta <= 1:
        raise ValueError("The step must lie in (0, 1], got %g" % beta)
    k_max = instance.k_max if k_max is None else int(k_max)
    problem = lift(instance) if problem is None else problem
    x = np.random.default_rng(seed).random(instance.dim)
    trace = []
    k_enter = k_solve = None
    for k in range(k_max + 1):
        pa, v = problem.parts(x)
        err = residual(instance, pa)
        trace.append(err)
        if k_enter is None and err <= instance.delta_enter:
            k_enter = k
        if k_solve is None and err <= instance.delta_solve:
            k_solve = k
        if k_enter is not None and k_solve is not None:
            break
        x = x + beta * v
    record = PhaseRecord(instance.m, beta, seed, trace, k_enter, k_solve, k_max)
    if record.censored:
        logger.warning("Run censored after %d iterations (m=%d, beta=%g, seed=%d, err=%g)",
                       k_max, instance.m, beta, seed, record.err_final)
    else:
        logger.debug("%r", record)
    return record


EntryEstimate = namedtuple("EntryEstimate", ["p_hat", "lower", "upper", "entered", "trials", "records"])


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion"""
    if trials < 1:
        raise ValueError("At least one trial is needed")
    z = norm.ppf(1 - (1 - confidence) / 2)
    p = successes / trials
    denominator = 1 + z ** 2 / trials
    center = (p + z ** 2 / (2 * trials)) / denominator
    half = z * math.sqrt(p * (1 - p) / trials + z ** 2 / (4 * trials ** 2)) / denominator
    return max(0.0, center - half), min(1.0, center + half)


def entry_probability(instance, beta, trials, seed=0, seeds=None, confidence=0.95, k_max=None):
    """Fraction of runs entering the delta_enter neighbourhood before the budget, with its Wilson interval.

    A run counts as entered when k_enter < k_max; an entry at the last allowed index does not.

    Trial i uses seed + i unless explicit seeds are given.
    """
    if trials < 1:
        raise ValueError("At least one trial is needed")
    seeds = [seed + i for i in range(trials)] if seeds is None else list(seeds)
    if len(seeds) != trials:
        raise ValueError("Got %d seeds for %d trials" % (len(seeds), trials))
    problem = lift(instance)
    records = [run_two_phase(instance, beta, s, k_max=k_max, problem=problem) for s in seeds]
    entered = sum(r.entered for r in records)
    lower, upper = wilson_interval(entered, trials, confidence)
    logger.info("p_enter(m=%d, beta=%g) = %d/%d", instance.m, beta, entered, trials)
    return EntryEstimate(entered / trials, lower, upper, entered, trials, records)


def recurrence_index(trace, bins=20, burn_in=None):
    """Fraction of post burn-in iterations whose residual bin was already visited.

    Bins are the empirical quantiles of log10 of the residual over the whole trace.

    Args:
        trace (array-like): Residuals err(x_k).
        bins (int): Number of quantile bins.
        burn_in (int): Iterations skipped. Defaults to a tenth of the trace, at least one.

    Returns:
        float: The recurrence index in [0, 1].

    """
    z = np.log10(np.maximum(np.asarray(trace, dtype=float), 1e-300))
    T = len(z)
    if bins < 1:
        raise ValueError("At least one bin is needed")
    w = max(1, T // 10) if burn_in is None else int(burn_in)
    if T <= w:
        raise ValueError("Trace of length %d does not outlast a burn-in of %d" % (T, w))
    edges = np.quantile(z, np.arange(1, bins) / bins)
    states = np.searchsorted(edges, z, side="right")
    seen = set()
    repeats = 0
    for k, state in enumerate(states):
        if k >= w and state in seen:
            repeats += 1
        seen.add(state)
    return repeats / (T - w)


EulerFit = namedtuple("EulerFit", ["a", "b", "r2", "table"])


def records_frame(records):
    """Tabulate phase records with the columns of the run CSV"""
    frame = pd.DataFrame([r.to_row() for r in records],
                         columns=["m", "beta", "seed", "k_enter", "k_solve", "censored", "T_search", "T_conv",
                                  "err_final"])
    frame["k_enter"] = frame["k_enter"].astype("Int64")
    frame["k_solve"] = frame["k_solve"].astype("Int64")
    return frame


def euler_fit(records, beta_max=0.3):
    """Least-squares line a + b beta through the mean convergence time of solved runs with beta <= beta_max.

    Args:
        records (list of PhaseRecord or pd.DataFrame): Runs, or a table with beta and T_conv columns.
        beta_max (float): Upper end of the small-step window.

    Returns:
        EulerFit: Intercept, slope, R^2 and the table of means.

    """
    frame = records if isinstance(records, pd.DataFrame) else records_frame(records)
    frame = frame[(frame["beta"] <= beta_max) & frame["T_conv"].notna()]
    table = frame.groupby("beta")["T_conv"].agg(["mean", "count"]).reset_index()
    if len(table) < 2:
        raise ValueError("At least two step sizes with solved runs are needed, got %d" % len(table))
    fit = linregress(table["beta"], table["mean"])
    predicted = fit.intercept + fit.slope * table["beta"]
    ss_tot = float(np.sum((table["mean"] - table["mean"].mean()) ** 2))
    ss_res = float(np.sum((table["mean"] - predicted) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1 - ss_res / ss_tot
    return EulerFit(float(fit.intercept), float(fit.slope), r2, table)


def heatmap_sweep(ms, betas, trials, seed=0, bins=20, burn_in=None, **overrides):
    """Long-format table of entry probability and mean recurrence index over a grid of sizes and steps.

    Args:
        ms (list of int): Matrix sizes.
        betas (list of float): Steps.
        trials (int): Runs per cell of the grid.
        seed (int): First seed of each cell.
        bins (int): Bins of the recurrence index.
        burn_in (int): Burn-in of the recurrence index.
        **overrides: Instance fields, e.g. k_max.

    Returns:
        pd.DataFrame: Columns m, beta, trials, p_enter, p_lower, p_upper, R_mean, R_std.

    """
    rows = []
    for m in ms:
        instance = build_instance(m, **overrides)
        for beta in betas:
            estimate = entry_probability(instance, beta, trials, seed=seed)
            R = [recurrence_index(r.trace, bins, burn_in) for r in estimate.records if len(r.trace) > 1]
            rows.append({"m": m, "beta": beta, "trials": trials, "p_enter": estimate.p_hat,
                         "p_lower": estimate.lower, "p_upper": estimate.upper,
                         "R_mean": float(np.mean(R)) if R else math.nan,
                         "R_std": float(np.std(R)) if R else math.nan})
    return pd.DataFrame(rows)
