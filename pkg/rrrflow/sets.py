"""Constraint sets with exact metric projections and reflections"""
import itertools
import json
import logging

import numpy as np
from scipy.linalg import orth
from scipy.optimize import brentq

from .context import get_active_context
from .exceptions import (DimensionError, EmptySetError, BracketError, InfeasibleProjectionError)

logger = logging.getLogger(__name__)


def as_point(x, dim=None):
    """Convert to a 1-D float array, checking the dimension if given"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DimensionError("A point must be a vector, got shape %s" % (x.shape,))
    if dim is not None and x.shape[0] != dim:
        raise DimensionError("Expected a point of dimension %d, got %d" % (dim, x.shape[0]))
    return x


class SetOracle:
    """A closed subset of R^m with a metric projection"""

    #: Ambient dimension
    dim = None

    def project(self, x):
        """Return a nearest point of the set to x"""
        raise NotImplementedError

    def reflect(self, x):
        """Return the reflection 2 P x - x"""
        x = as_point(x, self.dim)
        return 2 * self.project(x) - x

    def distance(self, x):
        """Euclidean distance from x to the set"""
        x = as_point(x, self.dim)
        return float(np.linalg.norm(self.project(x) - x))

    def contains(self, x, tol=None):
        """Check membership up to a tolerance (default: active membership tolerance)"""
        tol = get_active_context().membership_tol if tol is None else tol
        return self.distance(x) <= tol * max(1.0, float(np.linalg.norm(x)))

    def _get_description(self):
        raise NotImplementedError("Descriptions are only available for primitive types")

    @staticmethod
    def _from_description(description):
        return _set_types[description["type"]]._from_description(description)

    def save(self, path):
        """Save the set definition to a path"""
        with open(path, "w") as f:
            json.dump(self._get_description(), f)

    @staticmethod
    def load(path):
        """Load a set from the given path"""
        with open(path) as f:
            s = json.load(f)
        return SetOracle._from_description(s)


class AffineSubspace(SetOracle):
    """An affine subspace b + span(U), with U given by orthonormal rows"""

    def __init__(self, basepoint, basis):
        """

        Args:
            basepoint (array-like): A point of the subspace.
            basis (array-like): k x m array whose rows are an orthonormal basis of the tangent space. k may be zero.

        """
        self.basepoint = as_point(basepoint)
        self.dim = self.basepoint.shape[0]
        basis = np.asarray(basis, dtype=float).reshape(-1, self.dim)
        if basis.shape[0] > self.dim:
            raise DimensionError("More basis vectors than the ambient dimension")
        gram = basis @ basis.T
        if np.max(np.abs(gram - np.eye(basis.shape[0])), initial=0.0) > get_active_context().orthonormal_tol:
            raise ValueError("Affine basis rows must be orthonormal")
        self.basis = basis

    @staticmethod
    def from_span(basepoint, vectors):
        """Build the subspace through basepoint spanned by arbitrary vectors"""
        basepoint = as_point(basepoint)
        vectors = np.asarray(vectors, dtype=float).reshape(-1, basepoint.shape[0])
        if not vectors.size:
            return AffineSubspace(basepoint, np.zeros((0, basepoint.shape[0])))
        return AffineSubspace(basepoint, orth(vectors.T).T)

    @staticmethod
    def line(angle, dim=2, through=None):
        """The line through a point (default: the origin) spanned by (cos angle, sin angle, 0, ...)"""
        direction = np.zeros(dim)
        direction[0], direction[1] = np.cos(angle), np.sin(angle)
        through = np.zeros(dim) if through is None else through
        return AffineSubspace(through, direction[None, :])

    @property
    def rank(self):
        return self.basis.shape[0]

    def project(self, x):
        x = as_point(x, self.dim)
        return self.basepoint + self.basis.T @ (self.basis @ (x - self.basepoint))

    def _get_description(self):
        return {"type": "affine", "basepoint": self.basepoint.tolist(), "basis": self.basis.tolist()}

    @staticmethod
    def _from_description(description):
        basepoint = description["basepoint"]
        basis = np.asarray(description.get("basis", []), dtype=float).reshape(-1, len(basepoint))
        return AffineSubspace(basepoint, basis)

    def __repr__(self):
        return "AffineSubspace(basepoint=%s, rank=%d)" % (self.basepoint.tolist(), self.rank)


class Sphere(SetOracle):
    """A sphere with given center and radius"""

    def __init__(self, center, radius):
        self.center = as_point(center)
        self.dim = self.center.shape[0]
        if not radius > 0:
            raise ValueError("Sphere radius must be positive")
        self.radius = float(radius)

    def project(self, x):
        x = as_point(x, self.dim)
        w = x - self.center
        norm = np.linalg.norm(w)
        if norm == 0:
            # Every point is nearest; take the first axis
            w = np.zeros(self.dim)
            w[0] = 1.0
            norm = 1.0
        return self.center + self.radius * w / norm

    def _get_description(self):
        return {"type": "sphere", "center": self.center.tolist(), "radius": self.radius}

    @staticmethod
    def _from_description(description):
        return Sphere(description["center"], description["radius"])

    def __repr__(self):
        return "Sphere(center=%s, radius=%g)" % (self.center.tolist(), self.radius)


class Box(SetOracle):
    """A coordinate box, infinite bounds allowed"""

    def __init__(self, lower, upper):
        self.lower = as_point(lower)
        self.upper = as_point(upper, self.lower.shape[0])
        self.dim = self.lower.shape[0]
        if np.any(self.lower > self.upper):
            raise InfeasibleProjectionError("Box lower bounds exceed upper bounds")

    @staticmethod
    def orthant(dim):
        """The nonnegative orthant of R^dim"""
        return Box(np.zeros(dim), np.full(dim, np.inf))

    def project(self, x):
        return np.clip(as_point(x, self.dim), self.lower, self.upper)

    def _get_description(self):
        # JSON has no infinity, so unbounded sides are stored as null
        return {"type": "box",
                "lower": [None if np.isinf(v) else float(v) for v in self.lower],
                "upper": [None if np.isinf(v) else float(v) for v in self.upper]}

    @staticmethod
    def _from_description(description):
        lower = [-np.inf if v is None else v for v in description["lower"]]
        upper = [np.inf if v is None else v for v in description["upper"]]
        return Box(lower, upper)

    def __repr__(self):
        return "Box(lower=%s, upper=%s)" % (self.lower.tolist(), self.upper.tolist())


class FinitePoints(SetOracle):
    """A finite set of points. Ties are broken by the lowest index"""

    def __init__(self, points):
        points = np.asarray(points, dtype=float)
        if points.size == 0:
            raise EmptySetError("A finite set needs at least one point")
        if points.ndim == 1:
            points = points[:, None]
        self.points = points
        self.dim = points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, i):
        return self.points[i]

    def nearest_index(self, x):
        """Return the index of the nearest point and whether it was a tie"""
        x = as_point(x, self.dim)
        d2 = np.sum((self.points - x) ** 2, axis=1)
        i = int(np.argmin(d2))
        tie = False
        if len(self) > 1:
            second = np.partition(d2, 1)[1]
            tie = bool(second - d2[i] <= get_active_context().tie_tol * max(1.0, d2[i]))
        return i, tie

    def nearest_indices(self, X):
        """Vectorized nearest index for the rows of X"""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        d2 = (np.sum(X ** 2, axis=1)[:, None] - 2 * X @ self.points.T + np.sum(self.points ** 2, axis=1)[None, :])
        return np.argmin(d2, axis=1)

    def project(self, x):
        return self.points[self.nearest_index(x)[0]].copy()

    def _get_description(self):
        return {"type": "finite", "points": self.points.tolist()}

    @staticmethod
    def _from_description(description):
        return FinitePoints(description["points"])

    def __repr__(self):
        return "FinitePoints(%s)" % self.points.tolist()


class ProductSet(SetOracle):
    """A product of sets acting on disjoint coordinate blocks"""

    def __init__(self, sets, blocks=None):
        """

        Args:
            sets (list of SetOracle): The factors.
            blocks (list of list of int): Coordinates of each factor. If None, contiguous blocks in order are used.

        """
        self.sets = list(sets)
        if blocks is None:
            offsets = np.cumsum([0] + [s.dim for s in self.sets])
            blocks = [np.arange(offsets[i], offsets[i + 1]) for i in range(len(self.sets))]
        self.blocks = [np.asarray(b, dtype=int) for b in blocks]
        if len(self.blocks) != len(self.sets):
            raise DimensionError("One coordinate block is needed per factor")
        for s, b in zip(self.sets, self.blocks):
            if s.dim != len(b):
                raise DimensionError("Block of size %d given for a factor of dimension %d" % (len(b), s.dim))
        self.dim = sum(len(b) for b in self.blocks)
        covered = np.sort(np.concatenate(self.blocks)) if self.blocks else np.zeros(0, dtype=int)
        if not np.array_equal(covered, np.arange(self.dim)):
            raise ValueError("Product blocks must partition the coordinates")

    def project(self, x):
        x = as_point(x, self.dim)
        out = np.empty_like(x)
        for s, b in zip(self.sets, self.blocks):
            out[b] = s.project(x[b])
        return out

    def _get_description(self):
        return {"type": "product", "sets": [s._get_description() for s in self.sets],
                "blocks": [b.tolist() for b in self.blocks]}

    @staticmethod
    def _from_description(description):
        return ProductSet([SetOracle._from_description(d) for d in description["sets"]], description.get("blocks"))

    def __repr__(self):
        return "ProductSet(%d factors, dim=%d)" % (len(self.sets), self.dim)


class BilinearProjection:
    """Result of a bilinear projection. Unpacks as (u, s)"""

    def __init__(self, u, s, multiplier, exact=True):
        self.u = u
        self.s = s
        self.multiplier = multiplier
        self.exact = exact

    def __iter__(self):
        yield self.u
        yield self.s

    def __repr__(self):
        return "BilinearProjection(u=%s, s=%s, multiplier=%g, exact=%s)" % (
            self.u.tolist(), self.s.tolist(), self.multiplier, self.exact)


def _from_multiplier(u0, s0, lam):
    den = 1 - lam * lam
    return (u0 + lam * s0) / den, (s0 + lam * u0) / den


def _boundary_candidates(u0, s0, y, nonneg=False):
    """Stationary points with multiplier -1 or 1, which exist only when u0 = s0 or u0 = -s0"""
    out = []
    scale = max(1.0, float(u0 @ u0 + s0 @ s0))
    tol = 1e-24 * scale
    r = u0.shape[0]
    e1 = np.zeros(r)
    e1[0] = 1.0
    if np.sum((u0 - s0) ** 2) <= tol:
        c = (u0 + s0) / 2
        t2 = c @ c / 4 - y
        if t2 >= 0:
            norm_c = np.linalg.norm(c)
            direction = c / norm_c if norm_c > 0 else e1
            z = np.sqrt(t2) * direction
            # The '+' sign zeroes the second factor when y = 0
            out.append((c / 2 + z, c / 2 - z, -1.0))
            out.append((c / 2 - z, c / 2 + z, -1.0))
    if np.sum((u0 + s0) ** 2) <= tol:
        d = (u0 - s0) / 2
        t2 = y + d @ d / 4
        if t2 >= 0:
            if nonneg:
                base = np.abs(d) / 2
                norm_d = np.linalg.norm(d)
                e = np.abs(d) / norm_d if norm_d > 0 else e1
                b = base @ e
                tau = -b + np.sqrt(max(b * b + y, 0.0))
                z = base + max(tau, 0.0) * e
            else:
                norm_d = np.linalg.norm(d)
                z = np.sqrt(t2) * (d / norm_d if norm_d > 0 else e1)
            out.append((d / 2 + z, -d / 2 + z, 1.0))
    return out


def _residual_ok(u, s, y):
    return abs(u @ s - y) <= get_active_context().bilinear_tol * max(1.0, abs(y))


def _sq_dist(u, s, u0, s0):
    return float(np.sum((u - u0) ** 2) + np.sum((s - s0) ** 2))


def _project_bilinear_equality(u0, s0, y):
    """Nearest point of {u.s = y}, returned as (u, s, multiplier)"""
    a = np.sum((u0 + s0) ** 2) / 4
    b = np.sum((u0 - s0) ** 2) / 4
    candidates = _boundary_candidates(u0, s0, y)
    if a > 0 and b > 0:
        def h(lam):
            return a / (1 - lam) ** 2 - b / (1 + lam) ** 2 - y

        lo, hi = -0.5, 0.5
        for _ in range(60):
            if h(lo) <= 0:
                break
            lo = -1 + (1 + lo) / 2
        for _ in range(60):
            if h(hi) >= 0:
                break
            hi = 1 - (1 - hi) / 2
        if h(lo) <= 0 <= h(hi) and -1 < lo < hi < 1:
            lam = brentq(h, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
            u, s = _from_multiplier(u0, s0, lam)
            if _residual_ok(u, s, y):
                candidates.append((u, s, lam))
            else:
                logger.warning("Bilinear root at multiplier %g misses the constraint by %g", lam, u @ s - y)
    elif b == 0 and a > 0 and y > a / 4:
        lam = 1 - np.sqrt(a / y)
        u, s = _from_multiplier(u0, s0, lam)
        candidates.append((u, s, lam))
    elif a == 0 and b > 0 and y < -b / 4:
        lam = np.sqrt(-b / y) - 1
        u, s = _from_multiplier(u0, s0, lam)
        candidates.append((u, s, lam))
    if not candidates:
        raise BracketError("Could not bracket the bilinear multiplier (y=%g, |u0|=%g, |s0|=%g)" %
                           (y, np.linalg.norm(u0), np.linalg.norm(s0)))
    return min(candidates, key=lambda c: _sq_dist(c[0], c[1], u0, s0))


def _stationary_points(u0, s0, y):
    """All real stationary points of the distance on {u.s = y}, from the quartic in the multiplier"""
    a = np.sum((u0 + s0) ** 2) / 4
    b = np.sum((u0 - s0) ** 2) / 4
    coefficients = [-y, 0.0, a - b + 2 * y, 2 * (a + b), a - b - y]
    candidates = _boundary_candidates(u0, s0, y, nonneg=True)
    if any(c != 0 for c in coefficients):
        poly = np.poly1d(np.trim_zeros(np.asarray(coefficients), "f"))
        dpoly = poly.deriv()
        for root in np.roots(poly.coeffs):
            if abs(root.imag) > 1e-7 * max(1.0, abs(root.real)):
                continue
            lam = root.real
            for _ in range(3):
                slope = dpoly(lam)
                if slope == 0:
                    break
                lam -= poly(lam) / slope
            if abs(abs(lam) - 1) < 1e-12:
                continue
            u, s = _from_multiplier(u0, s0, lam)
            if np.all(np.isfinite(u)) and np.all(np.isfinite(s)) and _residual_ok(u, s, y):
                candidates.append((u, s, lam))
    return candidates


def _project_bilinear_patterns(u0, s0, y):
    """Exact nonnegative projection by enumerating which factor vanishes per coordinate"""
    r = u0.shape[0]
    best = None
    for pattern in itertools.product(("free", "zero_s", "zero_u"), repeat=r):
        free = [i for i, p in enumerate(pattern) if p == "free"]
        u = np.empty(r)
        s = np.empty(r)
        for i, p in enumerate(pattern):
            if p == "zero_s":
                u[i], s[i] = max(u0[i], 0.0), 0.0
            elif p == "zero_u":
                u[i], s[i] = 0.0, max(s0[i], 0.0)
        if not free:
            options = [(u, s, 0.0)] if y == 0 else []
        else:
            options = []
            for uf, sf, lam in _stationary_points(u0[free], s0[free], y):
                if min(uf.min(), sf.min()) < -1e-12:
                    continue
                cu, cs = u.copy(), s.copy()
                cu[free], cs[free] = np.maximum(uf, 0.0), np.maximum(sf, 0.0)
                options.append((cu, cs, lam))
        for cu, cs, lam in options:
            dist = _sq_dist(cu, cs, u0, s0)
            if best is None or dist < best[0] - 1e-14 * max(1.0, best[0]):
                best = (dist, cu, cs, lam)
    if best is None:
        raise BracketError("No nonnegative stationary point found (y=%g)" % y)
    return best[1], best[2], best[3]


def _project_bilinear_clamped(u0, s0, y, rounds):
    """Clamp-then-resolve heuristic for many coordinates. Returns (u, s, multiplier, exact)"""
    r = u0.shape[0]
    free = np.ones(r, dtype=bool)
    pin_u = np.zeros(r, dtype=bool)
    pin_s = np.zeros(r, dtype=bool)
    u = np.maximum(u0, 0.0)
    s = np.maximum(s0, 0.0)
    lam = 0.0
    for k in range(rounds + 1):
        if free.any():
            uf, sf, lam = _project_bilinear_equality(u0[free], s0[free], y)
        elif y == 0:
            uf, sf = np.zeros(0), np.zeros(0)
        else:
            break
        u = np.where(pin_u, 0.0, np.maximum(u0, 0.0))
        s = np.where(pin_s, 0.0, np.maximum(s0, 0.0))
        u[free], s[free] = uf, sf
        negative = free & ((u < 0) | (s < 0))
        if not negative.any():
            return u, s, lam, k == 0
        zero_u = negative & (u < s)
        pin_u |= zero_u
        pin_s |= negative & ~zero_u
        free &= ~negative
    u, s = _clamp_fallback(u0, s0, u, s, pin_u, pin_s, y)
    logger.warning("Nonnegative bilinear projection did not settle in %d rounds; rescaling the clamped point", rounds)
    return u, s, lam, False


def _clamp_fallback(u0, s0, u, s, pin_u, pin_s, y):
    """Clip to the orthant and rescale so that u.s = y"""
    u = np.where(pin_u, 0.0, np.where(pin_s, np.maximum(u0, 0.0), np.maximum(u, 0.0)))
    s = np.where(pin_s, 0.0, np.where(pin_u, np.maximum(s0, 0.0), np.maximum(s, 0.0)))
    p = float(u @ s)
    if p > 0:
        scale = np.sqrt(y / p)
        return u * scale, s * scale
    if y > 0:
        j = int(np.argmax(u0 + s0))
        u[j] = s[j] = np.sqrt(y)
    return u, s


def project_bilinear(u0, s0, y, nonneg=False):
    """Project (u0, s0) onto {(u, s) : u.s = y}, optionally with u, s >= 0.

    The equality case solves the stationarity conditions u = (u0 + l s0)/(1 - l^2), s = (s0 + l u0)/(1 - l^2) for the
    multiplier l in (-1, 1) with a bracketing root finder. The nonnegative case enumerates the face where each
    coordinate pair lives for r <= 2, and falls back to a flagged clamp-then-resolve heuristic otherwise.

    Args:
        u0 (array-like): First factor.
        s0 (array-like): Second factor, same dimension.
        y (float): Target inner product.
        nonneg (bool): Whether u and s must be nonnegative.

    Returns:
        BilinearProjection: The projected pair, unpacking as (u, s).

    """
    u0 = as_point(u0)
    s0 = as_point(s0, u0.shape[0])
    y = float(y)
    if not nonneg:
        u, s, lam = _project_bilinear_equality(u0, s0, y)
        return BilinearProjection(u, s, lam)
    if y < 0:
        raise InfeasibleProjectionError("No nonnegative pair has a negative inner product (y=%g)" % y)
    if u0.shape[0] <= 2:
        u, s, lam = _project_bilinear_patterns(u0, s0, y)
        return BilinearProjection(u, s, lam)
    u, s, lam, exact = _project_bilinear_clamped(u0, s0, y, get_active_context().clamp_rounds)
    return BilinearProjection(u, s, lam, exact)


def project_consensus(copies, nonneg=False):
    """Project a family of copies onto the diagonal {all copies equal}, optionally intersected with the orthant.

    Args:
        copies (array-like): k x d array (or sequence of k vectors).
        nonneg (bool): Whether to also impose nonnegativity.

    Returns:
        np.ndarray: The common value (dimension d).

    """
    copies = np.asarray(copies, dtype=float)
    if copies.ndim == 1:
        copies = copies[:, None]
    if copies.shape[0] < 1:
        raise DimensionError("At least one copy is needed")
    mean = copies.mean(axis=0)
    return np.maximum(mean, 0.0) if nonneg else mean


class BilinearBlock(SetOracle):
    """The relation {(u, s) in R^r x R^r : u.s = y}, coordinates ordered as (u, s)"""

    def __init__(self, y, r, nonneg=False):
        self.y = float(y)
        self.r = int(r)
        if self.r < 1:
            raise DimensionError("Factor dimension must be at least 1")
        if nonneg and self.y < 0:
            raise InfeasibleProjectionError("Empty nonnegative block with y=%g" % self.y)
        self.nonneg = bool(nonneg)
        self.dim = 2 * self.r

    def project(self, x):
        x = as_point(x, self.dim)
        u, s = project_bilinear(x[:self.r], x[self.r:], self.y, self.nonneg)
        return np.concatenate([u, s])

    def contains(self, x, tol=None):
        x = as_point(x, self.dim)
        u, s = x[:self.r], x[self.r:]
        ok = abs(u @ s - self.y) <= get_active_context().bilinear_tol * max(1.0, abs(self.y))
        if self.nonneg:
            tol = get_active_context().membership_tol if tol is None else tol
            ok = ok and x.min() >= -tol
        return ok

    def _get_description(self):
        return {"type": "bilinear", "y": self.y, "r": self.r, "nonneg": self.nonneg}

    @staticmethod
    def _from_description(description):
        return BilinearBlock(description["y"], description["r"], description.get("nonneg", False))

    def __repr__(self):
        return "BilinearBlock(y=%g, r=%d, nonneg=%s)" % (self.y, self.r, self.nonneg)


class ConsensusDiagonal(SetOracle):
    """k copies of a d-vector constrained to be equal, stored contiguously"""

    def __init__(self, k, d=1, nonneg=False):
        self.k = int(k)
        self.d = int(d)
        if self.k < 1 or self.d < 1:
            raise DimensionError("Copy count and copy dimension must be positive")
        self.nonneg = bool(nonneg)
        self.dim = self.k * self.d

    def project(self, x):
        x = as_point(x, self.dim)
        value = project_consensus(x.reshape(self.k, self.d), self.nonneg)
        return np.tile(value, self.k)

    def _get_description(self):
        return {"type": "consensus", "k": self.k, "d": self.d, "nonneg": self.nonneg}

    @staticmethod
    def _from_description(description):
        return ConsensusDiagonal(description["k"], description.get("d", 1), description.get("nonneg", False))

    def __repr__(self):
        return "ConsensusDiagonal(k=%d, d=%d, nonneg=%s)" % (self.k, self.d, self.nonneg)


def project(set, x):
    """Metric projection of x onto a set (ties on finite sets go to the lowest index)"""
    if isinstance(set, FinitePoints) and len(set) == 0:
        raise EmptySetError("Empty finite set")
    return set.project(x)


def reflect(set, x):
    """Reflection 2 P(x) - x"""
    return set.reflect(x)


_set_types = {"affine": AffineSubspace, "sphere": Sphere, "box": Box, "finite": FinitePoints,
              "product": ProductSet, "bilinear": BilinearBlock, "consensus": ConsensusDiagonal}
