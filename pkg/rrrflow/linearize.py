"""Linearization of the RRR field at feasible points of smooth problems"""
import logging
import math
from collections import namedtuple

import numpy as np
from scipy.linalg import null_space

from .context import get_active_context
from .exceptions import (UnsupportedSetError, NonSmoothError, NotTransversalError, VerificationError, DimensionError)
from .sets import AffineSubspace, Sphere, as_point

logger = logging.getLogger(__name__)


class TangentProjector:
    """Orthogonal projector onto a tangent space, stored with an orthonormal basis (rows)"""

    def __init__(self, basis, dim=None):
        basis = np.asarray(basis, dtype=float)
        if dim is not None:
            basis = basis.reshape(-1, dim)
        self.basis = basis
        self.matrix = basis.T @ basis
        self.dim = basis.shape[1]

    @property
    def rank(self):
        return self.basis.shape[0]

    def __repr__(self):
        return "TangentProjector(rank=%d, dim=%d)" % (self.rank, self.dim)


def tangent_projector(set, x, tol=1e-8):
    """Projector onto the tangent space of an affine subspace or a sphere at one of its points"""
    x = as_point(x, set.dim)
    if isinstance(set, AffineSubspace):
        if set.distance(x) > tol:
            raise ValueError("The point is not on the subspace")
        return TangentProjector(set.basis, set.dim)
    elif isinstance(set, Sphere):
        radial = x - set.center
        if abs(np.linalg.norm(radial) - set.radius) > tol:
            raise ValueError("The point is not on the sphere")
        u = radial / np.linalg.norm(radial)
        return TangentProjector(null_space(u[None, :]).T, set.dim)
    raise UnsupportedSetError("No tangent space for %s" % type(set).__name__)


AngleReport = namedtuple("AngleReport", ["angles", "intersection_dim", "all_angles", "a_vectors", "b_vectors",
                                         "a_unpaired", "b_unpaired"])


def principal_angles(pA, pB):
    """Principal angles between two tangent spaces.

    Angles below the active transversality threshold count as intersection directions and are not listed among the
    transverse angles.

    Returns:
        AngleReport: transverse angles (radians, ascending), the number of intersection directions, every angle, the
        paired principal vectors in each space (columns) and the directions of each space orthogonal to the other.

    """
    if pA.dim != pB.dim:
        raise DimensionError("Tangent spaces of different ambient dimension")
    m = pA.dim
    if pA.rank == 0 or pB.rank == 0:
        empty = np.zeros((m, 0))
        return AngleReport([], 0, [], empty, empty, pA.basis.T.copy(), pB.basis.T.copy())
    U, s, Vt = np.linalg.svd(pA.basis @ pB.basis.T, full_matrices=True)
    k = len(s)
    angles = np.arccos(np.clip(s, 0.0, 1.0))
    a_vectors = pA.basis.T @ U[:, :k]
    b_vectors = pB.basis.T @ Vt.T[:, :k]
    tol = get_active_context().transversal_tol
    transverse = sorted(float(a) for a in angles if a >= tol)
    return AngleReport(transverse, int(np.sum(angles < tol)), angles.tolist(), a_vectors, b_vectors,
                       pA.basis.T @ U[:, k:], pB.basis.T @ Vt.T[:, k:])


def rotation_block(theta):
    """The 2 x 2 restriction of the Jacobian to a principal plane at angle theta"""
    s, c = math.sin(theta), math.cos(theta)
    return np.array([[-s * s, -s * c], [s * c, -s * s]])


class SpectralReport:
    """Spectrum of the Jacobian 2 p_B p_A - p_B - p_A at a feasible point.

    Attributes:
        angles (list of float): Transverse principal angles (radians).
        intersection_dim (int): Number of zero angles.
        J (np.ndarray): The Jacobian.
        eigenvalues (np.ndarray): Complex eigenvalues of J.
        sym_eigenvalues (np.ndarray): Eigenvalues of the symmetric part of J.
        sigma (float): min sin^2 over the transverse angles (nan if there are none).
        planes (list of np.ndarray): m x 2 orthonormal bases of the principal planes.
        unpaired (np.ndarray): Directions of one tangent space orthogonal to the other (columns), where J = -I.
        intersection (np.ndarray): Intersection directions (columns), where J = 0.
        checks (dict): Name -> (passed, worst deviation) for each spectral identity.

    """

    def __init__(self, angles, intersection_dim, J, planes, unpaired, intersection, checks):
        self.angles = list(angles)
        self.intersection_dim = intersection_dim
        self.J = J
        self.eigenvalues = np.linalg.eigvals(J)
        self.sym_eigenvalues = np.linalg.eigvalsh((J + J.T) / 2)
        self.sigma = min((math.sin(a) ** 2 for a in self.angles), default=math.nan)
        self.planes = planes
        self.unpaired = unpaired
        self.intersection = intersection
        self.checks = checks

    @property
    def passed(self):
        return all(ok for ok, _ in self.checks.values())

    @property
    def dim(self):
        return self.J.shape[0]

    def to_dict(self):
        return {"angles_deg": [math.degrees(a) for a in self.angles],
                "intersection_dim": self.intersection_dim,
                "eigenvalues": [[float(z.real), float(z.imag)] for z in sorted(self.eigenvalues,
                                                                                 key=lambda z: (z.real, z.imag))],
                "sym_eigenvalues": self.sym_eigenvalues.tolist(),
                "sigma": None if math.isnan(self.sigma) else self.sigma,
                "checks": {k: {"passed": bool(ok), "deviation": float(dev)} for k, (ok, dev) in self.checks.items()}}


def jacobian_at_feasible(pA, pB, strict=False, tol=1e-8):
    """Assemble J = 2 p_B p_A - p_B - p_A and check its structure.

    On each principal plane spanned by a_j and (b_j - cos a_j) / sin, J acts as the block [[-sin^2, -sin cos],
    [sin cos, -sin^2]], whose eigenvalues are -sin^2 +- i sin cos and whose symmetric part is -sin^2 I. J vanishes on
    intersection directions.

    Args:
        pA (TangentProjector): Tangent projector of A.
        pB (TangentProjector): Tangent projector of B.
        strict (bool): Raise VerificationError if a check fails.
        tol (float): Tolerance of the checks.

    Returns:
        SpectralReport: The report.

    """
    PA, PB = pA.matrix, pB.matrix
    J = 2 * PB @ PA - PB - PA
    report = principal_angles(pA, pB)
    tol_angle = get_active_context().transversal_tol
    eigenvalues = np.linalg.eigvals(J)
    planes = []
    block_dev = spectrum_dev = sym_dev = 0.0
    intersection = []
    for theta, a, b in zip(report.all_angles, report.a_vectors.T, report.b_vectors.T):
        if theta < tol_angle:
            intersection.append(a)
            continue
        e2 = (b - math.cos(theta) * a) / math.sin(theta)
        Q = np.stack([a, e2], axis=1)
        planes.append(Q)
        block = rotation_block(theta)
        block_dev = max(block_dev, float(np.max(np.abs(J @ Q - Q @ block))))
        sym = Q.T @ ((J + J.T) / 2) @ Q
        sym_dev = max(sym_dev, float(np.max(np.abs(sym + math.sin(theta) ** 2 * np.eye(2)))))
        target = complex(-math.sin(theta) ** 2, math.sin(theta) * math.cos(theta))
        spectrum_dev = max(spectrum_dev, float(np.min(np.abs(eigenvalues - target))),
                           float(np.min(np.abs(eigenvalues - target.conjugate()))))
    intersection = np.stack(intersection, axis=1) if intersection else np.zeros((pA.dim, 0))
    unpaired = np.hstack([report.a_unpaired, report.b_unpaired])
    kernel_dev = float(np.max(np.abs(J @ intersection), initial=0.0))
    unpaired_dev = float(np.max(np.abs(J @ unpaired + unpaired), initial=0.0))
    checks = {"plane_blocks": (block_dev <= tol, block_dev),
              "plane_spectrum": (spectrum_dev <= tol, spectrum_dev),
              "plane_symmetric_part": (sym_dev <= tol, sym_dev),
              "intersection_kernel": (kernel_dev <= tol, kernel_dev),
              "unpaired_identity": (unpaired_dev <= tol, unpaired_dev)}
    result = SpectralReport(report.angles, report.intersection_dim, J, planes, unpaired, intersection, checks)
    failed = [k for k, (ok, _) in checks.items() if not ok]
    if failed:
        logger.warning("Spectral checks failed: %s", ", ".join(failed))
        if strict:
            raise VerificationError("Spectral checks failed: %s" % ", ".join(failed))
    return result


def finite_difference_jacobian(p, x, h=1e-5, asymmetry_tol=1e-3):
    """Central-difference Jacobian of the RRR field.

    Raises:
        NonSmoothError: If one-sided differences disagree, which happens where a projection is multivalued or the
            point sits on a cell boundary.

    """
    x = as_point(x, p.dim)
    v0 = p.field(x)
    J = np.empty((p.dim, p.dim))
    for j in range(p.dim):
        e = np.zeros(p.dim)
        e[j] = h
        forward = p.field(x + e)
        backward = p.field(x - e)
        J[:, j] = (forward - backward) / (2 * h)
        asymmetry = np.max(np.abs((forward - v0) - (v0 - backward))) / h
        if asymmetry > asymmetry_tol * (1 + np.max(np.abs(J[:, j]))):
            raise NonSmoothError("One-sided differences disagree by %g along coordinate %d" % (asymmetry, j))
    return J


class LyapunovCertificate:
    """Quadratic Lyapunov function V(x) = (x - x*)^T H (x - x*) with H J + J^T H <= -2 gamma H"""

    def __init__(self, H, gamma, kernel_basis, margin, x_star=None):
        self.H = H
        self.gamma = gamma
        self.kernel_basis = kernel_basis
        self.margin = margin
        self.x_star = np.zeros(H.shape[0]) if x_star is None else as_point(x_star, H.shape[0])

    def value(self, x):
        w = as_point(x, self.H.shape[0]) - self.x_star
        return float(w @ self.H @ w)

    def to_dict(self):
        return {"gamma": self.gamma, "margin": self.margin, "kernel_dim": int(self.kernel_basis.shape[1]),
                "H": self.H.tolist(), "x_star": self.x_star.tolist()}

    def __repr__(self):
        return "LyapunovCertificate(gamma=%g, kernel_dim=%d)" % (self.gamma, self.kernel_basis.shape[1])


def solve_transverse_lyapunov(report, x_star=None, intersection_dim=None, tol=1e-10):
    """Blockwise Lyapunov certificate: H = I on each principal plane and on unpaired directions, 0 elsewhere.

    gamma is the smallest decay rate among the blocks: sin^2 on a principal plane, 1 on unpaired directions. The
    kernel of H holds the intersection directions and the directions orthogonal to both tangent spaces, where J = 0.

    Without intersection_dim every angle below the transversality threshold is read as an intersection direction. The
    sets are still rejected as tangential when nothing transverse remains (for instance two coincident lines) or when
    the smallest transverse angle gives a rate sin^2 that the re-verification cannot tell from zero.

    Args:
        report (SpectralReport): Output of jacobian_at_feasible.
        x_star (array-like): The feasible point (default: origin).
        intersection_dim (int): Dimension of the tangent space of the intersection, if known. More zero angles than
            this means the sets meet tangentially.
        tol (float): Tolerance of the re-verification.

    Returns:
        LyapunovCertificate: The certificate.

    Raises:
        NotTransversalError: If the tangent spaces meet tangentially.

    """
    if intersection_dim is not None and report.intersection_dim > intersection_dim:
        raise NotTransversalError("%d zero principal angles for an intersection of dimension %d" %
                                  (report.intersection_dim, intersection_dim))
    m = report.dim
    if not report.planes and report.unpaired.shape[1] == 0:
        raise NotTransversalError("No transverse directions: %d zero principal angles in dimension %d" %
                                  (report.intersection_dim, m))
    H = np.zeros((m, m))
    rates = []
    for Q, theta in zip(report.planes, report.angles):
        H += Q @ Q.T
        rates.append(math.sin(theta) ** 2)
    if report.unpaired.shape[1]:
        H += report.unpaired @ report.unpaired.T
        rates.append(1.0)
    gamma = min(rates)
    if gamma <= tol:
        raise NotTransversalError("Smallest transverse angle %g gives a decay rate %g indistinguishable from zero" %
                                  (min(report.angles), gamma))
    J = report.J
    S = H @ J + J.T @ H + 2 * gamma * H
    margin = float(np.max(np.linalg.eigvalsh((S + S.T) / 2)))
    if margin > tol:
        raise VerificationError("Lyapunov inequality violated by %g" % margin)
    kernel = null_space(H, rcond=1e-8)
    return LyapunovCertificate(H, gamma, kernel, margin, x_star)


LyapunovMargins = namedtuple("LyapunovMargins", ["holds", "worst_margin", "violations", "envelope_holds", "c",
                                                 "checked", "excluded"])


def verify_discrete_lyapunov(iterates, cert, eps, c=None, radius=None, rel_tol=1e-12):
    """Check V(x_{k+1}) <= (1 - c eps) V(x_k) along iterates, and the envelope V(x_k) <= e^{-c k eps} V(x_0).

    Args:
        iterates (Trajectory or array-like): Consecutive iterates.
        cert (LyapunovCertificate): The certificate.
        eps (float): The step.
        c (float): Rate (default gamma / 2).
        radius (float): Validity radius around x*. Pairs with an iterate farther away are excluded.
        rel_tol (float): Relative slack of each comparison.

    Returns:
        LyapunovMargins: Whether every pair holds, the worst margin V_{k+1} - (1 - c eps) V_k relative to V_k, the
        number of violations, whether the envelope holds, c and the counts of checked and excluded pairs.

    """
    points = iterates.points if hasattr(iterates, "points") else np.asarray(iterates, dtype=float)
    c = cert.gamma / 2 if c is None else c
    values = np.array([cert.value(x) for x in points])
    inside = np.ones(len(points), dtype=bool)
    if radius is not None:
        inside = np.linalg.norm(points - cert.x_star, axis=1) <= radius
    worst = -math.inf
    violations = checked = excluded = 0
    for k in range(len(points) - 1):
        if not (inside[k] and inside[k + 1]):
            excluded += 1
            continue
        checked += 1
        margin = values[k + 1] - (1 - c * eps) * values[k]
        if values[k] > 0:
            worst = max(worst, margin / values[k])
        if margin > rel_tol * values[k]:
            violations += 1
    envelope = values[0] * np.exp(-c * eps * np.arange(len(points)))
    envelope_holds = bool(np.all(values[inside] <= envelope[inside] * (1 + 1e-9) + 1e-300))
    if violations:
        logger.warning("Discrete Lyapunov inequality violated at %d of %d steps", violations, checked)
    return LyapunovMargins(violations == 0, worst if checked else math.nan, violations, envelope_holds, c, checked,
                           excluded)


def linearized_iterates(J, x_star, x0, eps, n):
    """Iterates of the linear map x* + (I + eps J)(x - x*)"""
    x_star = as_point(x_star)
    M = np.eye(len(x_star)) + eps * J
    w = as_point(x0, len(x_star)) - x_star
    out = [x_star + w]
    for _ in range(n):
        w = M @ w
        out.append(x_star + w)
    return np.asarray(out)


class TubeSpec:
    """A tube {x : dist(x, A) <= r, dist(R_A x, B) <= r} with angle floor theta0 and rate sigma = sin^2(theta0) / 2"""

    def __init__(self, radius, theta0):
        if not radius > 0:
            raise ValueError("The tube radius must be positive")
        if not theta0 > 0:
            raise ValueError("The angle floor must be positive")
        self.radius = float(radius)
        self.theta0 = float(theta0)

    @property
    def sigma(self):
        return 0.5 * math.sin(self.theta0) ** 2

    def __repr__(self):
        return "TubeSpec(radius=%g, theta0=%g)" % (self.radius, self.theta0)


def in_tube(p, tube, x):
    """Whether a point lies in the tube of a problem"""
    x = as_point(x, p.dim)
    return p.A.distance(x) <= tube.radius and p.B.distance(p.A.reflect(x)) <= tube.radius


TubeReport = namedtuple("TubeReport", ["holds", "worst_margin", "checked", "excluded", "no_revisit"])


def verify_tube_decay(p, tube, traj, rel_tol=1e-4, floor=1e-10):
    """Check dE/dt <= -sigma g^2 for E = g^2 / 2 along a finely sampled trajectory.

    Derivatives are centered differences. Samples outside the tube are excluded and counted. Samples whose gap is
    below `floor` are skipped. Also checks that E never climbs back above a level it has gone below.

    Returns:
        TubeReport: holds, worst margin (dE/dt + sigma g^2) / g^2, counts and the no-revisit verdict.

    """
    t = traj.times
    g = traj.gaps
    E = 0.5 * g ** 2
    sigma = tube.sigma
    worst = -math.inf
    checked = excluded = 0
    holds = True
    for i in range(1, len(t) - 1):
        if g[i] <= floor:
            continue
        if not in_tube(p, tube, traj.points[i]):
            excluded += 1
            continue
        checked += 1
        dE = (E[i + 1] - E[i - 1]) / (t[i + 1] - t[i - 1])
        margin = dE + sigma * g[i] ** 2
        worst = max(worst, margin / g[i] ** 2)
        if margin > rel_tol * g[i] ** 2:
            holds = False
    running = np.minimum.accumulate(E)
    no_revisit = bool(np.all(E <= running * (1 + 1e-9) + floor ** 2))
    if excluded:
        logger.info("%d samples left the tube and were not checked", excluded)
    return TubeReport(holds and no_revisit, worst if checked else math.nan, checked, excluded, no_revisit)
