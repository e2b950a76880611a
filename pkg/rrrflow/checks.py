"""Property checks run by ``rrrflow selftest``.

Each check returns (passed, detail). The quick variants shrink sample counts and instance counts but keep every
tolerance.
"""
import logging
import math
import os
import time
from collections import namedtuple

import networkx as nx
import numpy as np

from .flow import (integrate_flow, fit_decay_rate, euler_error_study, crossing_excursion_study,
                   hitting_convergence_study, rrr_step, flow_field)
from .instances import theta_lines, orthogonal_lines, finite_1d, planar_sliding
from .ledm import (build_instance, planted_instance, planted_state, lift, run_two_phase, records_frame,
                   recurrence_index, entry_probability)
from .linearize import (tangent_projector, jacobian_at_feasible, finite_difference_jacobian,
                        solve_transverse_lyapunov, verify_discrete_lyapunov)
from .meso import KernelMatrix, estimate_kernel, percolate_edges, percolation_uniforms, scc_condense, \
    verify_reachability
from .store import frame_to_csv_bytes, verify_manifest
from .wdomains import CellId, convergent_check, sliding_coefficient, sliding_velocity, random_instance, \
    pair_distance_gap, descent_chain, capture_time_bound, sliding_interfaces

logger = logging.getLogger(__name__)

CheckResult = namedtuple("CheckResult", ["name", "passed", "detail", "seconds"])

GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "golden")

ANGLES_DEG = [15, 30, 45, 60, 75, 90]


def _line_jacobian(theta):
    p = theta_lines(theta)
    origin = np.zeros(2)
    report = jacobian_at_feasible(tangent_projector(p.A, origin), tangent_projector(p.B, origin))
    return p, report


def check_spectral_identity(quick=True):
    worst_eig = worst_fd = 0.0
    for deg in ANGLES_DEG:
        theta = math.radians(deg)
        p, report = _line_jacobian(theta)
        s, c = math.sin(theta), math.cos(theta)
        expected = np.array(sorted([complex(-s * s, -s * c), complex(-s * s, s * c)], key=lambda z: z.imag))
        found = np.array(sorted(report.eigenvalues, key=lambda z: z.imag))
        worst_eig = max(worst_eig, float(np.max(np.abs(found - expected))))
        worst_fd = max(worst_fd, float(np.max(np.abs(finite_difference_jacobian(p, np.zeros(2)) - report.J))))
    return worst_eig <= 1e-8 and worst_fd <= 1e-5, "eigenvalue error %.2e, finite-difference error %.2e" % (
        worst_eig, worst_fd)


def check_exponential_decay(quick=True):
    worst = 0.0
    for deg in (ANGLES_DEG[::2] if quick else ANGLES_DEG):
        theta = math.radians(deg)
        p = theta_lines(theta)
        traj = integrate_flow(p, [0.0, 1e-2], 2.0 if quick else 5.0, mode="smooth")
        fit = fit_decay_rate(traj)
        rate = math.sin(theta) ** 2
        worst = max(worst, abs(fit.mu_hat - rate) / rate)
    return worst <= 0.1, "worst relative rate error %.2e" % worst


def check_euler_order(quick=True):
    df = euler_error_study(orthogonal_lines(), [1.0, 0.0], 2.0, [0.1, 0.05, 0.025, 0.0125])
    ratios = df["ratio"].dropna()
    smooth_ok = bool(((ratios >= 1.7) & (ratios <= 2.3)).all())
    p = planar_sliding()
    crossing = crossing_excursion_study(p, [2.0, -0.5], [0.02, 0.01], n_starts=1000)
    ratio = float(crossing["ratio"].dropna().iloc[0])
    crossing_ok = 3.2 <= ratio <= 4.8
    return smooth_ok and crossing_ok, "smooth ratios %s, crossing ratio %.3f" % (
        ", ".join("%.3f" % r for r in ratios), ratio)


def check_hitting_convergence(quick=True):
    study = hitting_convergence_study(orthogonal_lines(), [1.0, 0.0], 0.1, [0.01, 0.005, 0.0025])
    products = [eps * k for eps, k in study.record.k.items()]
    in_window = all(2.0 <= t <= 2.6 for t in products)
    ratio_ok = 3.5 <= study.k_ratio <= 4.5
    return study.passed and in_window and ratio_ok, "k = %s, ratio %.3f, slope %.3f" % (
        study.record.k, study.k_ratio, study.slope)


def check_discrete_lyapunov(quick=True):
    details = []
    ok = True
    for deg in (45, 90):
        p, report = _line_jacobian(math.radians(deg))
        cert = solve_transverse_lyapunov(report)
        x = np.array([0.3, -0.2])
        iterates = [x]
        for _ in range(500):
            x = rrr_step(p, x, 0.05)
            iterates.append(x)
        margins = verify_discrete_lyapunov(np.asarray(iterates), cert, 0.05)
        ok = ok and margins.holds
        details.append("%d deg: worst %.2e" % (deg, margins.worst_margin))
    return ok, "; ".join(details)


def check_sliding_algebra(quick=True):
    rng = np.random.default_rng(0)
    worst = 0.0
    alpha_ok = True
    tested = 0
    for _ in range(2000 if quick else 10000):
        v1, v2, n = rng.normal(size=(3, 2))
        n = n / np.linalg.norm(n)
        if not convergent_check(v1, v2, n):
            continue
        tested += 1
        worst = max(worst, abs(float(n @ sliding_velocity(v1, v2, n))))
        alpha = sliding_coefficient(v1, v2, n)
        alpha_ok = alpha_ok and 0 < alpha < 1
    trap = sliding_velocity([1.0], [-2.0], [1.0])
    return worst <= 1e-10 and alpha_ok and trap[0] == 0, "%d convergent triples, worst normal speed %.2e" % (
        tested, worst)


def check_descent_chains(quick=True):
    rng = np.random.default_rng(1)
    done = failures = 0
    target = 10 if quick else 100
    while done < target:
        part = random_instance(4, 4, 2, rng)
        if pair_distance_gap(part) <= 1e-9:
            continue
        start = part.cell_of(rng.uniform(-3, 3, size=2))
        chain = descent_chain(part, start)
        done += 1
        verdicts_ok = all(s.verdict_agrees is not False for s in chain.steps)
        if chain.stuck or not chain.strictly_decreasing or not chain.within_bound or not verdicts_ok:
            failures += 1
    return failures == 0, "%d chains, %d failures" % (done, failures)


def check_capture_bound(quick=True):
    p = planar_sliding()
    part = p.partition
    x0 = [2.0, -0.5]
    traj = integrate_flow(p, x0, 20.0, mode="piecewise")
    capture = capture_time_bound(sliding_interfaces(part, traj, part.default_bounds()), problem=p, x0=x0, T=20.0)
    return capture.holds is True, "sliding time %s, bound %s" % (capture.sliding_time, capture.bound)


def check_kernel_exactness(quick=True):
    p = finite_1d()
    n = 20000 if quick else 100000
    K = estimate_kernel(p.partition, 0.5, [[-3.0, 4.0]], n, seed=0)
    trap = CellId(1, 1)
    rows = K.counts[K.index[trap]]
    sigma = math.sqrt(2 / 9 / rows)
    stay = K.entry(trap, trap)
    leave = K.entry(trap, CellId(1, 0))
    i = K.index[CellId(0, 0)]
    identity_ok = K.P[i, i] == 1.0 and np.count_nonzero(K.P[i]) == 1
    ok = abs(stay - 2 / 3) <= 3 * sigma and abs(leave - 1 / 3) <= 3 * sigma and identity_ok
    return ok, "stay %.4f, leave %.4f, sigma %.4f" % (stay, leave, sigma)


def check_graph_laws(quick=True):
    rng = np.random.default_rng(2)
    reach_ok = idem_ok = True
    count = 50 if quick else 200
    for _ in range(count):
        n = int(rng.integers(1, 13))
        G = nx.gnp_random_graph(n, float(rng.uniform(0.05, 0.4)), seed=int(rng.integers(2 ** 31)), directed=True)
        once = scc_condense(G)
        reach_ok = reach_ok and verify_reachability(G, once)
        twice = scc_condense(once.condensation)
        idem_ok = idem_ok and nx.is_isomorphic(once.condensation, twice.condensation)
    coupling_ok = True
    for seed in range(count):
        m = int(rng.integers(2, 8))
        P_lo = rng.random((m, m)) * 0.5
        P_hi = np.minimum(P_lo + rng.random((m, m)) * 0.5, 1.0)
        cells = [CellId(i, 0) for i in range(m)]
        K_lo = KernelMatrix(cells, P_lo, np.ones(m), 0.1, None, np.zeros(m))
        K_hi = KernelMatrix(cells, P_hi, np.ones(m), 0.2, None, np.zeros(m))
        U = percolation_uniforms(m, seed)
        coupling_ok = coupling_ok and percolate_edges(K_lo, seed, U).edges <= percolate_edges(K_hi, seed, U).edges
    return reach_ok and idem_ok and coupling_ok, "reachability %s, idempotence %s, coupling %s" % (
        reach_ok, idem_ok, coupling_ok)


def check_ledm_pipeline(quick=True):
    instance, W, Z = planted_instance(4, r_plus=3)
    planted_norm = float(np.linalg.norm(flow_field(lift(instance), planted_state(instance, W, Z))))
    ledm = build_instance(4, k_max=200 if quick else 20000)
    problem = lift(ledm)
    first = [run_two_phase(ledm, beta, seed, problem=problem) for beta in (0.1, 0.2) for seed in (0, 1)]
    second = [run_two_phase(ledm, beta, seed, problem=problem) for beta in (0.1, 0.2) for seed in (0, 1)]
    identical = frame_to_csv_bytes(records_frame(first)) == frame_to_csv_bytes(records_frame(second))
    return planted_norm <= 1e-10 and identical, "planted field norm %.2e, reproducible %s" % (planted_norm, identical)


def check_estimator_laws(quick=True):
    constant = recurrence_index(np.full(50, 0.3))
    monotone = recurrence_index(np.logspace(0, -5, 40), bins=40, burn_in=0)
    always = entry_probability(build_instance(2, delta_enter=1e3, k_max=5), 0.5, 3).p_hat
    never = entry_probability(build_instance(2, delta_enter=0.0, k_max=5), 0.5, 3).p_hat
    ok = constant == 1.0 and monotone == 0.0 and always == 1.0 and never == 0.0
    return ok, "R constant %g, R monotone %g, p forced %g / %g" % (constant, monotone, always, never)


def check_golden_manifest(quick=True):
    problems = verify_manifest(GOLDEN_DIR)
    return not problems, "; ".join(problems) or "golden run intact"


CHECKS = [
    ("spectral-identity", check_spectral_identity),
    ("exponential-decay", check_exponential_decay),
    ("euler-order", check_euler_order),
    ("hitting-convergence", check_hitting_convergence),
    ("discrete-lyapunov", check_discrete_lyapunov),
    ("sliding-algebra", check_sliding_algebra),
    ("descent-chains", check_descent_chains),
    ("capture-bound", check_capture_bound),
    ("kernel-exactness", check_kernel_exactness),
    ("graph-laws", check_graph_laws),
    ("ledm-pipeline", check_ledm_pipeline),
    ("estimator-laws", check_estimator_laws),
    ("golden-manifest", check_golden_manifest),
]


def run_selftest(quick=True, names=None):
    """Run the property checks, catching their errors as failures.

    Args:
        quick (bool): Use reduced sample and instance counts.
        names (list of str): Subset of checks to run (default: all).

    Returns:
        list of CheckResult: One result per check.

    """
    results = []
    for name, check in CHECKS:
        if names is not None and name not in names:
            continue
        start = time.perf_counter()
        try:
            passed, detail = check(quick)
        except Exception as e:
            logger.exception("Check %s raised", name)
            passed, detail = False, "%s: %s" % (type(e).__name__, e)
        elapsed = time.perf_counter() - start
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, "%s %s (%.2fs): %s", "PASS" if passed else "FAIL", name, elapsed, detail)
        results.append(CheckResult(name, bool(passed), detail, elapsed))
    return results
