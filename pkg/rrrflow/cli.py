"""Command line entry point: rrrflow <command> [options]"""
import argparse
import io
import json
import logging
import math
import os
import sys

import numpy as np
import pandas as pd

from . import __version__
from .checks import run_selftest
from .exceptions import ConfigError, DistinctnessError, RRRFlowError
from .flow import FlowProblem, integrate_flow, fit_decay_rate, hitting_convergence_study, gap
from .instances import get_instance, feasible_point, instance_names
from .ledm import build_instance, entry_probability, records_frame, euler_fit, heatmap_sweep
from .linearize import tangent_projector, jacobian_at_feasible
from .meso import beta_sweep, estimate_kernel, support_digraph, scc_condense, verify_reachability, vertex_cells
from .store import RunConfig, ResultStore, commit_file, frame_to_csv_bytes, to_json_bytes
from .wdomains import descent_chain, capture_time_bound, sliding_interfaces

logger = logging.getLogger(__name__)


def _load_problem(name):
    """Resolve a registered name or a JSON problem file into (problem, default start, feasible point)"""
    if name in instance_names():
        problem, x0 = get_instance(name)
        return problem, x0, feasible_point(name)
    if os.path.isfile(name):
        return FlowProblem.load(name), None, None
    raise ConfigError("Invalid configuration", [("params.instance", "unknown instance %r (expected a file or one of "
                                                                     "%s)" % (name, ", ".join(instance_names())))])


def _problem(params, need_finite=False):
    """The problem and start point of a configuration"""
    problem, x0, _ = _load_problem(params["instance"])
    if need_finite and not problem.is_finite:
        raise ConfigError("Invalid configuration", [("params.instance", "this command needs two finite sets")])
    if params.get("x0") is not None:
        x0 = np.asarray(params["x0"], dtype=float)
    if x0 is None or len(x0) != problem.dim:
        raise ConfigError("Invalid configuration", [("params.x0", "a start point of dimension %d is needed" %
                                                     problem.dim)])
    return problem, x0


def _table(name, frame, config):
    if config.format == "json":
        return name + ".json", to_json_bytes(frame.to_dict(orient="records"))
    return name + ".csv", frame_to_csv_bytes(frame)


def run_linearize(config):
    params = config.params
    if params["theta"] is not None:
        cases = [("theta-lines", get_instance("theta-lines", theta=math.radians(t))[0], np.zeros(2))
                 for t in params["theta"]]
    else:
        problem, _, point = _load_problem(params["instance"])
        if params["point"] is not None:
            point = np.asarray(params["point"], dtype=float)
        if point is None or len(point) != problem.dim:
            raise ConfigError("Invalid configuration", [("params.point", "a feasible point of dimension %d is needed"
                                                         % problem.dim)])
        cases = [(params["instance"], problem, point)]
    reports, rows = [], []
    for name, problem, point in cases:
        report = jacobian_at_feasible(tangent_projector(problem.A, point), tangent_projector(problem.B, point))
        reports.append({"instance": name, "point": np.asarray(point).tolist(), **report.to_dict()})
        for z in report.eigenvalues:
            rows.append({"instance": name, "angles_deg": " ".join("%.12g" % a for a in reports[-1]["angles_deg"]),
                         "re": float(z.real), "im": float(z.imag)})
    artifacts = {"spectral.json": to_json_bytes({"reports": reports})}
    primary = "spectral.json"
    if config.format == "csv":
        name, data = _table("eigenvalues", pd.DataFrame(rows, columns=["instance", "angles_deg", "re", "im"]), config)
        artifacts[name] = data
    summary = {"angles_deg": [r["angles_deg"] for r in reports], "eigenvalues": [r["eigenvalues"] for r in reports],
               "passed": all(all(c["passed"] for c in r["checks"].values()) for r in reports)}
    return artifacts, primary, summary


def run_flow(config):
    params = config.params
    problem, x0 = _problem(params)
    traj = integrate_flow(problem, x0, params["T"], params["mode"], params["step"])
    name, data = _table("trajectory", traj.to_frame(), config)
    artifacts = {name: data}
    try:
        fit = fit_decay_rate(traj, params["window"]).to_dict()
    except ValueError as e:
        logger.info("No decay fit: %s", e)
        fit = None
    artifacts["flow.json"] = to_json_bytes({"trajectory": traj.to_dict(), "decay_fit": fit})
    return artifacts, name, {"t_end": traj.t_end, "end": traj.end.tolist(), "gap_end": float(traj.gaps[-1]),
                             "decay_fit": fit}


def run_hitting(config):
    params = config.params
    problem, x0 = _problem(params)
    study = hitting_convergence_study(problem, x0, params["delta"], params["eps"], params["k_max"], params["mode"])
    record = study.record
    name, data = _table("hitting", record.to_frame(), config)
    summary = {"T_star": record.T_star, "slope": None if math.isnan(study.slope) else study.slope,
               "g0": gap(problem, x0), "bounded": study.bounded,
               "k_ratio": None if math.isnan(study.k_ratio) else study.k_ratio, "growth_ok": study.growth_ok}
    return {name: data, "hitting.json": to_json_bytes({**record.to_dict(), **summary})}, name, summary


def run_wdomain(config):
    params = config.params
    problem, x0 = _problem(params, need_finite=True)
    part = problem.partition
    bounds = part.default_bounds(params["margin"])
    cells = [{"cell": str(c), "a": part.A[c.a_index].tolist(), "b": part.B[c.b_index].tolist(),
              "velocity": part.velocity(c).tolist(), "d": part.d(c), "solution": part.is_solution(c)}
             for c in part.nonempty_cells(bounds)]
    artifacts = {}
    name, data = _table("cells", pd.DataFrame(cells, columns=["cell", "a", "b", "velocity", "d", "solution"]), config)
    artifacts[name] = data
    try:
        chain = descent_chain(part, part.cell_of(x0), bounds)
        chain_dict = chain.to_dict()
    except DistinctnessError as e:
        logger.warning("No descent chain: %s", e)
        chain, chain_dict = None, {"error": str(e)}
    traj = integrate_flow(problem, x0, params["T"], mode="piecewise")
    capture = capture_time_bound(sliding_interfaces(part, traj, bounds), problem=problem, x0=x0, T=params["T"])
    trajectory_name, data = _table("trajectory", traj.to_frame(), config)
    artifacts[trajectory_name] = data
    result = {"chain": chain_dict, "capture": None if capture is None else capture.to_dict(),
              "trajectory": traj.to_dict()}
    artifacts["wdomain.json"] = to_json_bytes(result)
    summary = {"cells": len(cells), "chain_length": None if chain is None else len(chain),
               "events": [e.kind for e in traj.events], "end": traj.end.tolist(),
               "capture": result["capture"]}
    return artifacts, trajectory_name, summary


def _default_box(part):
    pts = np.vstack([part.A.points, part.B.points])
    return np.stack([pts.min(axis=0) - 1.0, pts.max(axis=0) + 1.0], axis=1)


def run_meso(config):
    params = config.params
    problem = _load_problem(params["instance"])[0]
    if not problem.is_finite:
        raise ConfigError("Invalid configuration", [("params.instance", "this command needs two finite sets")])
    part = problem.partition
    box = _default_box(part) if params["box"] is None else np.asarray(params["box"], dtype=float).reshape(-1, 2)
    if box.shape[0] != part.dim:
        raise ConfigError("Invalid configuration", [("params.box", "needs %d (lower, upper) pairs" % part.dim)])
    sweep = beta_sweep(part, params["beta"], box, params["samples"], params["seeds"], params["tau"],
                       params["percolate"], params["nontrivial_only"])
    artifacts = {}
    sweep_name, data = _table("sweep", sweep, config)
    artifacts[sweep_name] = data
    cells = vertex_cells(part, box)
    K = estimate_kernel(part, min(params["beta"]), box, params["samples"], params["seeds"][0], cells=cells)
    name, data = _table("kernel", K.to_frame(), config)
    artifacts[name] = data
    G = support_digraph(K, params["tau"])
    condensed = scc_condense(G)
    buffer = io.BytesIO()
    G.write_edgelist(buffer)
    artifacts["support.edgelist"] = buffer.getvalue()
    summary = {"cells": len(cells), "components": condensed.condensation.number_of_nodes(),
               "reachability_ok": verify_reachability(G, condensed),
               "phi": sweep["phi"].tolist(), "monotonicity_violations": sweep.attrs["monotonicity_violations"],
               "low_confidence_rows": [str(c) for c in K.low_confidence]}
    artifacts["meso.json"] = to_json_bytes(summary)
    return artifacts, sweep_name, summary


def _instance_overrides(params):
    return {key: params[key] for key in ("k_max", "delta_enter", "delta_solve") if key in params}


def run_ledm(config):
    params = config.params
    instance = build_instance(params["m"], **_instance_overrides(params))
    records, entry = [], {}
    for beta in params["beta"]:
        estimate = entry_probability(instance, beta, params["trials"], seed=config.seed)
        records.extend(estimate.records)
        entry[str(beta)] = {"p_enter": estimate.p_hat, "lower": estimate.lower, "upper": estimate.upper}
    name, data = _table("results", records_frame(records), config)
    try:
        fit = euler_fit(records, params["beta_max"])
        fit_dict = {"a": fit.a, "b": fit.b, "r2": fit.r2, "table": fit.table.to_dict(orient="records")}
    except ValueError as e:
        logger.warning("Euler fit skipped: %s", e)
        fit_dict = {"error": str(e)}
    summary = {"p_enter": entry, "euler_fit": fit_dict}
    return {name: data, "ledm.json": to_json_bytes(summary)}, name, summary


def run_ledm_heatmap(config):
    params = config.params
    table = heatmap_sweep(params["m"], params["beta"], params["trials"], seed=config.seed, bins=params["bins"],
                          burn_in=params["burn_in"], **_instance_overrides(params))
    name, data = _table("heatmap", table, config)
    return {name: data}, name, {"rows": len(table)}


def run_selftest_command(config):
    results = run_selftest(quick=config.params["quick"])
    frame = pd.DataFrame(results, columns=["name", "passed", "detail", "seconds"])
    name, data = _table("selftest", frame, config)
    summary = {"passed": all(r.passed for r in results),
               "checks": {r.name: {"passed": r.passed, "detail": r.detail} for r in results}}
    return {name: data}, name, summary


_handlers = {"linearize": run_linearize, "flow": run_flow, "hitting": run_hitting, "wdomain": run_wdomain,
             "meso": run_meso, "ledm-run": run_ledm, "ledm-heatmap": run_ledm_heatmap,
             "selftest": run_selftest_command}


def dispatch(config, store=None):
    """Run a configuration and persist its artifacts.

    With ``config.out`` the primary artifact is written to that path with a sidecar manifest; otherwise every
    artifact goes to a new run directory of the result store. Self-tests are only persisted when ``out`` is given.

    Returns:
        tuple: (exit status, summary dict).

    """
    artifacts, primary, summary = _handlers[config.command](config)
    if config.out is not None:
        summary["output"] = commit_file(config.out, artifacts[primary], config)
    elif config.command != "selftest":
        summary["output"] = (store or ResultStore()).commit(config, artifacts)
    status = 0
    if config.command == "selftest" and not summary["passed"]:
        status = 1
    return status, summary


def _json_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=VALUE, got %r" % text)
    key, value = text.split("=", 1)
    return key, _json_value(value)


def _common():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its fields")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", help="write the main table to this path instead of the result store")
    common.add_argument("--format", choices=["csv", "json"], help="table format (default csv)")
    common.add_argument("--param", action="append", type=_parse_param, default=[], metavar="KEY=VALUE",
                        help="override a parameter, VALUE parsed as JSON when possible")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug messages")
    return common


def build_parser():
    parser = argparse.ArgumentParser(prog="rrrflow", description="Numerical laboratory for the RRR iteration and its "
                                                                 "flow limit")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    common = _common()
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("linearize", parents=[common], help="spectrum of the Jacobian at a feasible point")
    p.add_argument("--instance", dest="param_instance")
    p.add_argument("--point", dest="param_point", type=float, nargs="+")
    p.add_argument("--theta", dest="param_theta", type=float, nargs="+", help="angles in degrees of line pairs")

    p = sub.add_parser("flow", parents=[common], help="integrate the flow and fit its decay")
    p.add_argument("--instance", dest="param_instance")
    p.add_argument("--x0", dest="param_x0", type=float, nargs="+")
    p.add_argument("--T", dest="param_T", type=float)
    p.add_argument("--mode", dest="param_mode", choices=["smooth", "piecewise"])
    p.add_argument("--step", dest="param_step", type=float)

    p = sub.add_parser("hitting", parents=[common], help="hitting-time convergence across steps")
    p.add_argument("--instance", dest="param_instance")
    p.add_argument("--x0", dest="param_x0", type=float, nargs="+")
    p.add_argument("--delta", dest="param_delta", type=float)
    p.add_argument("--eps", dest="param_eps", type=float, nargs="+")
    p.add_argument("--kmax", dest="param_k_max", type=int)
    p.add_argument("--mode", dest="param_mode", choices=["smooth", "piecewise"])

    p = sub.add_parser("wdomain", parents=[common], help="cells, descent chain and Filippov trajectory")
    p.add_argument("--instance", dest="param_instance")
    p.add_argument("--x0", dest="param_x0", type=float, nargs="+")
    p.add_argument("--T", dest="param_T", type=float)

    p = sub.add_parser("meso", parents=[common], help="transition kernel and order parameter sweep")
    p.add_argument("--instance", dest="param_instance")
    p.add_argument("--beta", dest="param_beta", type=float, nargs="+")
    p.add_argument("--box", dest="param_box", type=float, nargs="+", help="lower upper pairs per coordinate")
    p.add_argument("--samples", dest="param_samples", type=int)
    p.add_argument("--seeds", dest="param_seeds", type=int, nargs="+")
    p.add_argument("--tau", dest="param_tau", type=float)
    p.add_argument("--percolate", dest="param_percolate", action="store_true", default=None)

    p = sub.add_parser("ledm", help="LEDM factorization experiments")
    ledm_sub = p.add_subparsers(dest="ledm_command", metavar="ledm-command")
    ledm_sub.required = True
    q = ledm_sub.add_parser("run", parents=[common], help="two-phase runs and the Euler fit")
    q.add_argument("--m", dest="param_m", type=int)
    q.add_argument("--beta", dest="param_beta", type=float, nargs="+")
    q.add_argument("--trials", dest="param_trials", type=int)
    q.add_argument("--kmax", dest="param_k_max", type=int)
    q.add_argument("--delta-enter", dest="param_delta_enter", type=float)
    q.add_argument("--delta-solve", dest="param_delta_solve", type=float)
    q = ledm_sub.add_parser("heatmap", parents=[common], help="entry probability and recurrence over (m, beta)")
    q.add_argument("--m", dest="param_m", type=int, nargs="+")
    q.add_argument("--beta", dest="param_beta", type=float, nargs="+")
    q.add_argument("--trials", dest="param_trials", type=int)
    q.add_argument("--kmax", dest="param_k_max", type=int)
    q.add_argument("--bins", dest="param_bins", type=int)
    q.add_argument("--burn-in", dest="param_burn_in", type=int)

    p = sub.add_parser("selftest", parents=[common], help="run the property checks")
    p.add_argument("--full", dest="param_quick", action="store_false", default=None,
                   help="use the full sample and instance counts")
    return parser


def config_from_args(args):
    """Merge the configuration file, the parameter overrides and the flags of parsed arguments"""
    command = args.command if args.command != "ledm" else "ledm-" + args.ledm_command
    params = dict(args.param)
    params.update({k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_") and v is not None})
    overrides = {"command": command, "seed": args.seed, "out": args.out, "format": args.format, "params": params}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig.from_dict({}, **overrides)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level={0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except ConfigError as e:
        print("rrrflow: %s" % e, file=sys.stderr)
        return 2
    except OSError as e:
        print("rrrflow: cannot read configuration: %s" % e, file=sys.stderr)
        return 2
    try:
        status, summary = dispatch(config)
    except ConfigError as e:
        print("rrrflow: %s" % e, file=sys.stderr)
        return 2
    except (RRRFlowError, ValueError, ArithmeticError, OSError) as e:
        logger.debug("Run failed", exc_info=True)
        print("rrrflow: %s: %s" % (type(e).__name__, e), file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, default=str))
    return status


if __name__ == '__main__':
    sys.exit(main())
