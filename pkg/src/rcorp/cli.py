"""Command-line front end.

Commands: check, synthesize, verify, simulate, robustness, reproduce.
Exit codes: 0 success, 1 usage/configuration error, 2 numerical
infeasibility, 3 failed claim in a reproduction run.  Set RCORP_LOG to a
logging level name (DEBUG, INFO, ...) for diagnostics.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cases
from .assembly import GainSet, assemble_global, assemble_local
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    NumericallyInfeasible,
    RcorpError,
)
from .lmi import problem_summary
from .plant import apply_uncertainty
from .synthesis import (
    certificate_problem,
    check_certificate,
    global_design_problem,
    local_design_problem,
    synthesize_acyclic,
    synthesize_global,
    synthesize_local,
)
from .verification import (
    evaluate_conditions,
    is_schur,
    membership,
    robustness_sample,
    simulate,
    solve_regulator,
    suggested_horizon,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_CLAIM_FAILED = 3


def _out_dir(args, config: RunConfig | None) -> Path:
    out = args.out or (config.out_dir if config else None) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> RunConfig:
    return load_config(args.config)


def _load_gains(args) -> GainSet:
    payload = json.loads(Path(args.gains).read_text())
    return GainSet.from_payload(payload)


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2))
    print(f"wrote {path}")


def _save_csv(path: Path, matrix: np.ndarray):
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(np.atleast_2d(matrix).tolist())


def cmd_check(args) -> int:
    config = _load(args)
    model = config.build_model()
    im = config.build_internal_model(model)
    graph = config.build_graph()
    results = evaluate_conditions(graph, model, im)
    labels = {
        "spanning_tree": "condition 1 (spanning tree)",
        "exosystem_antistable": "condition 2 (antistable exosystem)",
        "internal_model": "condition 3 (internal model)",
        "transmission_rank": "condition 4 (transmission rank)",
        "agent_stabilizable": "condition 5 (agent stabilizability)",
    }
    all_ok = True
    for key, (ok, detail) in results.items():
        all_ok &= ok
        print(f"{labels[key]}: {'PASS' if ok else 'FAIL'}  [{detail}]")
    if args.dump_matrices:
        gm = config.build_graph_matrices(model)
        ga = assemble_global(model, im, gm)
        out = _out_dir(args, config)
        for name, mat in (("A", ga.A), ("B", ga.B), ("T", ga.T),
                          ("F", gm.F), ("FA", gm.FA), ("W", gm.W)):
            _save_csv(out / f"{name}.csv", mat)
        print(f"wrote stacked matrices to {out}")
    return EXIT_OK if all_ok else EXIT_USAGE


def _conditions_gate(config: RunConfig, force: bool) -> bool:
    model = config.build_model()
    results = evaluate_conditions(
        config.build_graph(), model, config.build_internal_model(model)
    )
    bad = [k for k, (ok, _) in results.items() if not ok]
    if bad and not force:
        print(f"solvability conditions failing: {bad} (use --force to proceed)")
        return False
    if bad:
        log.warning("proceeding despite failing conditions: %s", bad)
    return True


def cmd_synthesize(args) -> int:
    config = _load(args)
    if not _conditions_gate(config, args.force):
        return EXIT_USAGE
    model = config.build_model()
    im = config.build_internal_model(model)
    gm = config.build_graph_matrices(model)
    path = args.path or config.synthesis.get("path", "global")
    r = config.synthesis.get("r")
    out = _out_dir(args, config)

    if args.dump_lmi:
        _dump_lmi(Path(args.dump_lmi), path, model, im, gm, r, args)

    meta = {"path": path}
    try:
        if path == "global":
            ga = assemble_global(model, im, gm)
            result = synthesize_global(ga)
            gains = result.gains
            meta.update(margins=[result.margin], radius=result.radius)
        elif path == "local":
            result = synthesize_local(model, im, gm, r=r)
            gains = result.gains
            meta.update(margins=list(result.margins), r=list(result.r),
                        radius=result.radius)
        elif path == "acyclic":
            gains = synthesize_acyclic(model, im, gm)
            ga = assemble_global(model, im, gm)
            _, radius = is_schur(ga.A + ga.B @ gains.dense(ga.dims))
            meta.update(radius=radius)
        elif path == "check":
            if not args.gains:
                print("--gains is required for the certificate path")
                return EXIT_USAGE
            gains = _load_gains(args)
            la = assemble_local(model, im)
            report = check_certificate(la, gains, gm, r=r)
            payload = {
                "passed": report.passed,
                "r": list(report.r),
                "lyapunov_margin": report.lyapunov_margin,
                "agents": [
                    {"index": a.index, "feasible": a.feasible, "margin": a.margin}
                    for a in report.agents
                ],
            }
            _write_json(out / "certificate.json", payload)
            return EXIT_OK if report.passed else EXIT_INFEASIBLE
        else:  # pragma: no cover - argparse restricts choices
            raise ConfigError(f"unknown synthesis path {path!r}")
    except NumericallyInfeasible as exc:
        print(f"numerically infeasible: {exc}")
        return EXIT_INFEASIBLE

    payload = gains.to_payload()
    payload["meta"] = meta
    _write_json(out / "gains.json", payload)
    print(f"synthesis path {path}: radius {meta.get('radius')}")
    return EXIT_OK


def _dump_lmi(path: Path, mode: str, model, im, gm, r, args):
    """Diagnostic dump of the posed feasibility problems."""
    problems = []
    if mode == "global":
        variables, constraints = global_design_problem(assemble_global(model, im, gm))
        problems.append({"name": "global design",
                         **problem_summary(variables, constraints)})
    elif mode in ("local", "check"):
        r_val = r if r is not None else gm.r_threshold
        for la in assemble_local(model, im):
            r_i = r_val if np.isscalar(r_val) else r_val[la.index]
            if mode == "local":
                variables, constraints = local_design_problem(la, gm, r_i)
            else:
                gains = _load_gains(args)
                variables, constraints = certificate_problem(
                    la, gains.agent(la.index), gm, r_i
                )
            problems.append({"name": f"agent {la.index}",
                             **problem_summary(variables, constraints)})
    path.write_text(json.dumps({"problems": problems}, indent=2))
    print(f"wrote LMI diagnostics to {path}")


def cmd_verify(args) -> int:
    config = _load(args)
    model = config.build_model()
    im = config.build_internal_model(model)
    gm = config.build_graph_matrices(model)
    ga = assemble_global(model, im, gm)
    la = assemble_local(model, im)
    gains = _load_gains(args)
    channels = config.build_channels(model)
    delta = config.build_delta(model)

    report = membership(ga, la, gains, gm)
    payload = {"membership": report.as_dict()}

    A_g = ga.A + ga.B @ gains.dense(ga.dims)
    stable, radius = is_schur(A_g)
    payload["radius"] = radius
    if stable:
        reg = solve_regulator(ga, gains, channels.E, channels.F_ref, delta=delta)
        payload["regulator"] = {
            "sylvester_residual": reg.sylvester_residual,
            "output_residual": reg.output_residual,
        }
        horizon = config.simulation.get("horizon", suggested_horizon(radius))
        rng = np.random.default_rng(config.simulation.get("seed", config.seed))
        x0 = config.simulation.get(
            "x0", [rng.standard_normal(ag.n).tolist() for ag in model.agents]
        )
        z0 = config.simulation.get(
            "z0", [np.zeros(im.n_z).tolist() for _ in model.agents]
        )
        v0 = config.simulation.get("v0", np.ones(model.exo.n0).tolist())
        sim_model = model if delta is None else apply_uncertainty(model, delta)
        trace = simulate(sim_model, im, gm, gains, channels.E, channels.F_ref,
                         x0, z0, v0, horizon)
        payload["simulation"] = {
            "horizon": horizon,
            "final_error": float(trace.error_norms[-1]),
            "peak_error": float(trace.error_norms.max()),
        }
    out = _out_dir(args, config)
    _write_json(out / "verify.json", payload)
    chain = payload["membership"]
    print("membership:", ", ".join(f"{k}={v['status']}" for k, v in chain.items()))
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args)
    model = config.build_model()
    im = config.build_internal_model(model)
    gm = config.build_graph_matrices(model)
    gains = _load_gains(args)
    channels = config.build_channels(model)
    delta = config.build_delta(model)
    model_sim = model if delta is None else apply_uncertainty(model, delta)
    horizon = args.horizon or config.simulation.get("horizon", 200)
    seed = args.seed if args.seed is not None else config.simulation.get(
        "seed", config.seed
    )
    rng = np.random.default_rng(seed)
    x0 = config.simulation.get(
        "x0", [rng.standard_normal(ag.n).tolist() for ag in model.agents]
    )
    z0 = config.simulation.get(
        "z0", [np.zeros(im.n_z).tolist() for _ in model.agents]
    )
    v0 = config.simulation.get("v0", np.ones(model.exo.n0).tolist())
    trace = simulate(model_sim, im, gm, gains, channels.E, channels.F_ref,
                     x0, z0, v0, horizon)

    out = _out_dir(args, config)
    path = out / "trace.csv"
    header = ["t"]
    for i, ag in enumerate(model.agents):
        header += [f"x{i + 1}_{k + 1}" for k in range(ag.n)]
        header += [f"z{i + 1}_{k + 1}" for k in range(im.n_z)]
    header += [f"err{i + 1}" for i in range(model.n_agents)]
    err_per_agent = np.linalg.norm(trace.e, axis=2)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(horizon + 1):
            row = [t]
            for i in range(model.n_agents):
                row += trace.x[i][t].tolist() + trace.z[i][t].tolist()
            row += err_per_agent[t].tolist()
            writer.writerow(row)
    print(f"wrote {path}")
    print(f"final tracking error: {trace.error_norms[-1]:.6e}")
    return EXIT_OK


def cmd_robustness(args) -> int:
    config = _load(args)
    model = config.build_model()
    im = config.build_internal_model(model)
    gm = config.build_graph_matrices(model)
    gains = _load_gains(args)
    seed = args.seed if args.seed is not None else config.seed
    report = robustness_sample(model, im, gm, gains, rho=args.rho,
                               n_samples=args.samples, seed=seed)
    out = _out_dir(args, config)
    _write_json(out / "robustness.json", report.as_dict())
    print(f"fraction Schur: {report.fraction_schur:.3f}  "
          f"max output residual: {report.max_output_residual}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    transcript = cases.reproduce(args.case)
    print(f"case {args.case}:")
    for line in transcript.lines():
        print(line)
    if not transcript.passed:
        failed = [c.claim for c in transcript.checks if not c.passed]
        print(f"FAILED claims: {failed}")
        return EXIT_CLAIM_FAILED
    print("all claims hold")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcorp",
        description="Synthesis and verification for robust cooperative "
                    "output regulation of discrete-time multi-agent systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, gains=False):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        if gains:
            p.add_argument("--gains", required=True, help="gain-set JSON file")

    p = sub.add_parser("check", help="evaluate the five solvability conditions")
    add_common(p)
    p.add_argument("--dump-matrices", action="store_true",
                   help="export stacked matrices as CSV")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synthesize", help="synthesize a stabilizing gain set")
    add_common(p)
    p.add_argument("--path", choices=("global", "local", "acyclic", "check"),
                   default=None, help="synthesis route (default from config)")
    p.add_argument("--gains", default=None,
                   help="gain-set JSON (certificate path only)")
    p.add_argument("--force", action="store_true",
                   help="skip the solvability-condition gate")
    p.add_argument("--dump-lmi", default=None,
                   help="write a JSON diagnostic of the posed programs")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("verify", help="membership, regulation residuals, simulation")
    add_common(p, gains=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="closed-loop trace to CSV")
    add_common(p, gains=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("robustness", help="sampled perturbation study")
    add_common(p, gains=True)
    p.add_argument("--rho", type=float, required=True,
                   help="uniform perturbation half-width")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("reproduce", help="re-derive a bundled case's claims")
    p.add_argument("case", type=int, choices=cases.available_cases())
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("RCORP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericallyInfeasible as exc:
        print(f"numerically infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RcorpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
