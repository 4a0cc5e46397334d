"""``lq-certify`` command line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import audit, bounds, harness
from .core import Dictionary, LqCertifyError, Observation, RecoveryProblem, normalize_columns
from .io import read_matrix_csv, read_vector
from .solvers import SolverConfig, solve_constrained


class CommandError(Exception):
    """Runtime failure reported with exit code 1."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(float(v)) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _table(payload, indent=0) -> str:
    lines = []
    pad = " " * indent
    width = max((len(str(k)) for k in payload), default=0)
    for k, v in payload.items():
        if isinstance(v, dict):
            lines.append(f"{pad}{k}:")
            lines.append(_table(v, indent + 2))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            lines.append(f"{pad}{k}:")
            for item in v:
                lines.append(_table(item, indent + 2))
                lines.append("")
        else:
            if isinstance(v, float):
                v = f"{v:.10g}"
            elif isinstance(v, list):
                v = " ".join(f"{x:.6g}" if isinstance(x, float) else str(x) for x in v)
            lines.append(f"{pad}{str(k).ljust(width)}  {v}")
    return "\n".join(lines)


def _emit(payload, fmt, out):
    payload = _jsonable(payload)
    if fmt == "json":
        out.write(json.dumps(payload, sort_keys=True) + "\n")
    else:
        out.write(_table(payload) + "\n")


def _load_dictionary(path, normalize):
    raw = read_matrix_csv(path)
    if normalize:
        return normalize_columns(raw)
    try:
        return Dictionary(raw)
    except LqCertifyError as exc:
        raise CommandError(f"{path}: {exc} (pass --normalize to rescale columns)") from exc


def cmd_coherence(args):
    A = normalize_columns(read_matrix_csv(args.matrix))
    M = A.coherence
    return {
        "m": A.m,
        "n": A.n,
        "mutual_coherence": M,
        "l0_sparsity_limit": (1.0 / M + 1.0) / 2.0 if M > 0 else math.inf,
        "l1_sparsity_limit": (1.0 / M + 1.0) / 4.0 if M > 0 else math.inf,
    }


def cmd_solve(args):
    A = _load_dictionary(args.matrix, args.normalize)
    y = read_vector(args.y)
    problem = RecoveryProblem(A, Observation(y, epsilon=args.epsilon), args.sigma, args.q)
    hint = read_vector(args.x0) if args.x0 else None
    cfg = SolverConfig(seed=args.seed, multistart_count=args.starts)
    res = solve_constrained(problem, cfg, hint=hint)
    d = res.diagnostics
    payload = {
        "x_star": res.x_star,
        "residual": res.residual,
        "objective": res.objective,
        "support_size": res.support_size,
        "penalty_weight": d.penalty_weight,
        "outer_iterations": d.outer_iterations,
        "inner_iterations": d.inner_iterations,
        "converged": d.converged,
        "active_constraint": d.active_constraint,
    }
    if hint is not None:
        payload["error_l2"] = float(np.linalg.norm(res.x_star - hint))
    return payload


def cmd_bound(args):
    cert = bounds.cq_constant(args.q, args.m_coherence, args.n_sparsity, args.gamma,
                              args.epsilon, args.sigma)
    return cert.to_dict()


def cmd_gamma(args):
    e = read_vector(args.error)
    g = bounds.gamma_of_error(e, args.q, args.n_sparsity)
    payload = {"gamma": g, "gamma_min": 1.0 / args.n_sparsity, "gamma_max": e.size / args.n_sparsity}
    if args.q == 0.5:
        ub = bounds.gamma_upper_bound_qhalf(e, args.n_sparsity)
        payload["qhalf_gamma_upper_bound"] = ub
        payload["gamma_gt2_attainable"] = ub > 2.0
    return payload


def cmd_audit(args):
    A = _load_dictionary(args.matrix, args.normalize)
    x0 = read_vector(args.x0)
    xs = read_vector(args.xstar)
    trace = audit.audit_solution_chain(A, x0, xs, args.q, args.epsilon, args.sigma)
    return trace.to_dict()


def cmd_compare(args):
    cmp = bounds.compare_models(args.q, args.m_coherence, args.n_sparsity, args.gamma)
    d = cmp.to_dict()
    d["summary"] = cmp.summary
    return d


def cmd_lemmas(args):
    suites = audit.run_lemma_suites(args.trials, args.seed)
    payload = {"seed": args.seed, "trials": args.trials,
               "suites": [s.to_dict() for s in suites],
               "all_pass": all(s.passed for s in suites)}
    return payload, (0 if payload["all_pass"] else 1)


def cmd_experiment(args):
    config = harness.ExperimentConfig.from_json(args.config)
    if args.output:
        config = harness.ExperimentConfig(**{**config.to_dict(), "output_path": args.output})
    _, summary = harness.run_experiment(config, workers=args.workers)
    summary["output_path"] = config.output_path
    return summary


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "table"), default="table")

    p = argparse.ArgumentParser(prog="lq-certify", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("coherence", parents=[common], help="mutual coherence of a matrix")
    s.add_argument("matrix")
    s.set_defaults(func=cmd_coherence)

    s = sub.add_parser("solve", parents=[common], help="solve the constrained l_q model")
    s.add_argument("--matrix", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--x0", help="ground-truth vector used as a warm start and for the error")
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--starts", type=int, default=8)
    s.add_argument("--normalize", action="store_true")
    s.set_defaults(func=cmd_solve, randomized=True)

    s = sub.add_parser("bound", parents=[common], help="recovery bound certificate")
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--m-coherence", type=float, required=True)
    s.add_argument("--n-sparsity", type=int, required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--sigma", type=float, default=0.0)
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("gamma", parents=[common], help="gamma of an error vector")
    s.add_argument("--error", required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--n-sparsity", type=int, required=True)
    s.set_defaults(func=cmd_gamma)

    s = sub.add_parser("audit", parents=[common], help="audit the bound argument for a solution")
    s.add_argument("--matrix", required=True)
    s.add_argument("--x0", required=True)
    s.add_argument("--xstar", required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--normalize", action="store_true")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("compare", parents=[common], help="l_q versus l_1 bounds")
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--m-coherence", type=float, required=True)
    s.add_argument("--n-sparsity", type=int, required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("lemmas", parents=[common], help="randomized lemma property suites")
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_lemmas, randomized=True)

    s = sub.add_parser("experiment", parents=[common], help="run a Monte Carlo experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--output", help="override output_path from the config")
    s.add_argument("--workers", type=int, help="process count; default LQ_CERTIFY_THREADS")
    s.set_defaults(func=cmd_experiment)
    return p


def run_command(argv: Sequence[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "randomized", False) and getattr(args, "seed", None) is None:
        if args.format == "json":
            parser.print_usage(err)
            err.write(f"lq-certify {args.command}: --seed is required with --format json\n")
            return 2
        args.seed = 0
    try:
        result = args.func(args)
    except (LqCertifyError, CommandError, OSError, ValueError) as exc:
        err.write(f"lq-certify {args.command}: error: {exc}\n")
        return 1
    code = 0
    if isinstance(result, tuple):
        result, code = result
    _emit(result, args.format, out)
    return code


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
