"""Command-line entry point.

Exit codes: 0 success, 2 usage or spec error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import bench
from .active_set import EvolutionMode, active_set_solve
from .consistency import consistency_report
from .partition import GroupPartition, PartitionError, omega_dual, read_partition, signed_support, subgradient_certificate
from .prox import ProxConvergenceError, prox_omega
from .solvers import (RegressionProblem, SolverConfig, SolverError, classic_lasso_solve,
                      fista_solve, latent_group_lasso_solve, ls_loss, read_problem,
                      write_problem)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", help="experiment spec file (key = value lines)")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="64-bit seed, overrides the spec")
    p.add_argument("--threads", type=int, default=1, help="worker processes for trials")
    p.add_argument("-v", "--verbose", action="store_true")


def _problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", help="problem file; otherwise drawn from the spec")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--partition", help="partition file (1-based); otherwise from the spec")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exclasso", description="Exclusive group Lasso toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-problem", help="draw one benchmark problem")
    _common(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--truth-out", help="also write the true vector, one value per line")

    p = sub.add_parser("solve", help="solve the norm-penalized problem")
    _common(p)
    _problem_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--algorithm", choices=("excl-prox", "classic", "latent"), default="excl-prox")

    p = sub.add_parser("active-set", help="solve the squared-penalty problem by support growth")
    _common(p)
    _problem_args(p)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--s-max", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--mode", choices=("plain", "strings"), default="plain")
    p.add_argument("--max-strings", type=int, default=2)
    p.add_argument("--no-wrap", action="store_true")
    p.add_argument("--trace", help="per-step trace log file")

    p = sub.add_parser("prox-check", help="certify the prox on random inputs")
    _common(p)
    p.add_argument("--p", type=int, default=32)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("sweep", help="run the recovery benchmark")
    _common(p)

    p = sub.add_parser("consistency-report", help="design diagnostics per trial")
    _common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    return parser


def _spec(args) -> bench.ExperimentSpec:
    if args.spec:
        return bench.read_spec(args.spec, seed=args.seed)
    return bench.ExperimentSpec(**({"seed": args.seed} if args.seed is not None else {}))


def _load(args) -> tuple[RegressionProblem, GroupPartition, bench.ExperimentSpec]:
    spec = _spec(args)
    if args.problem:
        problem = read_problem(args.problem)
    else:
        problem = bench.generate_problem(spec, args.trial)
    part = read_partition(args.partition, problem.p) if args.partition else spec.partition()
    if part.p != problem.p:
        raise bench.SpecError("partition and problem dimensions differ")
    return problem, part, spec


def _write_vector(x: np.ndarray, path) -> None:
    text = "\n".join(f"{v:.17g}" for v in x) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen_problem(args) -> int:
    spec = _spec(args)
    problem = bench.generate_problem(spec, args.trial)
    if args.out:
        write_problem(problem, args.out)
    else:
        print(f"{problem.n} {problem.p}")
    if args.truth_out:
        _write_vector(problem.x_true, args.truth_out)
    return EXIT_OK


def cmd_solve(args) -> int:
    problem, part, spec = _load(args)
    cfg = SolverConfig(lam=args.lam, max_iter=spec.max_iter, gap_tol=spec.gap_tol)
    if args.algorithm == "excl-prox":
        rep = fista_solve(problem, part, cfg)
    elif args.algorithm == "classic":
        rep = classic_lasso_solve(problem, cfg)
    else:
        rep = latent_group_lasso_solve(problem, spec.latent_groups(), cfg)
    print(f"objective {rep.objective:.17g} iterations {rep.iterations} "
          f"gap {rep.duality_gap} converged {rep.converged}", file=sys.stderr)
    _write_vector(rep.x_hat, args.out)
    return EXIT_OK if rep.converged else EXIT_SOLVER


def cmd_active_set(args) -> int:
    problem, part, spec = _load(args)
    nnz = int(np.count_nonzero(problem.x_true)) if problem.x_true is not None else 0
    s_max = args.s_max or min(problem.p, max(1, spec.s_max_factor * nnz) if nnz else problem.p)
    eps = args.epsilon or spec.epsilon_scale * ls_loss(problem, np.zeros(problem.p))
    mode = EvolutionMode(args.mode, args.max_strings, not args.no_wrap)
    trace_fh = open(args.trace, "w") if args.trace else None
    try:
        def trace(rec):
            if trace_fh:
                trace_fh.write("{iteration} {size} {added} {phase} {gap:.17g}\n".format(**rec))
        _, rep = active_set_solve(problem, part, args.mu, s_max, eps, mode, trace=trace)
    finally:
        if trace_fh:
            trace_fh.close()
    print(f"support {int(np.count_nonzero(rep.x_hat))} gap {rep.duality_gap:.3e} "
          f"converged {rep.converged}", file=sys.stderr)
    _write_vector(rep.x_hat, args.out)
    return EXIT_OK if rep.converged else EXIT_SOLVER


def cmd_prox_check(args) -> int:
    rng = np.random.default_rng(args.seed or 0)
    part = GroupPartition.modulo(args.p, args.groups)
    worst = 0.0
    for _ in range(args.count):
        x = rng.standard_normal(args.p) * 10.0 ** rng.uniform(-3, 3)
        res = prox_omega(x, part)
        if np.any(res.z + res.projection != x):
            print("moreau split is not exact", file=sys.stderr)
            return EXIT_SOLVER
        worst = max(worst, omega_dual(res.projection, part) - 1.0)
        if np.any(res.z):
            worst = max(worst, subgradient_certificate(res.z, res.projection, part).max_violation)
    print(f"checked {args.count} inputs, worst violation {worst:.3e}")
    return EXIT_OK if worst <= args.tol else EXIT_SOLVER


def cmd_sweep(args) -> int:
    spec = _spec(args)
    rows = bench.run_sweep(spec, args.out, threads=args.threads)
    if not args.out:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(bench.CSV_HEADER)
        for r in rows:
            w.writerow(r.as_csv())
    return EXIT_OK


def cmd_consistency(args) -> int:
    spec = _spec(args)
    part = spec.partition()
    header = ["n", "seed", "c_min", "c_inf", "gamma", "phi_J", "dual_feasible", "sign_ok", "recovered"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(spec.trials):
            prob = bench.generate_problem(spec, t)
            rep = consistency_report(prob, part, prob.x_true, args.lam)
            fit = fista_solve(prob, part, SolverConfig(lam=args.lam, max_iter=spec.max_iter,
                                                       gap_tol=spec.gap_tol))
            ok = np.array_equal(signed_support(fit.x_hat, spec.support_tol),
                                signed_support(prob.x_true))
            w.writerow([spec.n, f"{spec.seed}:{t}", f"{rep.c_min:.17g}", f"{rep.c_inf:.17g}",
                        f"{rep.gamma:.17g}", f"{rep.phi_J:.17g}", int(rep.witness_dual_feasible),
                        int(rep.witness_sign_ok), int(ok)])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


COMMANDS = {
    "gen-problem": cmd_gen_problem,
    "solve": cmd_solve,
    "active-set": cmd_active_set,
    "prox-check": cmd_prox_check,
    "sweep": cmd_sweep,
    "consistency-report": cmd_consistency,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (bench.SpecError, PartitionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, ProxConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
