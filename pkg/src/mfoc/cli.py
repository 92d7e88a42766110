"""Command-line front end.

    mfoc solve ex1 --basis chebyshev --m 4 --trials 10 --out runs/ex1
    mfoc sweep ex3 --m-list 10,20,40 --trials 5
    mfoc oracle ex1

``PROBLEM`` is a built-in name (ex1, ex2, ex3) or a path to a TOML problem file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import MfocError, ProblemFileError
from .optimizer import OptimizerConfig, TrialStats, default_jobs, multi_trial, sweep_m
from .oracle import ex1_optimal
from .problem import BUILTIN_NAMES, SolverDefaults, builtin, make_config, parse_problem_file

log = logging.getLogger("mfoc")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("problem", help="built-in name (ex1, ex2, ex3) or path to a problem file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="base seed (default 42)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=None, help="parallel trials (default: available cores)")
    p.add_argument("--basis", choices=["chebyshev", "legendre", "fourier"])
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--estimator", choices=["ls", "central"])
    p.add_argument("--mu-mode", choices=["residual", "estimated"])
    p.add_argument("--schedule", choices=["constant", "polydecay"])
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfoc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("solve", help="solve a problem over one or more seeds"))
    sweep = sub.add_parser("sweep", help="mean cost as a function of basis size")
    _common(sweep)
    sweep.add_argument("--m-list", required=True, help="comma-separated basis sizes, e.g. 2,4,8")
    oracle = sub.add_parser("oracle", help="reference optimum from the shooting solver")
    oracle.add_argument("name")
    oracle.add_argument("--quiet", action="store_true")
    return parser


def _overrides(args) -> SolverDefaults:
    return SolverDefaults(
        basis=args.basis, m=args.m, alpha=args.alpha, beta=args.beta, rho=args.rho,
        epsilon=args.epsilon, samples=args.samples, tol=args.tol, max_iter=args.max_iter,
        seed=args.seed, estimator=args.estimator, mu_mode=args.mu_mode, schedule=args.schedule,
    )


def _load(name: str):
    path = Path(name)
    if name in BUILTIN_NAMES and not path.exists():
        return builtin(name)
    return parse_problem_file(path)


def _num(v) -> str:
    return repr(float(v))


def _json_num(v):
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(f"{v:.12g}")


def _config_echo(config: OptimizerConfig, n_params: int) -> dict:
    s = config.schedule
    return {
        "basis": config.basis.value,
        "m": config.m,
        "alpha": _json_num(s.alpha0),
        "beta": _json_num(s.beta0),
        "schedule": s.kind.value,
        "rho": _json_num(config.rho),
        "epsilon": _json_num(config.scheme.epsilon),
        "samples": config.scheme.sample_count(n_params) if config.scheme.kind.value == "ls" else 2 * n_params,
        "estimator": config.scheme.kind.value,
        "mu_mode": config.mu_mode.value,
        "tol": _json_num(config.tol),
        "max_iter": config.max_iter,
        "seed": config.seed,
    }


def _write_csv(path: Path, header: list, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_solve_outputs(out: Path, problem, config: OptimizerConfig, stats: TrialStats) -> None:
    out.mkdir(parents=True, exist_ok=True)
    n_x, n_u, m = problem.n_x, problem.n_u, config.m
    has_mu = problem.cost.target is not None
    ok = stats.successful

    if ok:
        first = ok[0]
        traj = first.trajectory
        rows = []
        for k, t in enumerate(traj.times):
            row = [_num(t)] + [_num(v) for v in traj.states[k]]
            row += [_num(v) for v in traj.inputs[k]] if k < traj.N else [""] * n_u
            rows.append(row)
        _write_csv(out / "trajectory.csv",
                   ["t"] + [f"x{i + 1}" for i in range(n_x)] + [f"u{i + 1}" for i in range(n_u)], rows)
        _write_csv(out / "convergence.csv", ["iter", "J", "residual_norm"],
                   [[i, _num(J), _num(r)] for i, (J, r) in
                    enumerate(zip(first.trace_J, first.trace_residual_norm))])

    p = m * n_u
    header = ["trial"] + [f"theta_{i + 1}" for i in range(p)]
    if has_mu:
        header += [f"mu_{i + 1}" for i in range(n_x)]
    rows = []
    for i, res in enumerate(stats.results):
        if res is None:
            rows.append([i] + [""] * (len(header) - 1))
            continue
        row = [i] + [_num(v) for v in res.theta_star.reshape(-1, order="F")]
        if has_mu:
            row += [_num(v) for v in res.mu_star]
        rows.append(row)
    _write_csv(out / "params.csv", header, rows)

    summary = {
        "problem": problem.name,
        "config": _config_echo(config, p),
        "trials": len(stats.seeds),
        "converged": stats.n_converged,
        "failed": stats.n_failed,
        "mean_J": _json_num(stats.mean_J),
        "std_J": _json_num(stats.std_J),
        "mean_terminal": [_json_num(v) for v in np.atleast_1d(stats.mean_terminal)],
        "std_terminal": [_json_num(v) for v in np.atleast_1d(stats.std_terminal)],
        "seeds": stats.seeds,
        "J": [None if r is None else _json_num(r.J_star) for r in stats.results],
        "terminal": [None if r is None else [_json_num(v) for v in r.terminal_state] for r in stats.results],
        "iterations": [None if r is None else r.iterations for r in stats.results],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def _prepare(args):
    spec = _load(args.problem)
    config = make_config(spec, _overrides(args))
    if args.trials < 1:
        raise ProblemFileError("--trials must be >= 1")
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if jobs < 1:
        raise ProblemFileError("--jobs must be >= 1")
    return spec, spec.build(), config, jobs


def cmd_solve(args) -> int:
    spec, problem, config, jobs = _prepare(args)
    log.info("solving %s: basis=%s m=%d trials=%d", spec.name, config.basis.value, config.m, args.trials)
    stats = multi_trial(problem, config, args.trials, config.seed, jobs)
    if not stats.successful:
        for seed, err in stats.errors.items():
            print(f"error: trial seed {seed}: {err}", file=sys.stderr)
        write_solve_outputs(args.out, problem, config, stats)
        return EXIT_DIVERGED
    write_solve_outputs(args.out, problem, config, stats)
    if not args.quiet:
        term = " ".join(f"{v:.4f}±{s:.4f}" for v, s in zip(np.atleast_1d(stats.mean_terminal),
                                                          np.atleast_1d(stats.std_terminal)))
        print(f"{spec.name}: J = {stats.mean_J:.4f}±{stats.std_J:.4f}  terminal = {term}  "
              f"converged {stats.n_converged}/{len(stats.seeds)}  -> {args.out}")
    return EXIT_OK


def parse_m_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ProblemFileError(f"--m-list: expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise ProblemFileError("--m-list must contain positive integers")
    return values


def cmd_sweep(args) -> int:
    m_values = parse_m_list(args.m_list)
    spec, problem, config, jobs = _prepare(args)
    rows = sweep_m(problem, config, m_values, args.trials, config.seed, jobs)
    args.out.mkdir(parents=True, exist_ok=True)

    def cell(v):
        return "" if not math.isfinite(v) else _num(v)

    _write_csv(args.out / "sweep.csv", ["m", "mean_J", "std_J", "mean_residual_norm"],
               [[r.m, cell(r.mean_J), cell(r.std_J), cell(r.mean_residual_norm)] for r in rows])
    if not args.quiet:
        for r in rows:
            print(f"m={r.m:3d}  J = {r.mean_J:.4f}±{r.std_J:.4f}  |r| = {r.mean_residual_norm:.4f}")
    if all(not math.isfinite(r.mean_J) for r in rows):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.name != "ex1":
        print(f"error: no oracle for {args.name!r} (available: ex1)", file=sys.stderr)
        return EXIT_INVALID
    J, x1 = ex1_optimal()
    print(f"J*={J:.6f} terminal={x1:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    handler = {"solve": cmd_solve, "sweep": cmd_sweep, "oracle": cmd_oracle}[args.command]
    try:
        return handler(args)
    except MfocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
