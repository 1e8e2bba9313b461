"""Command-line interface: ``fradm {decompose,synth,phase-grid,convergence,scaling}``.

Exit codes: 0 success, 1 usage or input error, 2 solver did not converge.
Matrix files are plain CSV without a header; report CSVs carry a header row.
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments as ex
from .decomp import AdmConfig, NystromConfig, kkt_residuals
from .errors import DecompositionError, NotConvergedWarning
from .matrixio import MatrixParseError, read_matrix, write_csv, write_matrix
from .synth import DEFAULT_EPSILON, generate_problem, relative_error

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2

DESK_SCALE = 2000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for non-convergence here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", default=None, help=out_help)
    p.add_argument("--method", choices=ex.METHODS, default="fradm")
    p.add_argument("--mu0", type=float, default=AdmConfig.mu0)
    p.add_argument("--rho", type=float, default=AdmConfig.rho)
    p.add_argument("--mu-bar", type=float, default=AdmConfig.mu_bar)
    p.add_argument("--tol", type=float, default=AdmConfig.tol_primal, help="relative primal residual tolerance")
    p.add_argument("--max-iter", type=int, default=AdmConfig.max_iter)
    p.add_argument("--stall-window", type=int, default=AdmConfig.stall_window,
                   help="give up after this many stagnant iterations at mu_bar (0: never)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="phase metric threshold")
    p.add_argument("--oversample-k", type=int, default=NystromConfig.oversample_k, help="Nystrom block width l = k r")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fradm", description="Sparse + fixed-rank matrix decomposition.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="split a CSV matrix into rank-r L plus sparse S")
    p.add_argument("input", help="matrix CSV (no header)")
    p.add_argument("-r", "--rank", type=int, required=True)
    p.add_argument("--l-true", default=None, help="ground-truth L for error reporting")
    p.add_argument("--s-true", default=None, help="ground-truth S for error reporting")
    _common(p, "output directory for L.csv and S.csv (default: current directory)")

    p = sub.add_parser("synth", help="write a synthetic problem as M.csv, Ltrue.csv, Strue.csv")
    p.add_argument("-m", type=int, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-r", "--rank", type=int, required=True)
    p.add_argument("--frac", type=float, default=0.1, help="outlier fraction")
    _common(p, "output directory (default: current directory)")

    p = sub.add_parser("phase-grid", help="phase metric over rank and outlier fractions")
    p.add_argument("--size", type=int, default=200)
    p.add_argument("--rank-steps", type=int, default=5)
    p.add_argument("--outlier-steps", type=int, default=5)
    p.add_argument("--rank-min", type=float, default=0.05)
    p.add_argument("--rank-max", type=float, default=0.6)
    p.add_argument("--outlier-min", type=float, default=0.1)
    p.add_argument("--outlier-max", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-large", action="store_true")
    _common(p, "output CSV (default: stdout)")

    p = sub.add_parser("convergence", help="per-iteration error of the polar iteration against the TSVD")
    p.add_argument("--size", type=int, default=300)
    p.add_argument("-n", type=int, default=None, help="columns (default: --size)")
    p.add_argument("-r", "--rank", type=int, default=10)
    p.add_argument("--gap", type=float, default=0.5, help="sigma_{r+1} / sigma_r")
    p.add_argument("--exact-rank", action="store_true", help="zero tail spectrum")
    p.add_argument("--top", type=float, default=1.2, help="largest singular value (sigma_r = 1)")
    p.add_argument("--cap", type=int, default=500, help="iteration cap")
    p.add_argument("--allow-large", action="store_true")
    _common(p, "output CSV (default: stdout)")

    p = sub.add_parser("scaling", help="accuracy and timing of all methods across sizes")
    p.add_argument("--sizes", type=int, nargs="+", default=[200, 500])
    p.add_argument("--rank-rule", default="fixed:10", help="'fixed:K' or 'fraction:F'")
    p.add_argument("--frac", type=float, default=0.1, help="outlier fraction")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--methods", nargs="+", choices=ex.METHODS, default=list(ex.METHODS))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="write NA for wall_time (byte-stable output)")
    p.add_argument("--allow-large", action="store_true")
    _common(p, "output CSV (default: stdout)")
    return parser


def _configs(args) -> tuple[AdmConfig, NystromConfig]:
    try:
        adm = AdmConfig(mu0=args.mu0, rho=args.rho, mu_bar=args.mu_bar, tol_primal=args.tol,
                        max_iter=args.max_iter, fallback_seed=args.seed,
                        stall_window=args.stall_window)
        nys = NystromConfig(oversample_k=args.oversample_k, shuffle_seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    return adm, nys


def _guard(size: int, args) -> None:
    if size > DESK_SCALE and not args.allow_large:
        raise UsageError(f"size {size} exceeds {DESK_SCALE}; pass --allow-large to run it anyway")


def _emit(args, header, rows) -> None:
    if args.out is None:
        write_csv(sys.stdout, header, rows)
    else:
        write_csv(args.out, header, rows)


def cmd_decompose(args) -> int:
    adm, nys = _configs(args)
    m = read_matrix(args.input)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        d = ex.run_method(args.method, m, args.rank, adm, nys)
    elapsed = time.perf_counter() - t0

    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "L.csv", d.l)
    write_matrix(out / "S.csv", d.s)

    print(f"method              {args.method}")
    print(f"iterations          {d.iterations}")
    print(f"converged           {'yes' if d.converged else 'no'}")
    print(f"primal_residual     {d.final_residual:.3e}")
    if d.mu_history:
        k = kkt_residuals(d, m).normalized()
        print(f"kkt_uty             {k.r_uty:.3e}")
        print(f"kkt_yv              {k.r_yv:.3e}")
        print(f"kkt_prox            {k.r_prox:.3e}")
    print(f"wall_time           {elapsed:.3f}")
    if args.l_true:
        print(f"err_l               {relative_error(d.l, read_matrix(args.l_true)):.3e}")
    if args.s_true:
        print(f"err_s               {relative_error(d.s, read_matrix(args.s_true)):.3e}")
    return EXIT_OK if d.converged else EXIT_NOT_CONVERGED


def cmd_synth(args) -> int:
    _ = _configs(args)
    p = generate_problem(args.m, args.n, args.rank, args.frac, args.seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "M.csv", p.m)
    write_matrix(out / "Ltrue.csv", p.l_true)
    write_matrix(out / "Strue.csv", p.s_true)
    return EXIT_OK


def cmd_phase_grid(args) -> int:
    adm, nys = _configs(args)
    if args.rank_steps < 2 or args.outlier_steps < 2:
        raise UsageError("--rank-steps and --outlier-steps must be >= 2")
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    _guard(args.size, args)
    with warnings.catch_warnings():
        # Cells in the failure region are expected to hit max_iter.
        warnings.simplefilter("ignore", NotConvergedWarning)
        rows = ex.run_phase_grid(
            args.size,
            np.linspace(args.rank_min, args.rank_max, args.rank_steps),
            np.linspace(args.outlier_min, args.outlier_max, args.outlier_steps),
            reps=args.reps, epsilon=args.epsilon, seed=args.seed, method=args.method,
            adm=adm, nys=nys, workers=args.workers,
        )
    _emit(args, ex.PHASE_HEADER, rows)
    return EXIT_OK


def cmd_convergence(args) -> int:
    n = args.n or args.size
    _guard(max(args.size, n), args)
    rows, reached = ex.run_convergence(args.size, n, args.rank, args.gap, seed=args.seed,
                                       exact_rank=args.exact_rank, max_iter=args.cap, top=args.top)
    _emit(args, ex.CONVERGENCE_HEADER, rows)
    if not reached:
        print(f"note: error {rows[-1]['rel_error']:.3e} after {len(rows)} iterations (cap)", file=sys.stderr)
    return EXIT_OK


def cmd_scaling(args) -> int:
    adm, nys = _configs(args)
    for size in args.sizes:
        _guard(size, args)
    try:
        ex.parse_rank_rule(args.rank_rule)
    except ValueError as e:
        raise UsageError(str(e)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        records = ex.run_scaling(args.sizes, args.rank_rule, args.reps, args.methods, args.frac,
                                 args.seed, args.epsilon, adm, nys, args.workers)
    _emit(args, ex.RUN_HEADER, [rec.to_row(not args.no_timing) for rec in records])
    for row in ex.summarize(records):
        print(
            f"{row['method']:<12} size={row['size']:<5} r={row['r']:<4} "
            f"err_l={row['median_err_l']:.2e} err_s={row['median_err_s']:.2e} "
            f"iters<={row['max_iterations']} time={row['median_wall_time']:.3f}s",
            file=sys.stderr,
        )
    return EXIT_OK


COMMANDS = {
    "decompose": cmd_decompose,
    "synth": cmd_synth,
    "phase-grid": cmd_phase_grid,
    "convergence": cmd_convergence,
    "scaling": cmd_scaling,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except MatrixParseError as e:
        print(f"fradm: parse error: {e}", file=sys.stderr)
    except (UsageError, DecompositionError, ValueError) as e:
        print(f"fradm: error: {e}", file=sys.stderr)
    except OSError as e:
        print(f"fradm: I/O error: {e}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
