"""Command-line interface: generate, solve, verify, bench, kalman."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .block_cholesky import serial_factorize, serial_solve
from .btdfile import read_btd, write_btd
from .core import assemble_dense
from .errors import BlockTriError
from .kalman import build_normal_equations, generate_rotation_model
from .oracle import MAX_ORACLE_DIM, dense_solve
from .report import (
    BenchRow,
    estimate_bytes,
    format_table,
    parse_sweep,
    residual_report,
    time_call,
)
from .schur import RecursionConfig, recursive_factorize, recursive_solve
from .synthgen import generate_spd_btd

_GIB = 1024 ** 3


def _default_mem_limit_gib() -> float:
    """Half of physical RAM, capped at 8 GiB; 8 GiB when RAM is unknown."""
    try:
        total = os.sysconf("SC_PHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return 8.0
    return round(min(8.0, 0.5 * total / _GIB), 2)


class _Stage:
    """Mutable marker naming the currently running stage for error reports."""

    def __init__(self):
        self.name = "startup"

    def enter(self, name: str) -> None:
        self.name = name


def _recursion_config(args) -> RecursionConfig:
    if args.n_star == "auto":
        return RecursionConfig(segment_length=args.rho, auto_crossover=True)
    return RecursionConfig(crossover=args.n_star, segment_length=args.rho)


def _n_star(value: str):
    if value == "auto":
        return value
    try:
        parsed = int(value)
        if parsed < 1:
            raise ValueError
        return parsed
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a positive integer or 'auto', got {value!r}") from None


def _add_recursion_flags(parser) -> None:
    parser.add_argument("--n-star", type=_n_star, default=64,
                        help="crossover block count, or 'auto' (default 64)")
    parser.add_argument("--rho", type=int, default=8,
                        help="target interior segment length (default 8)")


def cmd_generate(args, stage: _Stage) -> int:
    stage.enter("generate")
    matrix, rhs = generate_spd_btd(args.N, args.n, args.d, args.seed)
    stage.enter("write-output")
    write_btd(args.out, matrix, rhs)
    print(f"wrote N={args.N} n={args.n} d={args.d} seed={args.seed} -> {args.out}")
    return 0


def cmd_solve(args, stage: _Stage) -> int:
    stage.enter("read-input")
    matrix, rhs = read_btd(args.input)
    if rhs is None:
        print("error: input file carries no right-hand side", file=sys.stderr)
        return 2
    if args.serial:
        stage.enter("serial-factorize")
        work = matrix.copy()
        factor_ms, _ = time_call(lambda: serial_factorize(work))
        stage.enter("serial-solve")
        solution = rhs.copy()
        solve_ms, _ = time_call(lambda: serial_solve(work, solution))
    else:
        config = _recursion_config(args)
        stage.enter("factorize")
        factor_ms, hierarchy = time_call(lambda: recursive_factorize(matrix, config))
        stage.enter("solve")
        solve_ms, solution = time_call(lambda: recursive_solve(hierarchy, rhs))
    stage.enter("residual")
    abs_res, rel_res = residual_report(matrix, solution, rhs)
    print(f"factor_time_ms: {factor_ms:.2f}")
    print(f"solve_time_ms: {solve_ms:.2f}")
    print(f"abs_residual: {abs_res:.6e}")
    print(f"rel_residual: {rel_res:.6e}")
    if args.out:
        stage.enter("write-output")
        write_btd(args.out, matrix, solution)
        print(f"wrote system with solution panels -> {args.out}")
    return 0


def cmd_verify(args, stage: _Stage) -> int:
    stage.enter("read-input")
    matrix, rhs = read_btd(args.input)
    if rhs is None:
        print("error: input file carries no right-hand side", file=sys.stderr)
        return 2
    dim = matrix.num_blocks * matrix.block_size
    if dim > MAX_ORACLE_DIM:
        print(f"error: order {dim} exceeds the oracle cap {MAX_ORACLE_DIM}",
              file=sys.stderr)
        return 2
    config = _recursion_config(args)
    stage.enter("factorize")
    hierarchy = recursive_factorize(matrix, config)
    stage.enter("solve")
    solution = recursive_solve(hierarchy, rhs)
    stage.enter("oracle")
    dense = assemble_dense(matrix)
    reference = dense_solve(dense, rhs.blocks.reshape(dim, -1))
    stage.enter("compare")
    diff = np.abs(solution.blocks.reshape(dim, -1) - reference).max()
    scale = max(np.abs(reference).max(), 1e-300)
    rel_err = diff / scale
    abs_res, rel_res = residual_report(matrix, solution, rhs)
    print(f"rel_error_vs_oracle: {rel_err:.6e}")
    print(f"rel_residual: {rel_res:.6e}")
    if rel_err <= args.tol:
        print(f"verify: OK (tolerance {args.tol:.1e})")
        return 0
    print(f"verify: FAILED (tolerance {args.tol:.1e})", file=sys.stderr)
    return 1


def cmd_bench(args, stage: _Stage) -> int:
    stage.enter("parse-sweep")
    try:
        shapes = parse_sweep(args.sweep)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    limit = int(args.mem_limit * _GIB)
    if args.dry_run:
        for num_blocks, block_size in shapes:
            est = estimate_bytes(num_blocks, block_size, args.d)
            note = "" if est <= limit else "  (exceeds memory limit, would skip)"
            print(f"N={num_blocks} n={block_size} d={args.d} "
                  f"est_bytes={est}{note}")
        return 0
    config = _recursion_config(args)
    rows = []
    for num_blocks, block_size in shapes:
        est = estimate_bytes(num_blocks, block_size, args.d)
        if est > limit and not args.force:
            print(f"warning: skipping N={num_blocks} n={block_size} "
                  f"(~{est / _GIB:.1f} GiB > limit {args.mem_limit} GiB; "
                  f"use --force or --mem-limit)", file=sys.stderr)
            continue
        stage.enter(f"bench N={num_blocks} n={block_size}")
        matrix, rhs = generate_spd_btd(num_blocks, block_size, args.d, args.seed)
        factor_ms, hierarchy = time_call(
            lambda: recursive_factorize(matrix, config),
            runs=args.runs, warmup=1)
        solve_ms, solution = time_call(
            lambda: recursive_solve(hierarchy, rhs),
            runs=args.runs, warmup=1)
        _, rel_res = residual_report(matrix, solution, rhs)
        rows.append(BenchRow(num_blocks, block_size, factor_ms, solve_ms, rel_res))
    print(format_table(rows, args.format))
    return 0


def cmd_kalman(args, stage: _Stage) -> int:
    if args.paper_shape:
        args.n, args.m, args.N = 256, 1024, 100
    stage.enter("generate-model")
    setup_ms, model = time_call(
        lambda: generate_rotation_model(args.n, args.m, args.N, args.dt, args.seed))
    stage.enter("build-normal-equations")
    build_ms, (matrix, rhs) = time_call(lambda: build_normal_equations(model))
    config = _recursion_config(args)
    stage.enter("factorize")
    factor_ms, hierarchy = time_call(lambda: recursive_factorize(matrix, config))
    stage.enter("solve")
    solve_ms, solution = time_call(lambda: recursive_solve(hierarchy, rhs))
    stage.enter("residual")
    abs_res, rel_res = residual_report(matrix, solution, rhs)
    print(f"model: n={args.n} m={args.m} N={args.N} dt={args.dt} seed={args.seed}")
    print(f"setup_time_ms: {setup_ms:.2f}")
    print(f"build_time_ms: {build_ms:.2f}")
    print(f"factor_time_ms: {factor_ms:.2f}")
    print(f"solve_time_ms: {solve_ms:.2f}")
    print(f"abs_residual: {abs_res:.6e}")
    print(f"rel_residual: {rel_res:.6e}")
    if args.out:
        stage.enter("write-output")
        write_btd(args.out, matrix, rhs)
        print(f"wrote normal equations -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocktri",
        description="Direct solver for SPD block-tridiagonal systems.",
        epilog="Batch parallelism is capped by the BLOCKTRI_THREADS "
               "environment variable.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random SPD instance")
    p.add_argument("--N", type=int, required=True, help="block count")
    p.add_argument("--n", type=int, required=True, help="block dimension")
    p.add_argument("--d", type=int, default=1, help="RHS columns (default 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="factor and solve a stored instance")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="write the system with solution panels here")
    p.add_argument("--serial", action="store_true",
                   help="use the serial sweep instead of the recursive path")
    _add_recursion_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="cross-check against the dense oracle")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    _add_recursion_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time factorize/solve over a shape sweep")
    p.add_argument("--sweep", required=True,
                   help="named sweep (nn262144, nn65536) or 'N:n,N:n,...'")
    p.add_argument("--runs", type=int, default=10,
                   help="timed runs per shape, after one warm-up (default 10)")
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mem-limit", type=float, default=_default_mem_limit_gib(),
                   help="skip shapes above this estimated GiB "
                        "(default: half of RAM, at most 8)")
    p.add_argument("--force", action="store_true",
                   help="run shapes above the memory limit anyway")
    p.add_argument("--dry-run", action="store_true",
                   help="list the sweep and size estimates without running")
    _add_recursion_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("kalman", help="build and solve a smoothing instance")
    p.add_argument("--n", type=int, default=32, help="state dimension")
    p.add_argument("--m", type=int, default=128, help="observation dimension")
    p.add_argument("--N", type=int, default=100, help="horizon")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paper-shape", action="store_true",
                   help="use n=256 m=1024 N=100")
    p.add_argument("--out", help="write the normal equations here")
    _add_recursion_flags(p)
    p.set_defaults(func=cmd_kalman)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = _Stage()
    try:
        return args.func(args, stage)
    except BlockTriError as err:
        print(f"error during {stage.name}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
