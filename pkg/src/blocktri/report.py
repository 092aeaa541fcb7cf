"""Residual reporting, benchmark timing, and table emitters."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import BlockRhs, BlockTridiagonalMatrix, btd_matmul

#: (N, n) pairs of the standard sweeps, keyed by total dimension.
SWEEPS = {
    "nn262144": [(256, 1024), (512, 512), (1024, 256),
                 (2048, 128), (4096, 64), (8192, 32)],
    "nn65536": [(2048, 32), (1024, 64), (512, 128), (256, 256)],
}


def residual_report(matrix: BlockTridiagonalMatrix, solution: BlockRhs,
                    rhs: BlockRhs) -> tuple[float, float]:
    """Absolute and relative residual norms of a candidate solution.

    The residual is computed with one pass of the block-structured
    multiply, never the assembled dense matrix. Norms are 2-norms taken
    per RHS column; the report is the maximum over columns. Columns whose
    RHS is exactly zero contribute a relative residual of 0 when solved
    exactly and inf otherwise.
    """
    residual = rhs.blocks - btd_matmul(matrix, solution).blocks
    flat_r = residual.reshape(-1, rhs.num_columns)
    flat_b = rhs.blocks.reshape(-1, rhs.num_columns)
    r_norms = np.linalg.norm(flat_r, axis=0)
    b_norms = np.linalg.norm(flat_b, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(b_norms > 0.0, r_norms / b_norms,
                          np.where(r_norms > 0.0, np.inf, 0.0))
    return float(r_norms.max()), float(ratios.max())


def time_call(fn, runs: int = 1, warmup: int = 0) -> tuple[float, object]:
    """Mean wall-clock milliseconds of ``fn()`` over ``runs`` timed calls.

    Warm-up calls run first and are excluded from the mean. Returns the
    mean and the result of the last call.
    """
    result = None
    for _ in range(warmup):
        result = fn()
    total = 0.0
    for _ in range(runs):
        start = time.perf_counter()
        result = fn()
        total += time.perf_counter() - start
    return 1000.0 * total / max(runs, 1), result


@dataclass
class BenchRow:
    num_blocks: int
    block_size: int
    factor_ms: float
    solve_ms: float
    rel_residual: float


_COLUMNS = ("N", "n", "fact_ms", "solve_ms", "rel_residual")


def _cells(row: BenchRow) -> list[str]:
    return [str(row.num_blocks), str(row.block_size),
            f"{row.factor_ms:.2f}", f"{row.solve_ms:.2f}",
            f"{row.rel_residual:.3e}"]


def format_table(rows: list[BenchRow], fmt: str = "md") -> str:
    """Render benchmark rows as CSV or a markdown table."""
    if fmt == "csv":
        lines = [",".join(_COLUMNS)]
        lines += [",".join(_cells(r)) for r in rows]
        return "\n".join(lines)
    if fmt == "md":
        widths = [max(len(h), 12) for h in _COLUMNS]
        header = "| " + " | ".join(h.ljust(w) for h, w in zip(_COLUMNS, widths)) + " |"
        rule = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        lines = [header, rule]
        for r in rows:
            lines.append("| " + " | ".join(
                c.ljust(w) for c, w in zip(_cells(r), widths)) + " |")
        return "\n".join(lines)
    raise ValueError(f"unknown table format {fmt!r}")


def parse_sweep(spec: str) -> list[tuple[int, int]]:
    """Parse a sweep name or explicit ``N:n,N:n,...`` list."""
    if spec in SWEEPS:
        return list(SWEEPS[spec])
    shapes = []
    for part in spec.split(","):
        try:
            num_blocks, block_size = part.split(":")
            shapes.append((int(num_blocks), int(block_size)))
        except ValueError:
            raise ValueError(
                f"bad sweep {spec!r}: expected one of {sorted(SWEEPS)} "
                f"or 'N:n,N:n,...'") from None
    if not shapes:
        raise ValueError("empty sweep specification")
    return shapes


def estimate_bytes(num_blocks: int, block_size: int, num_columns: int = 1) -> int:
    """Rough peak footprint of factorize+solve for one instance.

    Counts the input arenas, the factored working copy with its coupling
    panels, and the RHS, with slack for temporaries.
    """
    block_bytes = 8 * block_size * block_size
    arena = (2 * num_blocks - 1) * block_bytes
    panels = 2 * num_blocks * block_bytes  # intermediate factors, ~2n wide
    rhs = 8 * num_blocks * block_size * num_columns
    return int(2.5 * arena + panels + 3 * rhs)
