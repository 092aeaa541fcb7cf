"""Recursive Schur-complement reduction of SPD block-tridiagonal systems.

Each level partitions the block rows into separators (kept) and interior
segments (eliminated). Both endpoints are always separators and separators
recur every ``segment_length + 1`` rows, so every segment couples to exactly
two separators and no two separators are ever adjacent. Eliminating the
interiors batch-parallel leaves a smaller SPD block-tridiagonal system over
the separators, which is reduced again until the crossover size is reached
and a serial sweep finishes the job.

The factorization stores, per level, the factored segment interiors, the
two coupling blocks per segment, and the dense intermediate panels obtained
by solving the interiors against their coupling columns. The solve phase
reuses those panels: it folds the interior right-hand sides onto the
separators, recurses, then back-substitutes the interiors with updated
boundaries, level by level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .block_cholesky import (
    factorize_btd_batch,
    serial_factorize,
    serial_solve,
    solve_btd_batch,
)
from .core import (
    BlockRhs,
    BlockTridiagonalMatrix,
    FactorHierarchy,
    PartitionPlan,
    SegmentBatch,
    new_btd,
)
from .errors import DimensionMismatch, LevelOverflow, NotPositiveDefinite
from .kernels import gemm_acc_batch


@dataclass(frozen=True)
class RecursionConfig:
    """Tuning knobs of the recursive reduction.

    crossover: block count at or below which a serial sweep is used instead
        of another recursion level.
    segment_length: target interior segment length; the final segment may be
        shorter, or longer up to twice this value when the tail would
        otherwise be empty.
    max_levels: safety cap on recursion depth.
    auto_crossover: ignore ``crossover`` and stop recursing as soon as a
        partition would produce fewer than two segments (heuristic).
    """

    crossover: int = 64
    segment_length: int = 8
    max_levels: int = 32
    auto_crossover: bool = False

    def __post_init__(self):
        if self.crossover < 1 or self.segment_length < 1 or self.max_levels < 1:
            raise ValueError("crossover, segment_length and max_levels must be >= 1")


@dataclass
class FactorLevel:
    """One recursion level: its partition and factored segment batch."""

    plan: PartitionPlan
    batch: SegmentBatch


def plan_partition(num_blocks: int, config: RecursionConfig) -> PartitionPlan:
    """Choose separators for one level of reduction.

    Separators sit at block 0 and every ``segment_length + 1`` rows after
    it, plus the final block. If the final block would sit adjacent to the
    last regular separator, that separator is dropped so the tail segment
    absorbs the gap (length at most ``2 * segment_length``) rather than
    leaving an empty segment.
    """
    if num_blocks < 3:
        raise ValueError(f"cannot partition fewer than 3 block rows, got {num_blocks}")
    step = config.segment_length + 1
    separators = list(range(0, num_blocks, step))
    if separators[-1] != num_blocks - 1:
        if separators[-1] == num_blocks - 2:
            separators.pop()
        separators.append(num_blocks - 1)
    segments = tuple((a + 1, b) for a, b in zip(separators, separators[1:]))
    plan = PartitionPlan(num_blocks, tuple(separators), segments)
    plan.validate()
    return plan


def permute_split(
    matrix: BlockTridiagonalMatrix, plan: PartitionPlan
) -> tuple[SegmentBatch, np.ndarray, np.ndarray]:
    """Copy out the interior segments and separator blocks of one level.

    Returns ``(batch, separator_diag, separator_sub)``. The batch holds each
    segment's interior tridiagonal plus its two coupling blocks: the
    sub-diagonal block linking the left separator into the segment's first
    row, and the one linking the last row into the right separator.
    ``separator_diag`` stacks the P separator diagonal blocks.
    ``separator_sub`` holds couplings between consecutive separators, which
    are structurally zero here because separators are never adjacent; it is
    carried so Schur assembly stays shape-generic.

    The input matrix is never mutated.
    """
    if plan.num_blocks != matrix.num_blocks:
        raise DimensionMismatch(
            f"plan covers {plan.num_blocks} blocks, matrix has {matrix.num_blocks}"
        )
    n = matrix.block_size
    lengths = plan.segment_lengths()
    num_segments = plan.num_segments
    padded = int(lengths.max())

    diag = np.broadcast_to(np.eye(n), (num_segments, padded, n, n)).copy()
    sub = np.zeros((num_segments, max(padded - 1, 0), n, n))
    coupling_left = np.empty((num_segments, n, n))
    coupling_right = np.empty((num_segments, n, n))
    for k, (start, stop) in enumerate(plan.segments):
        span = stop - start
        diag[k, :span] = matrix.diag[start:stop]
        if span > 1:
            sub[k, :span - 1] = matrix.sub[start:stop - 1]
        coupling_left[k] = matrix.sub[start - 1]
        coupling_right[k] = matrix.sub[stop - 1]

    batch = SegmentBatch(n, lengths, diag, sub, coupling_left, coupling_right)
    separator_diag = matrix.diag[list(plan.separators)].copy()
    separator_sub = np.zeros((plan.num_separators - 1, n, n))
    return batch, separator_diag, separator_sub


def _coupling_panels(batch: SegmentBatch) -> np.ndarray:
    """Materialize each segment's (J, n, 2n) coupling column panels.

    Column block 0 carries the left coupling in the first row; column block
    1 carries the transposed right coupling in the last true row. All other
    rows are zero, as is everything past a segment's true length.
    """
    k, padded, n = batch.num_segments, batch.padded_length, batch.block_size
    panels = np.zeros((k, padded, n, 2 * n))
    panels[:, 0, :, :n] = batch.coupling_left
    panels[np.arange(k), batch.lengths - 1, :, n:] = \
        batch.coupling_right.transpose(0, 2, 1)
    return panels


def compute_schur(
    separator_diag: np.ndarray,
    batch: SegmentBatch,
    plan: PartitionPlan,
    separator_sub: np.ndarray | None = None,
) -> BlockTridiagonalMatrix:
    """Assemble the reduced separator system from the factored segments.

    Each segment contributes the 2n-by-2n product of its coupling panel
    with its stored intermediate factor; the four quadrants downdate the
    separator blocks flanking the segment, and contributions from the two
    segments sharing a separator accumulate. The result is SPD
    block-tridiagonal over the P separators.
    """
    if not batch.factored or batch.factor_f is None:
        raise ValueError("batch must be factorized with stored factors")
    n = batch.block_size
    count = batch.num_segments
    factor = batch.factor_f
    if separator_diag.shape != (plan.num_separators, n, n):
        raise DimensionMismatch(
            f"separator blocks {separator_diag.shape} do not match plan"
        )

    top = np.empty((count, n, 2 * n))
    gemm_acc_batch(top, batch.coupling_left, factor[:, 0], trans_a=True)
    last_rows = factor[np.arange(count), batch.lengths - 1]
    bottom = np.empty((count, n, 2 * n))
    gemm_acc_batch(bottom, batch.coupling_right, last_rows)

    schur_diag = separator_diag.copy()
    schur_diag[:-1] -= top[:, :, :n]
    schur_diag[1:] -= bottom[:, :, n:]
    if separator_sub is None:
        schur_sub = -bottom[:, :, :n]
    else:
        schur_sub = separator_sub - bottom[:, :, :n]
    return new_btd(plan.num_separators, n, schur_diag, schur_sub)


def split_rhs(
    rhs_blocks: np.ndarray, plan: PartitionPlan
) -> tuple[np.ndarray, np.ndarray]:
    """Partition (N, n, d) panels into interior and separator parts.

    Returns padded ``(K, J, n, d)`` interior panels (zero past each
    segment's true length) and ``(P, n, d)`` separator panels.
    """
    n, d = rhs_blocks.shape[1], rhs_blocks.shape[2]
    lengths = plan.segment_lengths()
    padded = int(lengths.max())
    interior = np.zeros((plan.num_segments, padded, n, d))
    for k, (start, stop) in enumerate(plan.segments):
        interior[k, :stop - start] = rhs_blocks[start:stop]
    separator = rhs_blocks[list(plan.separators)].copy()
    return interior, separator


def assemble_solution(
    interior: np.ndarray, separator: np.ndarray, plan: PartitionPlan
) -> np.ndarray:
    """Merge interior and separator panels back into the original ordering.

    Exact inverse of :func:`split_rhs`; pure copies, so a split followed by
    an assemble is a bitwise round trip.
    """
    n, d = separator.shape[1], separator.shape[2]
    out = np.empty((plan.num_blocks, n, d))
    out[list(plan.separators)] = separator
    for k, (start, stop) in enumerate(plan.segments):
        out[start:stop] = interior[k, :stop - start]
    return out


def compute_separator_rhs(
    batch: SegmentBatch,
    interior_rhs: np.ndarray,
    separator_rhs: np.ndarray,
    plan: PartitionPlan,
) -> np.ndarray:
    """Fold the interior right-hand sides onto the separators.

    Returns the updated separator panels: each segment contributes minus
    the product of its stored factor with its interior panels, split across
    the two separators flanking the segment.
    """
    factor = batch.factor_f
    count, padded, n = factor.shape[0], factor.shape[1], batch.block_size
    d = interior_rhs.shape[-1]
    if interior_rhs.shape != (count, padded, n, d):
        raise DimensionMismatch(
            f"interior rhs {interior_rhs.shape} not conformal with factors"
        )
    if separator_rhs.shape != (plan.num_separators, n, d):
        raise DimensionMismatch(
            f"separator rhs {separator_rhs.shape} does not match plan"
        )
    stacked_f = factor.reshape(count, padded * n, 2 * n)
    stacked_b = interior_rhs.reshape(count, padded * n, d)
    contrib = np.empty((count, 2 * n, d))
    gemm_acc_batch(contrib, stacked_f, stacked_b, trans_a=True, alpha=-1.0)
    updated = separator_rhs.copy()
    updated[:-1] += contrib[:, :n, :]
    updated[1:] += contrib[:, n:, :]
    return updated


def update_boundary(
    batch: SegmentBatch,
    interior_rhs: np.ndarray,
    separator_solution: np.ndarray,
    plan: PartitionPlan,
) -> np.ndarray:
    """Apply the separator solution to the segment boundaries, in place.

    Only the first and last true block row of each segment change; for a
    single-block segment both coupling updates land on that one row. Rows
    strictly between first and last are untouched. Returns ``interior_rhs``.
    """
    count = batch.num_segments
    if separator_solution.shape[0] != plan.num_separators:
        raise DimensionMismatch("separator solution does not match plan")
    gemm_acc_batch(interior_rhs[:, 0], batch.coupling_left,
                   separator_solution[:-1], alpha=-1.0, beta=1.0)
    idx = np.arange(count)
    last = batch.lengths - 1
    last_rows = interior_rhs[idx, last]
    gemm_acc_batch(last_rows, batch.coupling_right, separator_solution[1:],
                   trans_a=True, alpha=-1.0, beta=1.0)
    interior_rhs[idx, last] = last_rows
    return interior_rhs


def recursive_factorize(
    matrix: BlockTridiagonalMatrix, config: RecursionConfig | None = None
) -> FactorHierarchy:
    """Factor an SPD block-tridiagonal system for repeated solves.

    Reduces the system level by level until the crossover size, then
    factors the final reduced system serially. The input matrix is never
    mutated. Failures raise :class:`NotPositiveDefinite` carrying
    (level, member, block) coordinates, and :class:`LevelOverflow` if the
    configured depth cap is exceeded.
    """
    cfg = config or RecursionConfig()
    hierarchy = FactorHierarchy(matrix.num_blocks, matrix.block_size)
    current = matrix
    while True:
        level = len(hierarchy.levels)
        if not _should_recurse(current.num_blocks, cfg):
            base = current.copy() if current is matrix else current
            try:
                serial_factorize(base)
            except NotPositiveDefinite as err:
                raise err.with_coords(level=level) from None
            hierarchy.base = base
            return hierarchy
        if level >= cfg.max_levels:
            raise LevelOverflow(
                f"recursion needs more than max_levels={cfg.max_levels} levels"
            )
        factor_level, current = _factorize_level(current, cfg, level)
        hierarchy.levels.append(factor_level)


def _should_recurse(num_blocks: int, cfg: RecursionConfig) -> bool:
    if num_blocks < 3:
        return False
    if cfg.auto_crossover:
        return plan_partition(num_blocks, cfg).num_segments >= 2
    return num_blocks > cfg.crossover


def _factorize_level(
    matrix: BlockTridiagonalMatrix, cfg: RecursionConfig, level: int
) -> tuple[FactorLevel, BlockTridiagonalMatrix]:
    """Run one reduction level; returns its record and the Schur complement."""
    plan = plan_partition(matrix.num_blocks, cfg)
    batch, separator_diag, separator_sub = permute_split(matrix, plan)
    try:
        factorize_btd_batch(batch)
    except NotPositiveDefinite as err:
        raise err.with_coords(level=level) from None
    panels = _coupling_panels(batch)
    solve_btd_batch(batch, panels)
    batch.factor_f = panels
    schur = compute_schur(separator_diag, batch, plan, separator_sub)
    return FactorLevel(plan, batch), schur


def recursive_solve(hierarchy: FactorHierarchy, rhs: BlockRhs) -> BlockRhs:
    """Solve against a stored factorization.

    Neither the hierarchy nor ``rhs`` is mutated, so one factorization
    supports any number of solves, including concurrent ones with distinct
    right-hand sides.
    """
    if rhs.num_blocks != hierarchy.num_blocks \
            or rhs.block_size != hierarchy.block_size:
        raise DimensionMismatch(
            f"rhs ({rhs.num_blocks}, {rhs.block_size}) not conformal with "
            f"hierarchy ({hierarchy.num_blocks}, {hierarchy.block_size})"
        )
    return BlockRhs(_solve_level(hierarchy, 0, rhs.blocks.copy()))


def _solve_level(hierarchy: FactorHierarchy, level: int,
                 rhs_blocks: np.ndarray) -> np.ndarray:
    if level == len(hierarchy.levels):
        serial_solve(hierarchy.base, BlockRhs(rhs_blocks))
        return rhs_blocks
    record = hierarchy.levels[level]
    interior, separator = split_rhs(rhs_blocks, record.plan)
    separator = compute_separator_rhs(record.batch, interior, separator,
                                      record.plan)
    separator = _solve_level(hierarchy, level + 1, separator)
    update_boundary(record.batch, interior, separator, record.plan)
    solve_btd_batch(record.batch, interior)
    return assemble_solution(interior, separator, record.plan)
