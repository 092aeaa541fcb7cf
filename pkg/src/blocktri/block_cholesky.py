"""Batched block-Cholesky factorization and solve for block-tridiagonal systems.

One sweep implementation serves both the batched case (K independent segment
interiors, padded to a common length) and the serial case (K=1, the full
system). Factorization overwrites the diagonal blocks with their Cholesky
factors L_jj and the sub-diagonal blocks with L_{j+1,j}; the solve overwrites
the right-hand side with the solution via a forward then a backward sweep.

Within a member the block recurrence is strictly sequential in j; all
parallelism is across batch members inside the kernel layer. Segments padded
beyond their true length carry identity diagonal and zero sub-diagonal
blocks, so the padded sweep steps are exact no-ops and no masking is needed.
"""

from __future__ import annotations

import numpy as np

from .core import BlockRhs, BlockTridiagonalMatrix, SegmentBatch, check_conformal
from .errors import DimensionMismatch, NotPositiveDefinite
from .kernels import chol_factor_batch, gemm_acc_batch, trsm_lower_batch


def _factorize_stacked(diag: np.ndarray, sub: np.ndarray) -> None:
    """Block-Cholesky sweep over (K, J, n, n) / (K, J-1, n, n) arenas."""
    num_steps = diag.shape[1]
    _chol_step(diag[:, 0], 0)
    for j in range(num_steps - 1):
        coupling = sub[:, j]
        # Solving in place through the transposed view leaves the stored
        # block holding L_{j+1,j} = A_{j+1,j} L_jj^{-T} directly.
        trsm_lower_batch(diag[:, j], coupling.transpose(0, 2, 1))
        gemm_acc_batch(diag[:, j + 1], coupling, coupling,
                       trans_b=True, alpha=-1.0, beta=1.0)
        _chol_step(diag[:, j + 1], j + 1)


def _chol_step(blocks: np.ndarray, block_index: int) -> None:
    try:
        chol_factor_batch(blocks)
    except NotPositiveDefinite as err:
        raise err.with_coords(block=block_index) from None


def _solve_stacked(diag: np.ndarray, sub: np.ndarray, rhs: np.ndarray) -> None:
    """Forward/backward block substitution, in place on (K, J, n, d) rhs."""
    num_steps = diag.shape[1]
    trsm_lower_batch(diag[:, 0], rhs[:, 0])
    for j in range(1, num_steps):
        gemm_acc_batch(rhs[:, j], sub[:, j - 1], rhs[:, j - 1],
                       alpha=-1.0, beta=1.0)
        trsm_lower_batch(diag[:, j], rhs[:, j])
    trsm_lower_batch(diag[:, num_steps - 1], rhs[:, num_steps - 1], trans=True)
    for j in range(num_steps - 2, -1, -1):
        gemm_acc_batch(rhs[:, j], sub[:, j], rhs[:, j + 1],
                       trans_a=True, alpha=-1.0, beta=1.0)
        trsm_lower_batch(diag[:, j], rhs[:, j], trans=True)


def factorize_btd_batch(batch: SegmentBatch) -> None:
    """Factor every segment interior of ``batch`` in place.

    Raises :class:`NotPositiveDefinite` carrying (member, block) coordinates
    if any interior fails; the batch contents are then unspecified and the
    caller should discard the working copy.
    """
    _factorize_stacked(batch.diag, batch.sub)
    batch.factored = True


def solve_btd_batch(batch: SegmentBatch, rhs: np.ndarray) -> None:
    """Solve the factored interiors against conformal panels, in place.

    ``rhs`` has shape (K, J, n, d) matching the batch's padded arenas; rows
    past a segment's true length must be zero on entry and remain zero.
    """
    if not batch.factored:
        raise ValueError("batch must be factorized before solving")
    expected = (batch.num_segments, batch.padded_length, batch.block_size)
    if rhs.ndim != 4 or rhs.shape[:3] != expected:
        raise DimensionMismatch(
            f"rhs shape {rhs.shape} not conformal with batch {expected}"
        )
    _solve_stacked(batch.diag, batch.sub, rhs)


def serial_factorize(matrix: BlockTridiagonalMatrix) -> None:
    """Factor a single block-tridiagonal system in place (the K=1 sweep)."""
    try:
        _factorize_stacked(matrix.diag[None], matrix.sub[None])
    except NotPositiveDefinite as err:
        raise err.with_coords(member=0) from None


def serial_solve(matrix: BlockTridiagonalMatrix, rhs: BlockRhs) -> None:
    """Solve a serially factored system in place on ``rhs``."""
    check_conformal(matrix, rhs)
    _solve_stacked(matrix.diag[None], matrix.sub[None], rhs.blocks[None])
