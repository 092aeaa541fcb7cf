"""Block-structured matrix containers and partition metadata.

A symmetric positive definite block-tridiagonal matrix with N block rows of
size n is stored as two contiguous arenas: the N diagonal blocks and the N-1
sub-diagonal blocks. Only the lower off-diagonal is kept; the upper blocks
are implied by symmetry and materialized only by :func:`assemble_dense`.
Right-hand sides and solutions are conformal stacks of N panels of shape
(n, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, AsymmetricBlock

#: Relative tolerance for accepting a diagonal block as symmetric.
SYMMETRY_RTOL = 1e-12


@dataclass
class BlockTridiagonalMatrix:
    """N diagonal blocks and N-1 sub-diagonal blocks of an SPD matrix.

    Attributes
    ----------
    diag : ndarray, shape (N, n, n)
        Diagonal blocks, each symmetric.
    sub : ndarray, shape (N-1, n, n)
        Sub-diagonal blocks; entry ``sub[i]`` couples block row i+1 to
        block row i. The matching upper block is its transpose and is
        never stored.
    """

    diag: np.ndarray
    sub: np.ndarray

    @property
    def num_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[1]

    def copy(self) -> "BlockTridiagonalMatrix":
        return BlockTridiagonalMatrix(self.diag.copy(), self.sub.copy())


@dataclass
class BlockRhs:
    """Right-hand side / solution panels conformal with a block matrix."""

    blocks: np.ndarray  # (N, n, d)

    @property
    def num_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    @property
    def num_columns(self) -> int:
        return self.blocks.shape[2]

    def copy(self) -> "BlockRhs":
        return BlockRhs(self.blocks.copy())


@dataclass(frozen=True)
class PartitionPlan:
    """Separator indices and interior segments for one recursion level.

    Block indices are 0-based. Both endpoints are always separators, so
    every segment is flanked by exactly two separators and consecutive
    separators are never adjacent.
    """

    num_blocks: int
    separators: tuple[int, ...]
    segments: tuple[tuple[int, int], ...]  # half-open (start, stop)

    @property
    def num_separators(self) -> int:
        return len(self.separators)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    def segment_lengths(self) -> np.ndarray:
        return np.array([stop - start for start, stop in self.segments],
                        dtype=np.int64)

    def validate(self) -> None:
        """Check the structural invariants, raising ValueError on violation."""
        seps = self.separators
        if not seps or seps[0] != 0 or seps[-1] != self.num_blocks - 1:
            raise ValueError("endpoints must be separators")
        if any(b <= a for a, b in zip(seps, seps[1:])):
            raise ValueError("separators must be strictly increasing")
        if len(self.segments) != len(seps) - 1:
            raise ValueError("segment count must be one less than separator count")
        covered = set(seps)
        for (a, b), (lo, hi) in zip(zip(seps, seps[1:]), self.segments):
            if not (lo == a + 1 and hi == b):
                raise ValueError("segments must fill the gaps between separators")
            if hi <= lo:
                raise ValueError("empty segment (adjacent separators)")
            covered.update(range(lo, hi))
        if covered != set(range(self.num_blocks)):
            raise ValueError("plan does not cover every block exactly once")


@dataclass
class SegmentBatch:
    """Per-segment interior systems, couplings, and intermediate factors.

    The K segment interiors are stored in padded arenas so batched kernels
    see uniform shapes: ``diag`` is (K, J, n, n) and ``sub`` is
    (K, J-1, n, n) where J is the longest segment. Rows past a segment's
    true length hold identity diagonal blocks and zero sub-diagonal blocks,
    which makes padded sweep steps exact no-ops.

    ``coupling_left[k]`` is the original sub-diagonal block linking the left
    separator into the segment's first interior row; ``coupling_right[k]``
    links the last interior row into the right separator (stored untransposed,
    i.e. as the block from the row of the right separator).

    After factorization, ``factor_f`` holds the (K, J, n, 2n) panels of the
    interior inverse applied to the coupling columns; padded rows stay zero.
    """

    block_size: int
    lengths: np.ndarray               # (K,) true segment lengths
    diag: np.ndarray                  # (K, J, n, n)
    sub: np.ndarray                   # (K, J-1, n, n)
    coupling_left: np.ndarray         # (K, n, n)
    coupling_right: np.ndarray        # (K, n, n)
    factor_f: np.ndarray | None = None
    factored: bool = False

    @property
    def num_segments(self) -> int:
        return self.diag.shape[0]

    @property
    def padded_length(self) -> int:
        return self.diag.shape[1]

    def interior(self, k: int) -> BlockTridiagonalMatrix:
        """Zero-copy view of segment k's interior as a block matrix."""
        j = int(self.lengths[k])
        return BlockTridiagonalMatrix(self.diag[k, :j], self.sub[k, :j - 1])


@dataclass
class FactorHierarchy:
    """Factored interiors and couplings per level plus the base-case factor.

    The solve phase walks ``levels`` top-down splitting the right-hand side,
    then back up applying interior solves; ``base`` is the serially factored
    final reduced system.
    """

    num_blocks: int
    block_size: int
    levels: list = field(default_factory=list)   # list[FactorLevel]
    base: BlockTridiagonalMatrix | None = None


def new_btd(num_blocks: int, block_size: int, diag, sub) -> BlockTridiagonalMatrix:
    """Validate and build a block-tridiagonal matrix from its blocks.

    Parameters
    ----------
    num_blocks, block_size : int
        Declared block count N and block dimension n; checked against the
        supplied arrays.
    diag : sequence of N (n, n) arrays, or an (N, n, n) array
        Diagonal blocks. Each must be symmetric to within a relative
        tolerance of ``SYMMETRY_RTOL`` (scaled by the block's max-abs);
        accepted blocks are stored exactly symmetrized as (D + D^T)/2.
    sub : sequence of N-1 (n, n) arrays, or an (N-1, n, n) array
        Sub-diagonal blocks.

    Raises
    ------
    DimensionMismatch
        If counts or shapes disagree with the declared structure.
    AsymmetricBlock
        If a diagonal block's asymmetry exceeds the tolerance.
    """
    if num_blocks < 1 or block_size < 1:
        raise DimensionMismatch(
            f"need num_blocks >= 1 and block_size >= 1, got ({num_blocks}, {block_size})"
        )
    diag = _as_block_stack(diag, num_blocks, block_size, "diag")
    sub = _as_block_stack(sub, num_blocks - 1, block_size, "sub")

    asym = np.abs(diag - diag.transpose(0, 2, 1)).max(axis=(1, 2))
    scale = np.abs(diag).max(axis=(1, 2))
    bad = np.flatnonzero(asym > SYMMETRY_RTOL * np.maximum(scale, 1e-300))
    if bad.size:
        b = int(bad[0])
        raise AsymmetricBlock(b, float(asym[b]), float(SYMMETRY_RTOL * scale[b]))
    diag = (diag + diag.transpose(0, 2, 1)) / 2.0
    return BlockTridiagonalMatrix(diag, sub)


def _as_block_stack(blocks, count: int, size: int, name: str) -> np.ndarray:
    """Coerce a block sequence to a contiguous (count, size, size) float64 stack."""
    if isinstance(blocks, np.ndarray) and blocks.ndim == 3:
        arr = np.ascontiguousarray(blocks, dtype=np.float64)
    else:
        blocks = list(blocks)
        if len(blocks) != count:
            raise DimensionMismatch(
                f"expected {count} {name} blocks, got {len(blocks)}"
            )
        arr = np.empty((count, size, size), dtype=np.float64)
        for i, b in enumerate(blocks):
            b = np.asarray(b, dtype=np.float64)
            if b.shape != (size, size):
                raise DimensionMismatch(
                    f"{name} block {i} has shape {b.shape}, expected {(size, size)}"
                )
            arr[i] = b
    if arr.shape != (count, size, size):
        raise DimensionMismatch(
            f"{name} arena has shape {arr.shape}, expected {(count, size, size)}"
        )
    return arr


def new_rhs(matrix: BlockTridiagonalMatrix, blocks) -> BlockRhs:
    """Build a right-hand side conformal with ``matrix``."""
    arr = np.asarray(blocks, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] != matrix.num_blocks \
            or arr.shape[1] != matrix.block_size:
        raise DimensionMismatch(
            f"rhs shape {arr.shape} not conformal with "
            f"({matrix.num_blocks}, {matrix.block_size}, d)"
        )
    return BlockRhs(np.ascontiguousarray(arr))


def check_conformal(matrix: BlockTridiagonalMatrix, rhs: BlockRhs) -> None:
    if rhs.num_blocks != matrix.num_blocks or rhs.block_size != matrix.block_size:
        raise DimensionMismatch(
            f"rhs ({rhs.num_blocks}, {rhs.block_size}) not conformal with "
            f"matrix ({matrix.num_blocks}, {matrix.block_size})"
        )


def assemble_dense(matrix: BlockTridiagonalMatrix) -> np.ndarray:
    """Materialize the full (Nn, Nn) symmetric matrix.

    Upper off-diagonal blocks are written by transposing the stored lower
    blocks, so the output equals its own transpose bitwise. Intended for
    oracles and tests, not production paths.
    """
    N, n = matrix.num_blocks, matrix.block_size
    full = np.zeros((N * n, N * n))
    for i in range(N):
        full[i * n:(i + 1) * n, i * n:(i + 1) * n] = matrix.diag[i]
    for i in range(N - 1):
        block = matrix.sub[i]
        full[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n] = block
        full[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = block.T
    return full


def btd_matmul(matrix: BlockTridiagonalMatrix, rhs: BlockRhs) -> BlockRhs:
    """One pass of block sparse matrix-panel multiply, Y = A X."""
    check_conformal(matrix, rhs)
    x = rhs.blocks
    y = np.matmul(matrix.diag, x)
    if matrix.num_blocks > 1:
        y[1:] += np.matmul(matrix.sub, x[:-1])
        y[:-1] += np.matmul(matrix.sub.transpose(0, 2, 1), x[1:])
    return BlockRhs(y)
