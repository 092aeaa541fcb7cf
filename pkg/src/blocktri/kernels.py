"""Dense kernel layer: Cholesky factor, triangular solve, multiply-accumulate.

Each primitive comes in a single-block and a batched form. A batch is a
stacked float64 array whose leading axis indexes K independent members, all
with the same trailing shape; members occupy disjoint memory, so batched
execution may process them concurrently. The batched result is always
observationally equal to looping the single-block form over the members,
and the single-block form is literally the K=1 batch, so the two paths are
bitwise identical.

Batched calls can be chunked across a thread pool when the batch is large
enough to amortize the dispatch. The pool size is capped by the
``BLOCKTRI_THREADS`` environment variable (or :func:`set_batch_threads`);
a cap of 1 forces sequential execution. Chunking never changes results.

Inverses are never formed explicitly: every ``(.)^{-1}`` in the solver
layers above is realized as a triangular solve against a stored Cholesky
factor.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, SingularDiagonal

# Unblocked triangular sweep below this order; 32-wide tiles above it.
_TRSM_UNBLOCKED_MAX = 64
_TRSM_TILE = 32

# Minimum per-call element count before thread chunking is considered.
_PARALLEL_MIN_ELEMS = 1 << 15

_batch_threads: int | None = None
_pool: ThreadPoolExecutor | None = None
_pool_size = 0


def max_batch_threads() -> int:
    """Current cap on threads used to chunk batched kernels."""
    if _batch_threads is not None:
        return _batch_threads
    env = os.environ.get("BLOCKTRI_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def set_batch_threads(count: int | None) -> None:
    """Override the thread cap (None restores the environment default)."""
    global _batch_threads
    _batch_threads = None if count is None else max(1, int(count))


def _get_pool(size: int) -> ThreadPoolExecutor:
    global _pool, _pool_size
    if _pool is None or _pool_size < size:
        if _pool is not None:
            _pool.shutdown(wait=True)
        _pool = ThreadPoolExecutor(max_workers=size)
        _pool_size = size
    return _pool


def _run_members(body, count: int, elems_per_member: int) -> None:
    """Run ``body(lo, hi)`` over member ranges, possibly on worker threads.

    ``body`` must touch only members [lo, hi) and raise errors whose
    ``member`` attribute (if any) is chunk-local; it is remapped here.
    """
    cap = max_batch_threads()
    if cap <= 1 or count < 2 * cap or count * elems_per_member < _PARALLEL_MIN_ELEMS:
        body(0, count)
        return
    bounds = np.linspace(0, count, cap + 1).astype(int)
    ranges = [(int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
    pool = _get_pool(cap)
    futures = {pool.submit(body, lo, hi): lo for lo, hi in ranges}
    wait(list(futures))
    failures = []
    for fut, lo in futures.items():
        err = fut.exception()
        if err is not None:
            member = getattr(err, "member", None)
            if isinstance(err, NotPositiveDefinite) and err.member is not None:
                err = NotPositiveDefinite(err.pivot, level=err.level,
                                          member=err.member + lo,
                                          block=err.block, context=err.context)
            elif isinstance(err, SingularDiagonal) and err.member is not None:
                err = SingularDiagonal(err.row, member=err.member + lo)
            failures.append((member + lo if member is not None else lo, err))
    if failures:
        failures.sort(key=lambda pair: pair[0])
        raise failures[0][1]


@dataclass(frozen=True)
class KernelBatchView:
    """K same-shaped dense panels backed by one shared arena.

    Members are the slices ``arena[k]`` and are pairwise disjoint, which is
    what allows batched kernels to write them concurrently.
    """

    arena: np.ndarray  # (K, rows, cols)

    def __post_init__(self):
        if self.arena.ndim != 3:
            raise DimensionMismatch(
                f"batch view needs a (K, rows, cols) array, got {self.arena.shape}"
            )
        if self.arena.shape[0] > 1:
            span = self.arena.shape[1] * self.arena.shape[2] * self.arena.itemsize
            if abs(self.arena.strides[0]) < span:
                raise ValueError("batch members overlap in memory")

    @property
    def count(self) -> int:
        return self.arena.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.arena.shape[1:]

    def member(self, k: int) -> np.ndarray:
        return self.arena[k]


def _first_bad_pivot(block: np.ndarray) -> int:
    """1-based index of the first non-positive Cholesky pivot, or 0 if none.

    Plain unblocked elimination, used only on the error path to attach a
    pivot coordinate after the fast factorization has already failed.
    """
    a = np.array(block, dtype=np.float64)
    n = a.shape[0]
    for j in range(n):
        d = a[j, j]
        if not (d > 0.0) or not np.isfinite(d):
            return j + 1
        root = np.sqrt(d)
        if j + 1 < n:
            col = a[j + 1:, j] / root
            a[j + 1:, j + 1:] -= np.outer(col, col)
    return 0


def _locate_chol_failure(stack: np.ndarray) -> tuple[int, int]:
    """(member, 1-based pivot) of the first failing member in a batch."""
    for k in range(stack.shape[0]):
        pivot = _first_bad_pivot(stack[k])
        if pivot:
            return k, pivot
    return stack.shape[0] - 1, stack.shape[1]


def chol_factor_batch(blocks: np.ndarray) -> None:
    """Factor each symmetric member in place as L with member = L L^T.

    The strict upper triangle of every member is zeroed. Raises
    :class:`NotPositiveDefinite` with the first failing (member, pivot) if
    any member is not SPD; the batch contents are then unspecified.
    """
    _check_batch(blocks, square=True)

    def body(lo: int, hi: int) -> None:
        view = blocks[lo:hi]
        try:
            view[:] = np.linalg.cholesky(view)
        except np.linalg.LinAlgError:
            member, pivot = _locate_chol_failure(view)
            raise NotPositiveDefinite(pivot, member=member) from None

    _run_members(body, blocks.shape[0], blocks.shape[1] * blocks.shape[2])


def chol_factor(block: np.ndarray) -> None:
    """In-place lower Cholesky factor of one symmetric block."""
    try:
        chol_factor_batch(block[None])
    except NotPositiveDefinite as err:
        raise NotPositiveDefinite(err.pivot) from None


def _check_batch(arr: np.ndarray, square: bool = False) -> None:
    if arr.ndim != 3:
        raise DimensionMismatch(f"expected (K, rows, cols) batch, got shape {arr.shape}")
    if square and arr.shape[1] != arr.shape[2]:
        raise DimensionMismatch(f"expected square members, got shape {arr.shape}")


def _forward_sweep(factors, panels, lo, hi):
    for i in range(lo, hi):
        if i > lo:
            panels[:, i, :] -= np.matmul(
                factors[:, i:i + 1, lo:i], panels[:, lo:i, :])[:, 0, :]
        panels[:, i, :] /= factors[:, i, i, None]


def _backward_sweep(factors, panels, lo, hi):
    for i in range(hi - 1, lo - 1, -1):
        if i < hi - 1:
            panels[:, i, :] -= np.matmul(
                factors[:, i + 1:hi, i][:, None, :], panels[:, i + 1:hi, :])[:, 0, :]
        panels[:, i, :] /= factors[:, i, i, None]


def trsm_lower_batch(factors: np.ndarray, panels: np.ndarray,
                     trans: bool = False) -> None:
    """Solve each member's triangular system in place on ``panels``.

    ``trans=False`` overwrites panel k with L_k^{-1} B_k, ``trans=True``
    with L_k^{-T} B_k, where L_k is the lower triangle of ``factors[k]``.
    """
    _check_batch(factors, square=True)
    _check_batch(panels)
    if panels.shape[0] != factors.shape[0] or panels.shape[1] != factors.shape[1]:
        raise DimensionMismatch(
            f"panel batch {panels.shape} not conformal with factors {factors.shape}"
        )
    n = factors.shape[1]
    diagonals = np.einsum("kii->ki", factors)
    zero = np.argwhere(diagonals == 0.0)
    if zero.size:
        member, row = (int(v) for v in zero[0])
        raise SingularDiagonal(row + 1, member=member)

    def body(lo_k: int, hi_k: int) -> None:
        f = factors[lo_k:hi_k]
        p = panels[lo_k:hi_k]
        if not trans:
            if n <= _TRSM_UNBLOCKED_MAX:
                _forward_sweep(f, p, 0, n)
            else:
                for lo in range(0, n, _TRSM_TILE):
                    hi = min(lo + _TRSM_TILE, n)
                    if lo:
                        p[:, lo:hi, :] -= np.matmul(f[:, lo:hi, :lo], p[:, :lo, :])
                    _forward_sweep(f, p, lo, hi)
        else:
            if n <= _TRSM_UNBLOCKED_MAX:
                _backward_sweep(f, p, 0, n)
            else:
                for hi in range(n, 0, -_TRSM_TILE):
                    lo = max(hi - _TRSM_TILE, 0)
                    if hi < n:
                        p[:, lo:hi, :] -= np.matmul(
                            f[:, hi:, lo:hi].transpose(0, 2, 1), p[:, hi:, :])
                    _backward_sweep(f, p, lo, hi)

    work = n * panels.shape[2]
    _run_members(body, factors.shape[0], work)


def trsm_lower(factor: np.ndarray, panel: np.ndarray, trans: bool = False) -> None:
    """Single-block triangular solve, in place on ``panel``."""
    try:
        trsm_lower_batch(factor[None], panel[None], trans=trans)
    except SingularDiagonal as err:
        raise SingularDiagonal(err.row) from None


def gemm_acc_batch(out: np.ndarray, a: np.ndarray, b: np.ndarray,
                   trans_a: bool = False, trans_b: bool = False,
                   alpha: float = 1.0, beta: float = 0.0) -> None:
    """Accumulate ``out <- alpha * op(a) @ op(b) + beta * out`` per member.

    ``out`` must not alias ``a`` or ``b``.
    """
    _check_batch(out)
    _check_batch(a)
    _check_batch(b)
    op_a = a.transpose(0, 2, 1) if trans_a else a
    op_b = b.transpose(0, 2, 1) if trans_b else b
    k = out.shape[0]
    if op_a.shape[0] != k or op_b.shape[0] != k:
        raise DimensionMismatch("batch counts disagree")
    m, q = op_a.shape[1], op_a.shape[2]
    p = op_b.shape[2]
    if op_b.shape[1] != q or out.shape[1] != m or out.shape[2] != p:
        raise DimensionMismatch(
            f"gemm shapes do not conform: {op_a.shape} @ {op_b.shape} -> {out.shape}"
        )

    def body(lo: int, hi: int) -> None:
        c = out[lo:hi]
        if alpha == 0.0:
            if beta == 0.0:
                c[:] = 0.0
            elif beta != 1.0:
                c *= beta
            return
        prod = np.matmul(op_a[lo:hi], op_b[lo:hi])
        if alpha != 1.0:
            prod *= alpha
        if beta == 0.0:
            c[:] = prod
        else:
            if beta != 1.0:
                c *= beta
            c += prod

    _run_members(body, k, m * q + q * p)


def gemm_acc(out: np.ndarray, a: np.ndarray, b: np.ndarray,
             trans_a: bool = False, trans_b: bool = False,
             alpha: float = 1.0, beta: float = 0.0) -> None:
    """Single-block multiply-accumulate, in place on ``out``."""
    gemm_acc_batch(out[None], a[None], b[None],
                   trans_a=trans_a, trans_b=trans_b, alpha=alpha, beta=beta)


def batched(op, *views, **kwargs) -> None:
    """Apply a single-block kernel across every member of the given batches.

    ``op`` is one of :func:`chol_factor`, :func:`trsm_lower` or
    :func:`gemm_acc`; ``views`` are :class:`KernelBatchView` instances or
    plain stacked arrays, in the same argument order as the single-block
    form. Equivalent to looping ``op`` over members in any order.
    """
    arrays = [v.arena if isinstance(v, KernelBatchView) else np.asarray(v)
              for v in views]
    table = {chol_factor: chol_factor_batch,
             trsm_lower: trsm_lower_batch,
             gemm_acc: gemm_acc_batch}
    try:
        impl = table[op]
    except KeyError:
        raise ValueError(f"not a batchable kernel: {op!r}") from None
    impl(*arrays, **kwargs)
