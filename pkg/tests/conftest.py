"""Shared test helpers."""

from __future__ import annotations

import numpy as np
import pytest

from blocktri.core import BlockTridiagonalMatrix, SegmentBatch


def random_spd(n: int, rng: np.random.Generator) -> np.ndarray:
    """Dense SPD matrix with modest conditioning."""
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop product, the reference for the multiply kernel."""
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def batch_from_interiors(interiors: list[BlockTridiagonalMatrix],
                         coupling_left=None,
                         coupling_right=None) -> SegmentBatch:
    """Pack standalone systems into a (possibly ragged) segment batch.

    Pads shorter members with identity diagonal and zero sub-diagonal
    blocks, mirroring what the partition split produces. Couplings default
    to zero blocks.
    """
    n = interiors[0].block_size
    count = len(interiors)
    lengths = np.array([m.num_blocks for m in interiors], dtype=np.int64)
    padded = int(lengths.max())
    diag = np.broadcast_to(np.eye(n), (count, padded, n, n)).copy()
    sub = np.zeros((count, max(padded - 1, 0), n, n))
    for k, m in enumerate(interiors):
        diag[k, :m.num_blocks] = m.diag
        if m.num_blocks > 1:
            sub[k, :m.num_blocks - 1] = m.sub
    zeros = np.zeros((count, n, n))
    return SegmentBatch(
        n, lengths, diag, sub,
        zeros.copy() if coupling_left is None else np.array(coupling_left, dtype=float),
        zeros.copy() if coupling_right is None else np.array(coupling_right, dtype=float),
    )


def padded_rhs(rhs_list: list[np.ndarray], padded: int) -> np.ndarray:
    """Stack per-member (J_k, n, d) panels into a zero-padded batch."""
    count = len(rhs_list)
    n, d = rhs_list[0].shape[1], rhs_list[0].shape[2]
    out = np.zeros((count, padded, n, d))
    for k, panel in enumerate(rhs_list):
        out[k, :panel.shape[0]] = panel
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
