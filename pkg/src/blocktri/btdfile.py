"""Binary container for block-tridiagonal systems.

Layout (all little-endian):

    bytes 0..3    magic ``BTD1``
    bytes 4..7    version, u32, currently 1
    bytes 8..15   N, u64 block count
    bytes 16..19  n, u32 block dimension
    bytes 20..23  d, u32 RHS column count (0 when no RHS)
    bytes 24..27  flags, u32; bit 0 set when an RHS payload follows
    bytes 28..39  reserved, zero
    payload       N diagonal blocks, then N-1 sub-diagonal blocks, then the
                  optional RHS panels; float64, block-major, row-major
                  within each block

Total size is 40 + 8*(N*n^2 + (N-1)*n^2 + rhs*N*n*d) bytes. Round trips are
bit-exact for every payload double, including negative zero: the reader
wraps the raw blocks without re-validating or re-symmetrizing.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .core import BlockRhs, BlockTridiagonalMatrix
from .errors import (
    BadMagic,
    BtdFormatError,
    IoError,
    TruncatedPayload,
    VersionUnsupported,
)

MAGIC = b"BTD1"
VERSION = 1
HEADER_SIZE = 40
_HEADER_FMT = "<4sIQIII"
_FLAG_RHS = 1


def _write_array(fh, arr: np.ndarray) -> None:
    np.ascontiguousarray(arr, dtype="<f8").tofile(fh)


def _read_array(fh, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    arr = np.fromfile(fh, dtype="<f8", count=count)
    if arr.size != count:
        raise TruncatedPayload(count * 8, arr.size * 8)
    return arr.astype(np.float64, copy=False).reshape(shape)


def write_btd(path, matrix: BlockTridiagonalMatrix,
              rhs: BlockRhs | None = None) -> None:
    """Write a system (and optional RHS) to ``path``."""
    num_blocks, n = matrix.num_blocks, matrix.block_size
    d = rhs.num_columns if rhs is not None else 0
    flags = _FLAG_RHS if rhs is not None else 0
    if rhs is not None and (rhs.num_blocks != num_blocks or rhs.block_size != n):
        raise BtdFormatError("rhs is not conformal with the matrix")
    header = struct.pack(_HEADER_FMT, MAGIC, VERSION, num_blocks, n, d, flags)
    header += b"\x00" * (HEADER_SIZE - len(header))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            _write_array(fh, matrix.diag)
            _write_array(fh, matrix.sub)
            if rhs is not None:
                _write_array(fh, rhs.blocks)
    except OSError as err:
        raise IoError(f"cannot write {path}: {err}") from err


def read_btd(path) -> tuple[BlockTridiagonalMatrix, BlockRhs | None]:
    """Read a system written by :func:`write_btd`, bit-exactly."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(HEADER_SIZE)
            if len(head) < HEADER_SIZE:
                raise TruncatedPayload(HEADER_SIZE, len(head))
            magic, version, num_blocks, n, d, flags = struct.unpack(
                _HEADER_FMT, head[:struct.calcsize(_HEADER_FMT)])
            if magic != MAGIC:
                raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
            if version != VERSION:
                raise VersionUnsupported(f"container version {version} unsupported")
            if num_blocks < 1 or n < 1:
                raise BtdFormatError(
                    f"invalid header dimensions N={num_blocks}, n={n}")
            has_rhs = bool(flags & _FLAG_RHS)
            expected = HEADER_SIZE + 8 * (
                num_blocks * n * n + (num_blocks - 1) * n * n
                + (num_blocks * n * d if has_rhs else 0))
            actual = os.fstat(fh.fileno()).st_size
            if actual != expected:
                raise TruncatedPayload(expected, actual)
            diag = _read_array(fh, (num_blocks, n, n))
            sub = _read_array(fh, (num_blocks - 1, n, n))
            rhs = None
            if has_rhs:
                rhs = BlockRhs(_read_array(fh, (num_blocks, n, d)))
            return BlockTridiagonalMatrix(diag, sub), rhs
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err
