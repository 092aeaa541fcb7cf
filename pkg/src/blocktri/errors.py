"""Exception types shared across the package."""

from __future__ import annotations


class BlockTriError(Exception):
    """Base class for all blocktri errors."""


class DimensionMismatch(BlockTriError, ValueError):
    """Array counts or shapes disagree with the declared structure."""


class InvalidDimensions(BlockTriError, ValueError):
    """Requested problem dimensions are not representable."""


class AsymmetricBlock(BlockTriError, ValueError):
    """A diagonal block exceeds the symmetry tolerance."""

    def __init__(self, block: int, asymmetry: float, tolerance: float):
        self.block = block
        self.asymmetry = asymmetry
        self.tolerance = tolerance
        super().__init__(
            f"diagonal block {block} is asymmetric: max|D - D^T| = {asymmetry:.3e} "
            f"exceeds tolerance {tolerance:.3e}"
        )


class NotPositiveDefinite(BlockTriError):
    """A Cholesky pivot was not strictly positive.

    Coordinates identify where the failure occurred: ``pivot`` is the 1-based
    row within the failing dense block, ``block`` the block row within the
    system, ``member`` the batch member, and ``level`` the recursion level.
    Coordinates that do not apply at the raise site are ``None``.
    """

    def __init__(self, pivot: int, *, level=None, member=None, block=None,
                 context: str = ""):
        self.pivot = pivot
        self.level = level
        self.member = member
        self.block = block
        self.context = context
        parts = [f"pivot {pivot}"]
        if block is not None:
            parts.append(f"block {block}")
        if member is not None:
            parts.append(f"member {member}")
        if level is not None:
            parts.append(f"level {level}")
        msg = "matrix is not positive definite at " + ", ".join(parts)
        if context:
            msg += f" ({context})"
        super().__init__(msg)

    def with_coords(self, *, level=None, member=None, block=None,
                    context: str = "") -> "NotPositiveDefinite":
        """Return a copy with missing coordinates filled in."""
        return NotPositiveDefinite(
            self.pivot,
            level=self.level if self.level is not None else level,
            member=self.member if self.member is not None else member,
            block=self.block if self.block is not None else block,
            context=self.context or context,
        )


class SingularDiagonal(BlockTriError):
    """A triangular factor has an exactly zero diagonal entry."""

    def __init__(self, row: int, *, member=None):
        self.row = row
        self.member = member
        where = f"row {row}" + (f", member {member}" if member is not None else "")
        super().__init__(f"triangular factor has zero diagonal at {where}")


class ZeroPivot(BlockTriError):
    """Scalar elimination hit an exactly zero pivot."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"zero pivot at index {index}")


class LevelOverflow(BlockTriError):
    """Recursion exceeded the configured maximum number of levels."""


class IoError(BlockTriError):
    """File could not be read or written."""


class BtdFormatError(IoError):
    """File contents do not form a valid container."""


class BadMagic(BtdFormatError):
    """File does not start with the expected magic bytes."""


class VersionUnsupported(BtdFormatError):
    """File declares a container version this build cannot read."""


class TruncatedPayload(BtdFormatError):
    """File payload size disagrees with the header."""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"payload size mismatch: expected {expected} bytes, found {actual}"
        )
