"""Direct solver for SPD block-tridiagonal systems.

The solver reduces a block-tridiagonal system level by level: interior
segments are eliminated in parallel with batched block-Cholesky sweeps,
leaving a smaller SPD block-tridiagonal system over separator rows, until
a serial sweep finishes the reduced system. Factorization and solve are
separate phases, so one factorization serves many right-hand sides.
"""

from .block_cholesky import (
    factorize_btd_batch,
    serial_factorize,
    serial_solve,
    solve_btd_batch,
)
from .btdfile import read_btd, write_btd
from .core import (
    BlockRhs,
    BlockTridiagonalMatrix,
    FactorHierarchy,
    PartitionPlan,
    SegmentBatch,
    assemble_dense,
    btd_matmul,
    new_btd,
    new_rhs,
)
from .errors import (
    AsymmetricBlock,
    BadMagic,
    BlockTriError,
    BtdFormatError,
    DimensionMismatch,
    InvalidDimensions,
    IoError,
    LevelOverflow,
    NotPositiveDefinite,
    SingularDiagonal,
    TruncatedPayload,
    VersionUnsupported,
    ZeroPivot,
)
from .kalman import (
    StateSpaceModel,
    build_normal_equations,
    generate_rotation_model,
    read_model,
    write_model,
)
from .kernels import max_batch_threads, set_batch_threads
from .report import residual_report
from .schur import (
    RecursionConfig,
    assemble_solution,
    compute_schur,
    compute_separator_rhs,
    permute_split,
    plan_partition,
    recursive_factorize,
    recursive_solve,
    split_rhs,
    update_boundary,
)
from .synthgen import generate_spd_btd

__version__ = "0.1.0"

__all__ = [
    "AsymmetricBlock",
    "BadMagic",
    "BlockRhs",
    "BlockTriError",
    "BlockTridiagonalMatrix",
    "BtdFormatError",
    "DimensionMismatch",
    "FactorHierarchy",
    "InvalidDimensions",
    "IoError",
    "LevelOverflow",
    "NotPositiveDefinite",
    "PartitionPlan",
    "RecursionConfig",
    "SegmentBatch",
    "SingularDiagonal",
    "StateSpaceModel",
    "TruncatedPayload",
    "VersionUnsupported",
    "ZeroPivot",
    "assemble_dense",
    "assemble_solution",
    "btd_matmul",
    "build_normal_equations",
    "compute_schur",
    "compute_separator_rhs",
    "factorize_btd_batch",
    "generate_rotation_model",
    "generate_spd_btd",
    "max_batch_threads",
    "new_btd",
    "new_rhs",
    "permute_split",
    "plan_partition",
    "read_btd",
    "read_model",
    "recursive_factorize",
    "recursive_solve",
    "residual_report",
    "serial_factorize",
    "serial_solve",
    "set_batch_threads",
    "solve_btd_batch",
    "split_rhs",
    "update_boundary",
    "write_btd",
    "write_model",
]
