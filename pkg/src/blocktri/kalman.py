"""Normal equations of linear-Gaussian MAP trajectory smoothing.

Given a state-space model with transitions G_k, observations H_k, and SPD
noise covariances Q_k, R_k, the most likely state trajectory over the whole
horizon solves an SPD block-tridiagonal system whose blocks are

    A[k, k]   = inv(Q_k) + G_{k+1}^T inv(Q_{k+1}) G_{k+1} + H_k^T inv(R_k) H_k
    A[k+1, k] = -inv(Q_{k+1}) G_{k+1}
    b[k]      = H_k^T inv(R_k) z_k + G_k^T inv(Q_k) zeta_k

with the convention that the transition past the horizon is zero. Every
inverse is realized through Cholesky solves of Q_k or R_k; no matrix is
ever inverted explicitly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .btdfile import _read_array, _write_array
from .core import BlockRhs, BlockTridiagonalMatrix, new_btd
from .errors import (
    BadMagic,
    BtdFormatError,
    DimensionMismatch,
    InvalidDimensions,
    IoError,
    NotPositiveDefinite,
    TruncatedPayload,
    VersionUnsupported,
)
from .kernels import chol_factor, trsm_lower

#: Damping applied to every rotation plane of the generated dynamics.
ROTATION_DAMPING = 0.98
#: Overall scale of the generated process covariance.
PROCESS_COV_SCALE = 0.01
#: Reference time step at which generated rotation angles are drawn.
REFERENCE_DT = 0.1


@dataclass
class StateSpaceModel:
    """Linear-Gaussian state-space model over a fixed horizon.

    Arrays are indexed by time step k = 0..N-1. ``measurement_cov`` is
    either dense (N, m, m) or, as a specialization for diagonal noise,
    just the diagonals (N, m). The first transition must be the identity
    (the initial state is treated as known and folded into the offsets).
    """

    transition: np.ndarray       # (N, n, n)
    observation: np.ndarray      # (N, m, n)
    process_cov: np.ndarray      # (N, n, n) SPD
    measurement_cov: np.ndarray  # (N, m, m) SPD, or (N, m) diagonals
    observations: np.ndarray     # (N, m)
    prior_offsets: np.ndarray    # (N, n)
    dt: float = REFERENCE_DT
    seed: int | None = None

    def __post_init__(self):
        horizon, n = self.transition.shape[0], self.transition.shape[-1]
        m = self.observation.shape[1]
        if self.transition.shape != (horizon, n, n):
            raise DimensionMismatch("transition must be (N, n, n)")
        if self.observation.shape != (horizon, m, n):
            raise DimensionMismatch("observation must be (N, m, n)")
        if self.process_cov.shape != (horizon, n, n):
            raise DimensionMismatch("process_cov must be (N, n, n)")
        if self.measurement_cov.shape not in ((horizon, m, m), (horizon, m)):
            raise DimensionMismatch("measurement_cov must be (N, m, m) or (N, m)")
        if self.observations.shape != (horizon, m):
            raise DimensionMismatch("observations must be (N, m)")
        if self.prior_offsets.shape != (horizon, n):
            raise DimensionMismatch("prior_offsets must be (N, n)")
        if not np.array_equal(self.transition[0], np.eye(n)):
            raise ValueError("the first transition must be the identity")

    @property
    def horizon(self) -> int:
        return self.transition.shape[0]

    @property
    def state_dim(self) -> int:
        return self.transition.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.observation.shape[1]

    @property
    def diagonal_measurement_cov(self) -> bool:
        return self.measurement_cov.ndim == 2


def _chol_solve_spd(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve against an SPD Cholesky factor via two triangular solves."""
    out = np.array(rhs, dtype=np.float64)
    trsm_lower(factor, out)
    trsm_lower(factor, out, trans=True)
    return out


def _observation_terms(model: StateSpaceModel, k: int) -> tuple[np.ndarray, np.ndarray]:
    """H_k^T inv(R_k) H_k and H_k^T inv(R_k) z_k for one time step."""
    h = model.observation[k]
    z = model.observations[k]
    if model.diagonal_measurement_cov:
        r = model.measurement_cov[k]
        if np.any(r <= 0.0):
            raise NotPositiveDefinite(int(np.argmax(r <= 0.0)) + 1, block=k,
                                      context="measurement covariance")
        weighted = h / r[:, None]
        return h.T @ weighted, h.T @ (z / r)
    factor = model.measurement_cov[k].copy()
    try:
        chol_factor(factor)
    except NotPositiveDefinite as err:
        raise err.with_coords(block=k, context="measurement covariance") from None
    white_h = h.copy()
    trsm_lower(factor, white_h)
    white_z = z[:, None].copy()
    trsm_lower(factor, white_z)
    return white_h.T @ white_h, (white_h.T @ white_z)[:, 0]


def build_normal_equations(
    model: StateSpaceModel,
) -> tuple[BlockTridiagonalMatrix, BlockRhs]:
    """Assemble the smoothing normal equations for a model.

    Raises :class:`NotPositiveDefinite` (with the offending time step as the
    block coordinate) if any process or measurement covariance fails its
    Cholesky factorization.
    """
    horizon, n = model.horizon, model.state_dim
    eye = np.eye(n)
    diag = np.empty((horizon, n, n))
    sub = np.empty((horizon - 1, n, n))
    rhs = np.empty((horizon, n, 1))

    for k in range(horizon):
        factor = model.process_cov[k].copy()
        try:
            chol_factor(factor)
        except NotPositiveDefinite as err:
            raise err.with_coords(block=k, context="process covariance") from None
        q_inv = _chol_solve_spd(factor, eye)
        q_inv_g = _chol_solve_spd(factor, model.transition[k])
        q_inv_zeta = _chol_solve_spd(factor, model.prior_offsets[k][:, None])

        ht_ri_h, ht_ri_z = _observation_terms(model, k)
        diag[k] = q_inv + ht_ri_h
        rhs[k] = ht_ri_z[:, None] + model.transition[k].T @ q_inv_zeta
        if k > 0:
            diag[k - 1] += model.transition[k].T @ q_inv_g
            sub[k - 1] = -q_inv_g

    return new_btd(horizon, n, diag, sub), BlockRhs(rhs)


def generate_rotation_model(
    state_dim: int, obs_dim: int, horizon: int,
    dt: float = REFERENCE_DT, seed: int = 0,
) -> StateSpaceModel:
    """Generate a damped-rotation dynamics model with tall observations.

    The transition (identical at every step after the first, which is the
    identity) is block-diagonal over 2D planes, each a rotation damped by
    ``ROTATION_DAMPING`` with a seeded angle in (0, pi/4) scaled by
    ``dt / REFERENCE_DT``. The observation matrix is random with singular
    values clamped to [0.5, 2]. The process covariance is dense SPD at
    scale ``PROCESS_COV_SCALE``; the measurement covariance is diagonal
    with entries in [0.1, 1], an order of magnitude above it. Observations
    are simulated from the model; prior offsets are zero. Output is bitwise
    deterministic per (dimensions, dt, seed).
    """
    if state_dim < 2 or state_dim % 2:
        raise InvalidDimensions(f"state_dim must be even and >= 2, got {state_dim}")
    if obs_dim < state_dim:
        raise InvalidDimensions(
            f"obs_dim must be >= state_dim, got {obs_dim} < {state_dim}")
    if horizon < 1:
        raise InvalidDimensions(f"horizon must be >= 1, got {horizon}")

    rng = np.random.default_rng(seed)
    n, m = state_dim, obs_dim

    angles = rng.uniform(0.0, np.pi / 4.0, n // 2) * (dt / REFERENCE_DT)
    rotate = np.zeros((n, n))
    for plane, theta in enumerate(angles):
        c, s = np.cos(theta), np.sin(theta)
        i = 2 * plane
        rotate[i:i + 2, i:i + 2] = ROTATION_DAMPING * np.array([[c, -s], [s, c]])
    transition = np.empty((horizon, n, n))
    transition[0] = np.eye(n)
    transition[1:] = rotate

    mixing = rng.standard_normal((n, n))
    process_cov = PROCESS_COV_SCALE * (mixing @ mixing.T + n * np.eye(n)) / n

    raw_obs = rng.standard_normal((m, n))
    u, sing, vt = np.linalg.svd(raw_obs, full_matrices=False)
    obs_matrix = (u * np.clip(sing, 0.5, 2.0)) @ vt

    meas_var = rng.uniform(0.1, 1.0, m)

    state = rng.standard_normal(n)
    chol_q = np.linalg.cholesky(process_cov)
    meas_std = np.sqrt(meas_var)
    observations = np.empty((horizon, m))
    for k in range(horizon):
        state = transition[k] @ state + chol_q @ rng.standard_normal(n)
        observations[k] = obs_matrix @ state + meas_std * rng.standard_normal(m)

    return StateSpaceModel(
        transition=transition,
        observation=np.broadcast_to(obs_matrix, (horizon, m, n)),
        process_cov=np.broadcast_to(process_cov, (horizon, n, n)),
        measurement_cov=np.broadcast_to(meas_var, (horizon, m)),
        observations=observations,
        prior_offsets=np.zeros((horizon, n)),
        dt=dt,
        seed=seed,
    )


# Model container: same binary conventions as the system container, with a
# small header of its own. Arrays that are constant across the horizon
# (stride-0 broadcast views) are stored once and re-broadcast on read.

MODEL_MAGIC = b"KSM1"
MODEL_VERSION = 1
_MODEL_HEADER_FMT = "<4sIQIIdqI"
_MODEL_HEADER_SIZE = 48
_FLAG_DIAG_R = 1
_FLAG_SHARED_H = 2
_FLAG_SHARED_Q = 4
_FLAG_SHARED_R = 8


def _is_shared(arr: np.ndarray) -> bool:
    return arr.ndim >= 1 and arr.strides[0] == 0


def write_model(path, model: StateSpaceModel) -> None:
    """Serialize a state-space model to ``path``."""
    flags = 0
    if model.diagonal_measurement_cov:
        flags |= _FLAG_DIAG_R
    if _is_shared(model.observation):
        flags |= _FLAG_SHARED_H
    if _is_shared(model.process_cov):
        flags |= _FLAG_SHARED_Q
    if _is_shared(model.measurement_cov):
        flags |= _FLAG_SHARED_R
    seed = -1 if model.seed is None else int(model.seed)
    header = struct.pack(_MODEL_HEADER_FMT, MODEL_MAGIC, MODEL_VERSION,
                         model.horizon, model.state_dim, model.obs_dim,
                         model.dt, seed, flags)
    header += b"\x00" * (_MODEL_HEADER_SIZE - len(header))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            _write_array(fh, model.transition)
            _write_array(fh, model.observation[:1] if flags & _FLAG_SHARED_H
                         else model.observation)
            _write_array(fh, model.process_cov[:1] if flags & _FLAG_SHARED_Q
                         else model.process_cov)
            _write_array(fh, model.measurement_cov[:1] if flags & _FLAG_SHARED_R
                         else model.measurement_cov)
            _write_array(fh, model.observations)
            _write_array(fh, model.prior_offsets)
    except OSError as err:
        raise IoError(f"cannot write {path}: {err}") from err


def read_model(path) -> StateSpaceModel:
    """Read a model written by :func:`write_model`, bit-exactly."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(_MODEL_HEADER_SIZE)
            if len(head) < _MODEL_HEADER_SIZE:
                raise TruncatedPayload(_MODEL_HEADER_SIZE, len(head))
            magic, version, horizon, n, m, dt, seed, flags = struct.unpack(
                _MODEL_HEADER_FMT, head[:struct.calcsize(_MODEL_HEADER_FMT)])
            if magic != MODEL_MAGIC:
                raise BadMagic(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
            if version != MODEL_VERSION:
                raise VersionUnsupported(f"model version {version} unsupported")
            if horizon < 1 or n < 1 or m < 1:
                raise BtdFormatError("invalid model header dimensions")

            def maybe_shared(flag, shape):
                if flags & flag:
                    one = _read_array(fh, (1,) + shape)
                    return np.broadcast_to(one[0], (horizon,) + shape)
                return _read_array(fh, (horizon,) + shape)

            transition = _read_array(fh, (horizon, n, n))
            observation = maybe_shared(_FLAG_SHARED_H, (m, n))
            process_cov = maybe_shared(_FLAG_SHARED_Q, (n, n))
            r_shape = (m,) if flags & _FLAG_DIAG_R else (m, m)
            measurement_cov = maybe_shared(_FLAG_SHARED_R, r_shape)
            observations = _read_array(fh, (horizon, m))
            prior_offsets = _read_array(fh, (horizon, n))
            return StateSpaceModel(
                transition=transition, observation=observation,
                process_cov=process_cov, measurement_cov=measurement_cov,
                observations=observations, prior_offsets=prior_offsets,
                dt=dt, seed=None if seed < 0 else seed,
            )
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err
