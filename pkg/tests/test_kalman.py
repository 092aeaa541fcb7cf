import numpy as np
import pytest

from blocktri import (
    InvalidDimensions,
    NotPositiveDefinite,
    RecursionConfig,
    StateSpaceModel,
    assemble_dense,
    build_normal_equations,
    generate_rotation_model,
    read_model,
    recursive_factorize,
    recursive_solve,
    residual_report,
    write_model,
)
from blocktri.oracle import dense_cholesky, dense_solve


def scalar_model(transitions, q=1.0, r=1.0, h=1.0, z=None, zeta=None):
    horizon = len(transitions)
    return StateSpaceModel(
        transition=np.array(transitions, dtype=float).reshape(horizon, 1, 1),
        observation=np.full((horizon, 1, 1), h),
        process_cov=np.full((horizon, 1, 1), q),
        measurement_cov=np.full((horizon, 1, 1), r),
        observations=np.zeros((horizon, 1)) if z is None
        else np.array(z, dtype=float).reshape(horizon, 1),
        prior_offsets=np.zeros((horizon, 1)) if zeta is None
        else np.array(zeta, dtype=float).reshape(horizon, 1),
    )


def random_model(horizon, n, m, seed, diag_r=True):
    rng = np.random.default_rng(seed)
    transition = rng.standard_normal((horizon, n, n)) * 0.3
    transition[0] = np.eye(n)
    q = rng.standard_normal((horizon, n, n))
    process = q @ q.transpose(0, 2, 1) + 2 * n * np.eye(n)
    if diag_r:
        meas = rng.uniform(0.5, 2.0, (horizon, m))
    else:
        r = rng.standard_normal((horizon, m, m))
        meas = r @ r.transpose(0, 2, 1) + 2 * m * np.eye(m)
    return StateSpaceModel(
        transition=transition,
        observation=rng.standard_normal((horizon, m, n)),
        process_cov=process,
        measurement_cov=meas,
        observations=rng.standard_normal((horizon, m)),
        prior_offsets=np.zeros((horizon, n)),
    )


def stacked_least_squares(model):
    """Weighted least-squares minimizer via the stacked dense operator.

    Builds the square-root-weighted observation and dynamics rows
    explicitly and calls numpy's lstsq; independent of the block
    assembly it checks. Offsets must be zero.
    """
    assert not model.prior_offsets.any()
    horizon, n, m = model.horizon, model.state_dim, model.obs_dim
    dim = horizon * n
    rows_obs = np.zeros((horizon * m, dim))
    rhs_obs = np.zeros(horizon * m)
    for k in range(horizon):
        h = model.observation[k]
        z = model.observations[k]
        if model.diagonal_measurement_cov:
            w = 1.0 / np.sqrt(model.measurement_cov[k])
            wh, wz = h * w[:, None], z * w
        else:
            lower = np.linalg.cholesky(model.measurement_cov[k])
            wh = np.linalg.solve(lower, h)
            wz = np.linalg.solve(lower, z)
        rows_obs[k * m:(k + 1) * m, k * n:(k + 1) * n] = wh
        rhs_obs[k * m:(k + 1) * m] = wz
    rows_dyn = np.zeros((horizon * n, dim))
    for k in range(horizon):
        lower = np.linalg.cholesky(model.process_cov[k])
        w_eye = np.linalg.solve(lower, np.eye(n))
        rows_dyn[k * n:(k + 1) * n, k * n:(k + 1) * n] = w_eye
        if k > 0:
            rows_dyn[k * n:(k + 1) * n, (k - 1) * n:k * n] = \
                -np.linalg.solve(lower, model.transition[k])
    stack = np.vstack([rows_obs, rows_dyn])
    rhs = np.concatenate([rhs_obs, np.zeros(horizon * n)])
    solution, *_ = np.linalg.lstsq(stack, rhs, rcond=None)
    return solution


class TestBuildNormalEquations:
    def test_single_step_identity_model(self):
        model = scalar_model([1.0], z=[3.0], zeta=[2.0])
        matrix, rhs = build_normal_equations(model)
        np.testing.assert_array_equal(assemble_dense(matrix), [[2.0]])
        np.testing.assert_array_equal(rhs.blocks.ravel(), [5.0])

    def test_two_step_scalar_blocks(self):
        g = 0.7
        model = scalar_model([1.0, g])
        matrix, _ = build_normal_equations(model)
        np.testing.assert_allclose(matrix.diag[0, 0, 0], 2.0 + g * g, atol=1e-15)
        np.testing.assert_allclose(matrix.sub[0, 0, 0], -g, atol=1e-15)
        np.testing.assert_allclose(matrix.diag[1, 0, 0], 2.0, atol=1e-15)
        # dense stacked-operator assembly gives the same matrix
        stacked_g = np.array([[1.0, 0.0], [-g, 1.0]])
        want = np.eye(2) + stacked_g.T @ stacked_g
        np.testing.assert_allclose(assemble_dense(matrix), want, atol=1e-14)

    @pytest.mark.parametrize("diag_r", [True, False])
    def test_output_is_spd(self, diag_r):
        model = random_model(6, 3, 4, seed=2, diag_r=diag_r)
        matrix, _ = build_normal_equations(model)
        dense_cholesky(assemble_dense(matrix))

    @pytest.mark.parametrize("diag_r", [True, False])
    def test_solution_minimizes_stacked_least_squares(self, diag_r):
        model = random_model(8, 2, 3, seed=5, diag_r=diag_r)
        matrix, rhs = build_normal_equations(model)
        dim = model.horizon * model.state_dim
        x = dense_solve(assemble_dense(matrix), rhs.blocks.reshape(dim))
        want = stacked_least_squares(model)
        assert np.abs(x - want).max() <= 1e-10 * max(np.abs(want).max(), 1.0)

    def test_recursive_and_dense_agree_on_normal_equations(self):
        model = random_model(32, 8, 10, seed=11)
        matrix, rhs = build_normal_equations(model)
        h = recursive_factorize(matrix, RecursionConfig(crossover=8,
                                                        segment_length=4))
        x = recursive_solve(h, rhs)
        dim = 32 * 8
        want = dense_solve(assemble_dense(matrix), rhs.blocks.reshape(dim))
        assert np.abs(x.blocks.ravel() - want).max() \
            <= 1e-10 * np.abs(want).max()

    def test_bad_process_covariance_raises_with_step(self):
        model = random_model(5, 2, 3, seed=1)
        model.process_cov[3] = -np.eye(2)
        with pytest.raises(NotPositiveDefinite) as exc:
            build_normal_equations(model)
        assert exc.value.block == 3
        assert "process" in exc.value.context

    def test_bad_dense_measurement_covariance(self):
        model = random_model(4, 2, 3, seed=1, diag_r=False)
        model.measurement_cov[2] = np.array(
            [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(NotPositiveDefinite) as exc:
            build_normal_equations(model)
        assert exc.value.block == 2

    def test_bad_diagonal_measurement_covariance(self):
        model = random_model(4, 2, 3, seed=1, diag_r=True)
        model.measurement_cov[1, 0] = -0.5
        with pytest.raises(NotPositiveDefinite) as exc:
            build_normal_equations(model)
        assert exc.value.block == 1

    def test_first_transition_must_be_identity(self):
        with pytest.raises(ValueError):
            scalar_model([0.5, 0.5])


class TestGenerateRotationModel:
    def test_small_instance_builds_spd_system(self):
        model = generate_rotation_model(2, 4, 3, seed=0)
        matrix, _ = build_normal_equations(model)
        dense_cholesky(assemble_dense(matrix))

    def test_same_seed_is_bitwise_identical(self):
        m1 = generate_rotation_model(4, 6, 5, seed=9)
        m2 = generate_rotation_model(4, 6, 5, seed=9)
        for field in ("transition", "observation", "process_cov",
                      "measurement_cov", "observations"):
            assert np.array_equal(getattr(m1, field), getattr(m2, field))

    def test_dt_scales_rotation_angles(self):
        base = generate_rotation_model(2, 4, 2, dt=0.1, seed=3)
        halved = generate_rotation_model(2, 4, 2, dt=0.05, seed=3)
        angle = np.arctan2(base.transition[1][1, 0], base.transition[1][0, 0])
        angle_h = np.arctan2(halved.transition[1][1, 0],
                             halved.transition[1][0, 0])
        np.testing.assert_allclose(angle_h, angle / 2.0, rtol=1e-12)
        assert 0.0 < angle < np.pi / 4

    def test_observation_matrix_well_conditioned(self):
        model = generate_rotation_model(8, 20, 2, seed=4)
        sing = np.linalg.svd(model.observation[0], compute_uv=False)
        assert sing.min() >= 0.5 - 1e-12 and sing.max() <= 2.0 + 1e-12

    def test_measurement_noise_dominates_process_noise(self):
        model = generate_rotation_model(6, 8, 2, seed=5)
        assert model.measurement_cov.min() >= 0.1
        assert np.abs(model.process_cov).max() <= 0.05

    def test_invalid_dimensions(self):
        with pytest.raises(InvalidDimensions):
            generate_rotation_model(3, 4, 2)  # odd state dimension
        with pytest.raises(InvalidDimensions):
            generate_rotation_model(4, 2, 2)  # observations not tall
        with pytest.raises(InvalidDimensions):
            generate_rotation_model(2, 4, 0)

    def test_full_size_instance_constructs(self):
        model = generate_rotation_model(256, 1024, 100, seed=0)
        assert model.transition.shape == (100, 256, 256)
        assert model.observation.shape == (100, 1024, 256)
        assert model.observations.shape == (100, 1024)
        # constant-in-time arrays are broadcast views, not 100 copies
        assert model.observation.strides[0] == 0
        assert model.process_cov.strides[0] == 0
        assert model.measurement_cov.strides[0] == 0

    def test_scaled_instance_residual(self):
        model = generate_rotation_model(8, 32, 20, seed=6)
        matrix, rhs = build_normal_equations(model)
        h = recursive_factorize(matrix, RecursionConfig(crossover=4,
                                                        segment_length=3))
        x = recursive_solve(h, rhs)
        _, rel = residual_report(matrix, x, rhs)
        assert rel <= 1e-12


class TestModelSerialization:
    def test_round_trip_generated_model(self, tmp_path):
        model = generate_rotation_model(4, 6, 7, dt=0.25, seed=31)
        path = tmp_path / "model.ksm"
        write_model(path, model)
        back = read_model(path)
        for field in ("transition", "observation", "process_cov",
                      "measurement_cov", "observations", "prior_offsets"):
            assert np.array_equal(getattr(model, field), getattr(back, field))
        assert back.dt == model.dt
        assert back.seed == model.seed
        # shared arrays stay shared on disk: file is much smaller than dense
        assert path.stat().st_size < 8 * 4 * 2 * (6 * 4 + 4 * 4 + 6) + 4096

    def test_round_trip_dense_per_step_model(self, tmp_path):
        model = random_model(5, 2, 3, seed=8, diag_r=False)
        path = tmp_path / "model.ksm"
        write_model(path, model)
        back = read_model(path)
        assert np.array_equal(back.measurement_cov, model.measurement_cov)
        assert not back.diagonal_measurement_cov
        assert back.seed is None
