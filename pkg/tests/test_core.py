import numpy as np
import pytest

from blocktri import (
    AsymmetricBlock,
    BlockRhs,
    DimensionMismatch,
    assemble_dense,
    btd_matmul,
    generate_spd_btd,
    new_btd,
    new_rhs,
)
from blocktri.oracle import dense_cholesky


def test_smallest_legal_instance():
    m = new_btd(1, 1, [np.array([[4.0]])], [])
    assert m.num_blocks == 1 and m.block_size == 1
    assert m.diag[0, 0, 0] == 4.0
    assert m.sub.shape == (0, 1, 1)


def test_two_block_scalar_assembles_to_expected_dense():
    m = new_btd(2, 1, [[[4.0]], [[5.0]]], [[[2.0]]])
    np.testing.assert_array_equal(assemble_dense(m), [[4.0, 2.0], [2.0, 5.0]])


def test_block_count_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        new_btd(2, 1, [[[4.0]]], [[[2.0]]])


def test_block_shape_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        new_btd(2, 2, [np.eye(2), np.eye(3)], [np.zeros((2, 2))])


def test_assemble_identity():
    n_blocks, n = 5, 3
    m = new_btd(n_blocks, n, np.broadcast_to(np.eye(n), (n_blocks, n, n)),
                np.zeros((n_blocks - 1, n, n)))
    np.testing.assert_array_equal(assemble_dense(m), np.eye(n_blocks * n))


def test_assemble_dense_is_bitwise_symmetric(rng):
    m, _ = generate_spd_btd(6, 4, seed=3)
    full = assemble_dense(m)
    assert np.array_equal(full, full.T)


def test_random_instance_assembles_to_spd():
    m, _ = generate_spd_btd(4, 3, seed=11)
    dense_cholesky(assemble_dense(m))  # raises if not SPD


def test_round_trip_recovers_blocks_exactly(rng):
    m, _ = generate_spd_btd(7, 2, seed=5)
    full = assemble_dense(m)
    n = m.block_size
    for i in range(m.num_blocks):
        np.testing.assert_array_equal(
            full[i * n:(i + 1) * n, i * n:(i + 1) * n], m.diag[i])
    for i in range(m.num_blocks - 1):
        np.testing.assert_array_equal(
            full[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n], m.sub[i])


def test_asymmetric_diagonal_block_rejected():
    bad = np.array([[1.0, 2.0], [0.5, 3.0]])
    with pytest.raises(AsymmetricBlock) as exc:
        new_btd(1, 2, [bad], [])
    assert exc.value.block == 0


def test_roundoff_asymmetry_is_symmetrized():
    block = np.array([[2.0, 1.0], [1.0 + 1e-15, 3.0]])
    m = new_btd(1, 2, [block], [])
    np.testing.assert_array_equal(m.diag[0], m.diag[0].T)


def test_btd_matmul_matches_dense(rng):
    m, _ = generate_spd_btd(9, 3, seed=21)
    x = BlockRhs(rng.standard_normal((9, 3, 2)))
    got = btd_matmul(m, x).blocks.reshape(27, 2)
    want = assemble_dense(m) @ x.blocks.reshape(27, 2)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-13)


def test_new_rhs_checks_conformality():
    m, _ = generate_spd_btd(3, 2, seed=0)
    r = new_rhs(m, np.ones((3, 2, 4)))
    assert r.num_columns == 4
    with pytest.raises(DimensionMismatch):
        new_rhs(m, np.ones((4, 2, 1)))
    with pytest.raises(DimensionMismatch):
        btd_matmul(m, BlockRhs(np.ones((3, 3, 1))))
