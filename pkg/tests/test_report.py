import numpy as np

from blocktri import (
    BlockRhs,
    RecursionConfig,
    assemble_dense,
    btd_matmul,
    generate_spd_btd,
    recursive_factorize,
    recursive_solve,
    residual_report,
)
from blocktri.oracle import dense_solve
from blocktri.report import time_call


def test_exact_solution_has_tiny_residual(rng):
    m, _ = generate_spd_btd(12, 3, seed=1)
    x = BlockRhs(rng.standard_normal((12, 3, 2)))
    b = btd_matmul(m, x)
    abs_res, rel_res = residual_report(m, x, b)
    b_norm = np.linalg.norm(b.blocks.reshape(-1, 2), axis=0).max()
    assert abs_res <= 1e-13 * b_norm
    assert rel_res <= 1e-13


def test_zero_solution_has_unit_relative_residual(rng):
    m, b = generate_spd_btd(6, 2, 3, seed=2)
    x = BlockRhs(np.zeros_like(b.blocks))
    _, rel_res = residual_report(m, x, b)
    assert rel_res == 1.0


def test_oracle_and_recursive_residuals_agree_within_factor_ten():
    m, b = generate_spd_btd(30, 3, seed=3)
    h = recursive_factorize(m, RecursionConfig(crossover=8, segment_length=3))
    x_rec = recursive_solve(h, b)
    _, rel_rec = residual_report(m, x_rec, b)
    flat = dense_solve(assemble_dense(m), b.blocks.reshape(90, 1))
    x_oracle = BlockRhs(flat.reshape(30, 3, 1))
    _, rel_oracle = residual_report(m, x_oracle, b)
    hi, lo = max(rel_rec, rel_oracle), min(rel_rec, rel_oracle)
    assert hi <= 10.0 * max(lo, 1e-17)


def test_time_call_runs_and_averages():
    calls = []
    ms, result = time_call(lambda: calls.append(1) or len(calls),
                           runs=3, warmup=2)
    assert len(calls) == 5
    assert result == 5
    assert ms >= 0.0
