import math

import numpy as np
import pytest

from hsketch import oracle
from hsketch.lowrank import SampleBatch
from hsketch.regression import (
    RegressionInstance,
    embedding_distortion,
    sample_schedule,
    scaled_system,
    solve,
    solve_sampled,
)
from hsketch.sampler import ColumnSample, practical_config
from hsketch.stream_io import StreamFormatError
from hsketch.transform import TransformSpec

from instances import random_columns, regression_instance, stream_of


def test_schedule_formula():
    assert sample_schedule(8, 2.0, 0.2, 0.1) == math.ceil(8 * 8 * 4 / 0.04 * math.log(80))
    assert sample_schedule(1, 1.0, 1.0, 0.5, c_s=1) == math.ceil(math.log(2))
    with pytest.raises(ValueError):
        sample_schedule(8, 0.5, 0.2, 0.1)


def test_instance_requires_b_column():
    with pytest.raises(StreamFormatError):
        RegressionInstance(stream_of(random_columns(8, 0)))
    inst = RegressionInstance.from_dense(np.eye(4, dtype=np.int64) * 3, np.arange(4), eta=1)
    assert (inst.n, inst.d) == (4, 4)
    a, b = inst.dense()
    np.testing.assert_array_equal(a, 3 * np.eye(4))
    np.testing.assert_array_equal(b, np.arange(4))


def test_solve_sampled_full_rank():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(50, 5))
    b = rng.normal(size=50)
    x, degenerate = solve_sampled(m, b)
    np.testing.assert_allclose(x, np.linalg.lstsq(m, b, rcond=None)[0], rtol=1e-9)
    assert not degenerate


def test_solve_sampled_rank_deficient_gives_min_norm():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(30, 3))
    m = np.column_stack([m, m[:, 0]])
    b = rng.normal(size=30)
    x, degenerate = solve_sampled(m, b)
    assert degenerate
    np.testing.assert_allclose(x, np.linalg.pinv(m) @ b, atol=1e-9)
    x, degenerate = solve_sampled(np.zeros((4, 2)), np.ones(4))
    assert degenerate and np.all(x == 0)


def test_scaled_system_keeps_b_untransformed():
    rows = [ColumnSample(np.array([1.0, 3.0, 5.0]), 0, 1, 1.0, 0.5), ColumnSample(np.array([7.0, 0.0, -2.0]), 3, 1, 1.0, 0.5)]
    m, b = scaled_system(SampleBatch(rows))
    np.testing.assert_allclose(m, [[1, 2], [3, 0]])
    np.testing.assert_allclose(b, [5, -2])


def test_distortion_of_exact_leverage_sampling_is_small():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(200, 3))
    u = np.linalg.svd(a, full_matrices=False)[0]
    lev = np.sum(u**2, axis=1) / 3
    idx = rng.choice(200, size=5000, p=lev)
    batch = SampleBatch([ColumnSample(a[i], int(i), 1, 0.0, lev[i]) for i in idx])
    assert embedding_distortion(batch, u) <= 0.15


@pytest.fixture(scope="module")
def noisy():
    return regression_instance(0)


def test_solve_consistent_system():
    inst, x0 = regression_instance(1, consistent=True)
    cfg = practical_config(inst.n, dim=inst.d + 1)
    sol = solve(inst, cfg, 400, seed=1)
    assert np.linalg.norm(sol.x - x0) <= 0.05 * np.linalg.norm(x0)
    assert sol.batch.s == 400 and not sol.degenerate


def test_solve_noisy_residual_bound(noisy):
    inst, _ = noisy
    a, b = inst.dense()
    fa = TransformSpec().apply(a)
    cfg = practical_config(inst.n, dim=inst.d + 1)
    sol = solve(inst, cfg, 2000, seed=2, m=500)
    _, opt = oracle.exact_least_squares(a, b)
    residual = np.linalg.norm(fa @ sol.x - b)
    assert opt <= residual <= 2 * opt + 0.2 * math.sqrt(np.sum(fa**2) + b @ b)


def test_solve_deterministic(noisy):
    inst, _ = noisy
    cfg = practical_config(inst.n, dim=inst.d + 1)
    a = solve(inst, cfg, 100, seed=3)
    b = solve(RegressionInstance(inst.stream.permuted(np.random.default_rng(0))), cfg, 100, seed=3)
    assert a.x.tobytes() == b.x.tobytes()


def test_solve_validation(noisy):
    inst, _ = noisy
    with pytest.raises(ValueError):
        solve(inst, practical_config(inst.n, dim=inst.d + 1), 3)
