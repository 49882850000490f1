import numpy as np
import pytest

from hsketch import oracle
from hsketch.stream_io import save_stream
from hsketch.transform import TransformSpec

from instances import stream_of

F = TransformSpec()


def test_exact_norms_rows_and_columns():
    a = np.array([[1.0, 0.0], [3.0, 1.0]])
    cols = oracle.exact_norms(a)
    np.testing.assert_allclose(cols.norms, [5.0, 1.0])
    assert cols.M == pytest.approx(6.0)
    np.testing.assert_allclose(cols.p, [5 / 6, 1 / 6])
    rows = oracle.exact_norms(a, by="row")
    np.testing.assert_allclose(rows.norms, [1.0, 5.0])
    tail = oracle.exact_norms(a, by="row", tail_identity=True)
    np.testing.assert_allclose(tail.norms, [1.0, 5.0])
    assert oracle.exact_norms(np.zeros((2, 2))).degenerate


def test_guards():
    with pytest.raises(ValueError):
        oracle.exact_norms(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        oracle.exact_norms(np.ones(3))


def test_best_rank_k_against_svd():
    rng = np.random.default_rng(0)
    for shape in [(30, 50), (50, 30)]:
        a = rng.normal(scale=30, size=shape)
        fa = F.apply(a)
        sv = np.linalg.svd(fa, compute_uv=False)
        best = oracle.best_rank_k(a, 5)
        assert best.residual2 == pytest.approx(np.sum(sv[5:] ** 2), rel=1e-9)
        assert oracle.projection_residual(best.U, fa) ** 2 == pytest.approx(best.residual2, rel=1e-8)
        np.testing.assert_allclose(best.U.T @ best.U, np.eye(5), atol=1e-12)


def test_error_ratio_of_optimum_is_one():
    a = np.random.default_rng(1).normal(scale=30, size=(40, 40))
    best = oracle.best_rank_k(a, 4)
    assert oracle.error_ratio(best.U, a, 4).ratio == pytest.approx(1.0, abs=1e-10)
    worse = oracle.error_ratio(np.eye(40)[:, :4], a, 4)
    assert worse.ratio > 1


def test_error_ratio_low_rank_is_absolute():
    a = np.zeros((10, 10))
    a[:, 0] = 5
    r = oracle.error_ratio(np.eye(10)[:, :1], a, 2)
    assert r.absolute and r.numerator > 0


def test_good_set_rules():
    # one item holding all of M sits at level 1 for every zeta when M-hat = 2M
    norms = np.array([1.0, 0.0])
    assert oracle.good_set(norms, 2.0, 0.1, L=10, j0=1).tolist() == [0]
    # and above every window when M-hat = M
    assert oracle.good_set(norms, 1.0, 0.1, L=10, j0=1).tolist() == []
    # level above j0 and too sparse to be important -> not good
    norms = np.r_[1.0, np.full(3, 1e-3)]
    gs = oracle.good_set(norms, 2 * norms.sum(), 0.1, L=20, j0=2)
    assert 0 in gs and 1 not in gs
    # with j0 = L every nonzero item in range is good
    gs = oracle.good_set(norms, 2 * norms.sum(), 0.1, L=20, j0=20)
    assert gs.tolist() == [0, 1, 2, 3]


def test_match_and_score():
    fa = np.array([[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    draws = np.array([[3.1, 0.0], [0.0, 1.0], [0.0, 1.05], [2.0, 2.0]])
    rep = oracle.match_and_score(draws, fa)
    assert rep.matched.tolist() == [0, 1, 1, -1]
    assert rep.match_rate == 0.75
    np.testing.assert_allclose(rep.p, [0.9, 0.1, 0.0])
    np.testing.assert_allclose(rep.frequencies, [1 / 3, 2 / 3, 0])
    assert rep.ratios.tolist() == pytest.approx([1 / (4 * 0.9), 2 / (4 * 0.1)])  # p = 0 skipped
    assert rep.fidelity_histogram().sum() == 3
    rep = oracle.match_and_score(draws, fa, tested=[1])
    assert rep.min_ratio == pytest.approx(2 / (4 * 0.1))


def test_exact_least_squares():
    rng = np.random.default_rng(2)
    a = rng.normal(scale=10, size=(30, 4))
    x0 = rng.normal(size=4)
    x, res = oracle.exact_least_squares(a, F.apply(a) @ x0)
    np.testing.assert_allclose(x, x0, rtol=1e-10)
    assert res < 1e-10


def test_load_dense(tmp_path):
    raw = np.array([[1, 0], [0, -4]])
    save_stream(stream_of(raw, eta=1), tmp_path / "s.txt")
    np.testing.assert_array_equal(oracle.load_dense(tmp_path / "s.txt"), raw)
    np.savetxt(tmp_path / "m.csv", raw, delimiter=",")
    np.testing.assert_array_equal(oracle.load_dense(tmp_path / "m.csv"), raw)
