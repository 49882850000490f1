"""Seeded matrices shared by the unit and acceptance tests."""
from fractions import Fraction

import numpy as np

from hsketch.regression import RegressionInstance
from hsketch.stream_io import from_dense
from hsketch.transform import TransformSpec


def planted_heavy(n, phi, seed, light_nnz=8, light_scale=100):
    """n x n integer matrix: sparse light columns plus one dense heavy column.

    The heavy column's share of the f-mass is close to phi; the exact share
    is returned.
    """
    rng = np.random.default_rng(seed)
    raw = np.zeros((n, n), dtype=np.int64)
    for c in range(n):
        rows = rng.choice(n, light_nnz, replace=False)
        raw[rows, c] = rng.integers(1, light_scale, light_nnz) * rng.choice([-1, 1], light_nnz)
    heavy = int(rng.integers(n))
    raw[:, heavy] = 0
    f = TransformSpec()
    light_mass = np.sum(f.apply(raw) ** 2)
    per_entry = np.sqrt(phi / (1 - phi) * light_mass / n)
    raw[:, heavy] = np.ceil(2.0**per_entry - 1) * rng.choice([-1, 1], n)
    norms = np.sum(f.apply(raw) ** 2, axis=0)
    return raw, heavy, norms[heavy] / norms.sum()


def random_columns(n, seed):
    """Dense Gaussian matrix with lognormal column scales (wide p range)."""
    rng = np.random.default_rng(seed)
    scale = np.exp(rng.normal(0, 1.5, n))
    return np.rint(rng.normal(size=(n, n)) * scale[None, :] * 20).astype(np.int64)


def planted_columns(n, seed, heavy=8):
    """Small Gaussian noise plus a few columns scaled up by 1000."""
    rng = np.random.default_rng(seed)
    raw = np.rint(rng.normal(size=(n, n)) * 2)
    idx = rng.choice(n, heavy, replace=False)
    raw[:, idx] *= 1000
    return raw.astype(np.int64)


def regression_instance(seed, n=512, d=8, q=0.2, consistent=False, noise=0.5):
    """Sparse design whose f(A) is well conditioned; b stored at eta = 1e-6."""
    rng = np.random.default_rng(seed)
    u = rng.integers(1, 9, size=(n, d))
    mask = rng.random((n, d)) < q
    a = np.where(mask, (2**u - 1) * rng.choice([-1, 1], size=(n, d)), 0)
    fa = TransformSpec().apply(a.astype(float))
    x0 = rng.normal(size=d)
    b = fa @ x0
    if not consistent:
        b = b + rng.normal(size=n) * noise * np.linalg.norm(b) / np.sqrt(n)
    eta = Fraction(1, 10**6)
    b_raw = np.rint(b / float(eta)).astype(np.int64)
    inst = RegressionInstance.from_dense(a * 10**6, b_raw, eta, rng=rng)
    return inst, x0


def stream_of(raw, seed=0, eta=1):
    return from_dense(raw, eta, rng=np.random.default_rng(seed))
