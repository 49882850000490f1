"""Least squares on f(A) with an untransformed target b, from sampled rows.

The row sampler sees (A | b) as a stream; rows are drawn roughly in
proportion to ||f(A_i)||^2 + b_i^2 and the small scaled system is solved.
"""
from fractions import Fraction

import numpy as np

from hsketch import oracle
from hsketch.regression import RegressionInstance, embedding_distortion, sample_schedule, solve
from hsketch.sampler import practical_config
from hsketch.transform import TransformSpec

rng = np.random.default_rng(3)
n, d = 512, 8
u = rng.integers(1, 9, size=(n, d))
a = np.where(rng.random((n, d)) < 0.2, (2**u - 1) * rng.choice([-1, 1], size=(n, d)), 0)
fa = TransformSpec().apply(a.astype(float))
x_true = rng.normal(size=d)
b = fa @ x_true + 0.3 * rng.normal(size=n)

# b is stored in units of 1e-6, so the stream stays integral
eta = Fraction(1, 10**6)
inst = RegressionInstance.from_dense(a * 10**6, np.rint(b / float(eta)).astype(np.int64), eta, rng=rng)
A, B = inst.dense()
x_opt, opt = oracle.exact_least_squares(A, B)
sv = np.linalg.svd(fa, compute_uv=False)
kappa = sv[0] / sv[-1]
print(f"kappa(f(A)) = {kappa:.2f}, optimal residual = {opt:.3f}")

cfg = practical_config(n, dim=d + 1)
U = np.linalg.svd(fa, full_matrices=False)[0]
for s in (100, 400, sample_schedule(d, kappa, 0.2, 0.1)):
    sol = solve(inst, cfg, s, seed=1, m=1000)
    res = np.linalg.norm(fa @ sol.x - B)
    print(f"s = {s:6d}  residual = {res:.3f}  ({res / opt:.3f} x opt)  "
          f"distortion = {embedding_distortion(sol.batch, U):.3f}")
