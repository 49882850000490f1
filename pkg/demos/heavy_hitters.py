"""Find one heavy column of f(A) from a turnstile stream.

The sketch only ever sees signed sums of raw columns, yet the median over
repetitions recovers the heavy column's f-norm and keeps the rest small.
"""
import numpy as np

from hsketch.hh_sketch import CompleteHH
from hsketch.stream_io import from_dense
from hsketch.transform import TransformSpec

f = TransformSpec()  # f(x) = log2(1 + |x|)
rng = np.random.default_rng(0)
n = 512

# light columns: eight small entries each
raw = np.zeros((n, n), dtype=np.int64)
for c in range(n):
    rows = rng.choice(n, 8, replace=False)
    raw[rows, c] = rng.integers(1, 100, 8) * rng.choice([-1, 1], 8)

# one dense column carrying about 5% of ||f(A)||_F^2
heavy = 77
raw[:, heavy] = 0
light = np.sum(f.apply(raw) ** 2)
raw[:, heavy] = np.ceil(2.0 ** np.sqrt(0.05 / 0.95 * light / n) - 1)
norms = np.sum(f.apply(raw) ** 2, axis=0)
print("true share of the heavy column:", round(norms[heavy] / norms.sum(), 4))

# stream the entries in random order, plus one cancelling +-1 pair
stream = from_dense(raw, rng=rng)
sketch = CompleteHH.for_guarantee(n, nu=0.05, phi=0.05, delta=0.05, rng=rng, storage="sparse")
print("sketch:", sketch.R, "repetitions of width", sketch.w)
sketch.update_batch(stream.cols, stream.rows, stream.deltas)
sketch.update_batch([3, 3], [0, 0], [1, -1])

est = sketch.estimates(np.arange(n))
print("estimated / true norm of the heavy column:", round(est[heavy] / norms[heavy], 4))
print("largest other estimate as a share of M:", round(np.delete(est, heavy).max() / norms.sum(), 4))
print("top-3 columns by estimate:", np.argsort(-est)[:3])

# the query returns the bucket vector: the heavy column plus light noise
v = sketch.query(heavy)
noise = np.linalg.norm(f.apply(v) - f.apply(raw[:, heavy])) / np.sqrt(norms[heavy])
print("relative f-distance of the query from the true column:", round(noise, 4))
