"""Rank-k column-space factor of f(A) from sampled noisy columns.

Samples come from independent sampler instances, ``m`` draws each.  Column
t of the sample matrix is f(h_t) / sqrt(s * p_t); the factor is its top-k
left singular subspace, computed from the smaller Gram matrix.
"""
from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import jacobi_eigh
from .sampler import ColumnSample, Sampler, SamplerConfig, norm_overestimate
from .stream_io import Stream
from .transform import TransformSpec

__all__ = [
    "FactorL",
    "SampleBatch",
    "LowRankRun",
    "assemble_scaled",
    "gram_eigh",
    "top_k_left_singular",
    "draw_batch",
    "exact_columns",
    "build_factor",
]

FACTOR_MAGIC = b"HSFL"
FACTOR_VERSION = 1
JACOBI_MAX = 160
RANK_TOL = 1e-12


@dataclass(frozen=True)
class FactorL:
    """n x k matrix with orthonormal columns."""

    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2:
            raise ValueError("factor must be a 2-d array")
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def k(self) -> int:
        return self.columns.shape[1]

    def orthonormality_error(self) -> float:
        return float(np.abs(self.columns.T @ self.columns - np.eye(self.k)).max(initial=0.0))

    def is_orthonormal(self, tol: float = 1e-8) -> bool:
        return self.orthonormality_error() <= tol

    def orthonormalized(self) -> "FactorL":
        """Modified Gram-Schmidt copy (columns that vanish are dropped)."""
        out = []
        for c in self.columns.T:
            c = c.copy()
            for q in out:
                c -= (q @ c) * q
            norm = np.linalg.norm(c)
            if norm > 1e-12:
                out.append(c / norm)
        return FactorL(np.column_stack(out) if out else np.zeros((self.n, 0)))

    def to_csv(self, dest) -> None:
        np.savetxt(dest, self.columns, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, source) -> "FactorL":
        return cls(np.loadtxt(source, delimiter=",", ndmin=2))

    def to_bytes(self) -> bytes:
        head = FACTOR_MAGIC + struct.pack("<HQQ", FACTOR_VERSION, self.n, self.k)
        return head + self.columns.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "FactorL":
        if data[:4] != FACTOR_MAGIC:
            raise ValueError("not a factor blob")
        version, n, k = struct.unpack_from("<HQQ", data, 4)
        if version != FACTOR_VERSION:
            raise ValueError(f"unsupported factor version {version}")
        body = np.frombuffer(data, dtype="<f8", count=n * k, offset=22)
        return cls(body.reshape(n, k).astype(float))


@dataclass
class SampleBatch:
    samples: list[ColumnSample]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("a sample batch needs at least one sample")
        dims = {s.v.shape for s in self.samples}
        if len(dims) != 1:
            raise ValueError(f"samples have mixed lengths {sorted(dims)}")
        bad = [s.index for s in self.samples if not s.p_hat > 0]
        if bad:
            raise ValueError(f"sampling probabilities must be positive (indices {bad[:5]})")

    @property
    def s(self) -> int:
        return len(self.samples)

    @property
    def p_hat(self) -> np.ndarray:
        return np.array([x.p_hat for x in self.samples])

    @property
    def indices(self) -> np.ndarray:
        return np.array([x.index for x in self.samples], dtype=np.int64)


def assemble_scaled(batch: SampleBatch, transform: TransformSpec | None = None, tail_identity: bool = False) -> np.ndarray:
    """n x s matrix whose column t is f(h_t) / sqrt(s p_t).

    With ``tail_identity`` the last coordinate is scaled but not transformed.
    """
    transform = transform or TransformSpec()
    h = np.column_stack([x.v for x in batch.samples])
    fh = transform.apply(h)
    if tail_identity:
        fh[-1] = h[-1]
    return fh / np.sqrt(batch.s * batch.p_hat)[None, :]


def gram_eigh(g: np.ndarray, solver: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenpairs of a symmetric Gram matrix.

    ``jacobi`` uses the self-contained cyclic Jacobi solver, ``lapack`` the
    numpy routine; ``auto`` picks Jacobi up to JACOBI_MAX rows.
    """
    if solver == "auto":
        solver = "jacobi" if g.shape[0] <= JACOBI_MAX else "lapack"
    if solver == "jacobi":
        return jacobi_eigh(g)
    if solver == "lapack":
        w, v = np.linalg.eigh(g)
        return w[::-1], v[:, ::-1]
    raise ValueError(f"unknown eigensolver {solver!r}")


def top_k_left_singular(F: np.ndarray, k: int, solver: str = "auto") -> FactorL:
    """Top-k left singular vectors of F (truncated to its numerical rank)."""
    F = np.asarray(F, dtype=float)
    n, s = F.shape
    if not 1 <= k <= min(n, s):
        raise ValueError(f"k={k} must lie in [1, min(n, s)={min(n, s)}]")
    if n <= s:
        lam, vec = gram_eigh(F @ F.T, solver)
        rank = int(np.sum(lam > RANK_TOL * max(lam[0], 0.0))) if lam[0] > 0 else 0
        u = vec[:, : min(k, rank)]
    else:
        lam, vec = gram_eigh(F.T @ F, solver)
        rank = int(np.sum(lam > RANK_TOL * max(lam[0], 0.0))) if lam[0] > 0 else 0
        k = min(k, rank)
        u = F @ (vec[:, :k] / np.sqrt(lam[:k]))
        # one re-orthogonalization pass absorbs the sigma_1 / sigma_k error growth
        u, r = np.linalg.qr(u)
        u = u * np.sign(np.diag(r))[None, :]
    return FactorL(u)


def _instance_config(config: SamplerConfig, s: int) -> SamplerConfig:
    return config.with_overrides(total_samples=s)


def draw_batch(
    stream: Stream,
    config: SamplerConfig,
    s: int,
    m: int,
    rng: np.random.Generator,
    m_hat: float,
    transform: TransformSpec | None = None,
    storage: str = "auto",
) -> tuple[SampleBatch, int]:
    """s column samples from ceil(s/m) independent sampler instances.

    Returns the batch and the summed sketch size of all instances in bytes
    (the instances are parallel in a one-pass setting).
    """
    transform = transform or TransformSpec(eta=stream.eta)
    cfg = _instance_config(config, s)
    samples: list[ColumnSample] = []
    nbytes = 0
    while len(samples) < s:
        sampler = Sampler(cfg, m_hat, rng, transform, storage=storage).ingest(stream)
        take = min(m, s - len(samples))
        samples.extend(sampler.draw_many(take, rng))
        nbytes += sampler.nbytes
    return SampleBatch(samples), nbytes


def exact_columns(stream: Stream, indices: np.ndarray) -> np.ndarray:
    """Second pass: the real-valued columns A_i for the given indices (n x len)."""
    indices = np.asarray(indices, dtype=np.int64)
    uniq, pos = np.unique(indices, return_inverse=True)
    lookup = np.full(stream.header.n_cols, -1, dtype=np.int64)
    lookup[uniq] = np.arange(uniq.size)
    keep = lookup[stream.cols] >= 0
    n = stream.header.n
    out = np.zeros(n * uniq.size, dtype=np.int64)
    np.add.at(out, stream.rows[keep] * uniq.size + lookup[stream.cols[keep]], stream.deltas[keep])
    cols = out.reshape(n, uniq.size) * float(stream.eta)
    return cols[:, pos]


@dataclass
class LowRankRun:
    factor: FactorL
    batch: SampleBatch
    sketch_bytes: int
    wall_time: float
    passes: int
    instances: int
    extras: dict = field(default_factory=dict)


def build_factor(
    stream: Stream,
    config: SamplerConfig,
    s: int,
    k: int,
    m: int = 100,
    seed: int | np.random.Generator = 0,
    provider: str = "exact",
    kappa: float = 1.0,
    passes: int = 1,
    solver: str = "auto",
    storage: str = "auto",
) -> LowRankRun:
    """Sample s noisy columns, scale them, and return the top-k factor.

    With ``passes=2`` the sampled indices are kept but their columns and
    probabilities are recomputed exactly from a second pass over the stream.
    """
    if s < k:
        raise ValueError("need at least k samples")
    if passes not in (1, 2):
        raise ValueError("passes must be 1 or 2")
    if m < 1:
        raise ValueError("m must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    transform = TransformSpec(eta=stream.eta)
    m_hat = norm_overestimate(provider, stream, kappa, transform)
    start = time.perf_counter()
    batch, nbytes = draw_batch(stream, config, s, m, rng, m_hat, transform, storage)
    if passes == 2:
        cols = exact_columns(stream, batch.indices)
        norms = transform.squared_norm(cols, axis=0)
        exact = [
            ColumnSample(cols[:, t], x.index, x.level, float(norms[t]), float(norms[t]) / m_hat, x.downsample_level)
            for t, x in enumerate(batch.samples)
        ]
        batch = SampleBatch([x for x in exact if x.p_hat > 0] or batch.samples)
    F = assemble_scaled(batch, transform)
    factor = top_k_left_singular(F, min(k, *F.shape), solver)
    wall = time.perf_counter() - start
    return LowRankRun(factor, batch, nbytes, wall, passes, math.ceil(s / m))
