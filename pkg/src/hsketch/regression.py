"""Least squares min_x ||f(A) x - b|| from sampled rows of (f(A) | b).

Rows of the concatenated stream are sampled with the row sampler using the
transform g (f on the first d coordinates, identity on the last).  Each
sampled row is scaled by 1/sqrt(s p_t); the first d columns of the stack
form M~ and the last one b~, and x~ solves the small system by normal
equations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .lowrank import SampleBatch, assemble_scaled, gram_eigh
from .sampler import ColumnSample, Sampler, SamplerConfig, norm_overestimate
from .stream_io import Stream, StreamFormatError, from_dense
from .transform import TransformSpec

__all__ = [
    "RegressionInstance",
    "RegressionSolution",
    "sample_schedule",
    "row_config",
    "sample_rows",
    "scaled_system",
    "solve_sampled",
    "embedding_distortion",
    "solve",
]

C_SCHEDULE = 8
COND_LIMIT = 1e12


@dataclass
class RegressionInstance:
    """A stream whose last column is the target b."""

    stream: Stream

    def __post_init__(self):
        if not self.stream.header.b_column:
            raise StreamFormatError("regression needs a stream whose header carries the 'b' flag")

    @classmethod
    def from_dense(cls, a_raw, b_raw, eta=1, rng=None) -> "RegressionInstance":
        raw = np.column_stack([np.asarray(a_raw), np.asarray(b_raw)])
        return cls(from_dense(raw, eta, b_column=True, rng=rng))

    @property
    def n(self) -> int:
        return self.stream.header.n

    @property
    def d(self) -> int:
        return self.stream.header.d

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) in real units."""
        q = self.stream.dense()
        return q[:, :-1], q[:, -1]


@dataclass
class RegressionSolution:
    x: np.ndarray
    sampled_residual: float
    s: int
    degenerate: bool
    batch: SampleBatch | None = None
    wall_time: float = 0.0


def sample_schedule(d: int, kappa: float, epsilon: float, delta: float, c_s: float = C_SCHEDULE) -> int:
    """s = ceil(c_s d kappa^2 eps^-2 ln(d / delta))."""
    if d < 1 or kappa < 1 or epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("schedule needs d >= 1, kappa >= 1, epsilon > 0, delta in (0, 1)")
    return math.ceil(c_s * d * kappa**2 / epsilon**2 * math.log(max(d / delta, 1.0 + 1e-12)))


def row_config(instance: RegressionInstance, **overrides) -> SamplerConfig:
    """Sampler sizes for the rows of (A | b): n items of length d + 1."""
    return SamplerConfig(n=instance.n, dim=instance.d + 1, **overrides)


def sample_rows(
    instance: RegressionInstance,
    config: SamplerConfig,
    s: int,
    rng: np.random.Generator,
    m: int = 100,
    m_hat: float | None = None,
    transform: TransformSpec | None = None,
) -> SampleBatch:
    """s noisy rows of the concatenated matrix, ceil(s/m) sampler instances."""
    transform = transform or TransformSpec(eta=instance.stream.eta)
    if m_hat is None:
        m_hat = norm_overestimate("exact", instance.stream, 1.0, transform, tail_identity=True)
    cfg = config.with_overrides(total_samples=s)
    samples: list[ColumnSample] = []
    while len(samples) < s:
        sampler = Sampler(cfg, m_hat, rng, transform, tail_identity=True, by="row")
        sampler.ingest(instance.stream)
        samples.extend(sampler.draw_many(min(m, s - len(samples)), rng))
    return SampleBatch(samples)


def scaled_system(batch: SampleBatch, transform: TransformSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(M~, b~): the stacked g(h_t) / sqrt(s p_t), split at the last column."""
    t = assemble_scaled(batch, transform, tail_identity=True).T
    return t[:, :-1], t[:, -1]


def solve_sampled(m_tilde: np.ndarray, b_tilde: np.ndarray) -> tuple[np.ndarray, bool]:
    """argmin ||M x - b|| by normal equations with an eigenvalue guard.

    Eigenvalues of M^T M below 1e-12 * lambda_max are dropped, which gives
    the minimum-norm solution; the flag reports whether that happened.
    """
    m_tilde = np.asarray(m_tilde, dtype=float)
    b_tilde = np.asarray(b_tilde, dtype=float)
    lam, vec = gram_eigh(m_tilde.T @ m_tilde, "jacobi")
    if lam.size == 0 or lam[0] <= 0:
        return np.zeros(m_tilde.shape[1]), True
    keep = lam > lam[0] / COND_LIMIT
    rhs = vec[:, keep].T @ (m_tilde.T @ b_tilde)
    x = vec[:, keep] @ (rhs / lam[keep])
    return x, not keep.all()


def embedding_distortion(batch: SampleBatch, U: np.ndarray) -> float:
    """||I - (S U)^T (S U)||_2 for the row sampling-and-scaling operator S."""
    su = U[batch.indices] / np.sqrt(batch.s * batch.p_hat)[:, None]
    return float(np.linalg.norm(np.eye(U.shape[1]) - su.T @ su, 2))


def solve(
    instance: RegressionInstance,
    config: SamplerConfig,
    s: int,
    seed: int | np.random.Generator = 0,
    m: int = 100,
    provider: str = "exact",
    kappa: float = 1.0,
) -> RegressionSolution:
    """Sample s rows, build the scaled system and solve it."""
    if s < instance.d:
        raise ValueError("need at least d samples")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    transform = TransformSpec(eta=instance.stream.eta)
    m_hat = norm_overestimate(provider, instance.stream, kappa, transform, tail_identity=True)
    start = time.perf_counter()
    batch = sample_rows(instance, config, s, rng, m, m_hat, transform)
    m_tilde, b_tilde = scaled_system(batch, transform)
    x, degenerate = solve_sampled(m_tilde, b_tilde)
    residual = float(np.linalg.norm(m_tilde @ x - b_tilde))
    return RegressionSolution(x, residual, s, degenerate, batch, time.perf_counter() - start)
