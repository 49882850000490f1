"""Brute-force ground truth on dense, desk-scale matrices.

Everything here reads the whole matrix, so it is only for tests, demos and
evaluation.  Matrices are in real units; the transform is applied here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stream_io import read_stream
from .transform import DEFAULT, TransformSpec

__all__ = [
    "DENSE_LIMIT",
    "NormReport",
    "RankKReport",
    "ErrorRatio",
    "DistributionReport",
    "load_dense",
    "transformed_items",
    "exact_norms",
    "best_rank_k",
    "projection_residual",
    "error_ratio",
    "good_set",
    "match_and_score",
    "exact_least_squares",
]

DENSE_LIMIT = 1 << 24
FIDELITY = 0.3
DISTANCE = 0.5


def _check(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if a.size > DENSE_LIMIT:
        raise MemoryError(f"{a.shape} exceeds the desk-scale guard of {DENSE_LIMIT} entries")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def load_dense(path) -> np.ndarray:
    """Real-valued matrix from a stream file or a plain comma-separated file."""
    path = str(path)
    if path.endswith(".csv"):
        return _check(np.loadtxt(path, delimiter=",", ndmin=2))
    return read_stream(path).dense()


def transformed_items(
    a: np.ndarray,
    transform: TransformSpec = DEFAULT,
    by: str = "col",
    tail_identity: bool = False,
) -> np.ndarray:
    """The sampled objects as rows: f(A)^T for columns, f(A) for rows.

    With ``tail_identity`` the last coordinate of every item is left as is
    (rows of the regression matrix (f(A) | b)).
    """
    a = _check(a)
    items = a.T if by == "col" else a
    out = transform.apply(items)
    if tail_identity:
        out[:, -1] = items[:, -1]
    return out


@dataclass
class NormReport:
    norms: np.ndarray  # squared f-norm per item
    M: float
    p: np.ndarray | None  # None for the zero matrix

    @property
    def degenerate(self) -> bool:
        return self.p is None


def exact_norms(
    a: np.ndarray,
    transform: TransformSpec = DEFAULT,
    by: str = "col",
    tail_identity: bool = False,
) -> NormReport:
    fa = transformed_items(a, transform, by, tail_identity)
    norms = np.einsum("ij,ij->i", fa, fa)
    m = float(norms.sum())
    return NormReport(norms, m, norms / m if m > 0 else None)


@dataclass
class RankKReport:
    residual2: float  # sum of sigma_t^2 for t > k
    U: np.ndarray  # n x k, top-k left singular vectors of f(A)
    sigma2: np.ndarray  # all squared singular values, descending

    @property
    def projector(self) -> np.ndarray:
        return self.U @ self.U.T


def best_rank_k(a: np.ndarray, k: int, transform: TransformSpec = DEFAULT, fa: np.ndarray | None = None) -> RankKReport:
    """Eckart-Young optimum for f(A) from a full Gram eigendecomposition."""
    fa = transform.apply(_check(a)) if fa is None else np.asarray(fa, dtype=float)
    n, d = fa.shape
    if not 0 <= k <= min(n, d):
        raise ValueError(f"k={k} outside [0, {min(n, d)}]")
    if n <= d:
        lam, vec = np.linalg.eigh(fa @ fa.T)
        lam, vec = lam[::-1], vec[:, ::-1]
        u = vec[:, :k]
    else:
        lam, vec = np.linalg.eigh(fa.T @ fa)
        lam, vec = lam[::-1], vec[:, ::-1]
        u = fa @ vec[:, :k]
        u, _ = np.linalg.qr(u)
    lam = np.maximum(lam, 0.0)
    return RankKReport(float(lam[k:].sum()), u, lam)


def projection_residual(L: np.ndarray, fa: np.ndarray) -> float:
    """||f(A) - L L^T f(A)||_F for column-orthonormal L."""
    return float(np.linalg.norm(fa - L @ (L.T @ fa)))


@dataclass
class ErrorRatio:
    ratio: float  # nan when the optimum is exactly zero
    numerator: float
    denominator: float

    @property
    def absolute(self) -> bool:
        """True when f(A) has rank <= k and only the raw residual is meaningful."""
        return not np.isfinite(self.ratio)


def error_ratio(L: np.ndarray, a: np.ndarray, k: int, transform: TransformSpec = DEFAULT, best: RankKReport | None = None) -> ErrorRatio:
    """e(L) = ||f(A) - L L^T f(A)||_F / ||f(A) - U U^T f(A)||_F."""
    fa = transform.apply(_check(a))
    best = best or best_rank_k(a, k, transform, fa=fa)
    num = projection_residual(L, fa)
    den = projection_residual(best.U, fa)
    scale = np.linalg.norm(fa)
    if den <= 1e-12 * scale:
        return ErrorRatio(float("nan"), num, den)
    return ErrorRatio(num / den, num, den)


def good_set(
    norms: np.ndarray,
    m_hat: float,
    epsilon: float,
    L: int,
    j0: int,
    beta: float = 0.5,
    grid: int = 1024,
) -> np.ndarray:
    """Indices whose level is covered with probability >= beta over zeta.

    For zeta in [1/2, 1] the level of item i is the j with
    ||f(A_i)||^2 in (T_j, 2 T_j], T_j = zeta * m_hat / 2^j.  A level counts
    as covered when j <= j0 or it is important (|S_j| >= eps 2^j / L).
    The zeta average uses a midpoint grid.
    """
    norms = np.asarray(norms, dtype=float)
    zetas = 0.5 + (np.arange(grid) + 0.5) / (2 * grid)
    hits = np.zeros(norms.size)
    pos = norms > 0
    for zeta in zetas:
        level = np.zeros(norms.size, dtype=np.int64)
        level[pos] = np.floor(np.log2(zeta * m_hat / norms[pos])).astype(np.int64) + 1
        valid = pos & (level >= 1) & (level <= L)
        counts = np.bincount(level[valid], minlength=L + 1)
        j = np.arange(L + 1)
        covered = (j >= 1) & ((j <= j0) | (counts >= epsilon * 2.0**j / L))
        hits += valid & covered[np.clip(level, 0, L)]
    return np.flatnonzero(hits / grid >= beta)


@dataclass
class DistributionReport:
    p: np.ndarray  # true sampling probabilities
    counts: np.ndarray  # draws matched to each index
    draws: int
    matched: np.ndarray  # matched index per draw, -1 when unmatched
    fidelity: np.ndarray  # ||f(v)||^2 / ||f(A_u)||^2 per matched draw
    tested: np.ndarray  # indices the min ratio runs over

    @property
    def unmatched(self) -> int:
        return int(np.sum(self.matched < 0))

    @property
    def match_rate(self) -> float:
        return 1.0 - self.unmatched / self.draws if self.draws else 0.0

    @property
    def frequencies(self) -> np.ndarray:
        """Empirical distribution of matched draws (sums to 1)."""
        total = self.counts.sum()
        return self.counts / total if total else self.counts.astype(float)

    @property
    def ratios(self) -> np.ndarray:
        """counts / (draws * p_i) over tested items with p_i > 0; unmatched draws count against."""
        t = self.tested[self.p[self.tested] > 0]
        return self.counts[t] / (self.draws * self.p[t])

    @property
    def min_ratio(self) -> float:
        return float(self.ratios.min()) if self.tested.size else float("nan")

    @property
    def tv(self) -> float:
        return 0.5 * float(np.abs(self.frequencies - self.p).sum())

    def fidelity_histogram(self, bins=(0.0, 0.7, 0.9, 1.1, 1.3, np.inf)) -> np.ndarray:
        return np.histogram(self.fidelity, bins=np.asarray(bins))[0]


def match_and_score(
    vectors: np.ndarray,
    fa_items: np.ndarray,
    tested: np.ndarray | None = None,
    fidelity: float = FIDELITY,
    distance: float = DISTANCE,
    chunk: int = 2048,
) -> DistributionReport:
    """Match transformed samples against the true transformed items.

    ``vectors`` holds f(v) for each draw as rows, ``fa_items`` the true
    transformed items as rows (see :func:`transformed_items`).  Item u is a
    match for f(v) when ||f(v)||^2 is within a (1 +- fidelity) factor of
    ||f(A_u)||^2 and ||f(v) - f(A_u)|| <= distance * ||f(A_u)||; among
    several matches the closest wins.
    """
    fv = np.atleast_2d(np.asarray(vectors, dtype=float))
    fa = np.asarray(fa_items, dtype=float)
    norms = np.einsum("ij,ij->i", fa, fa)
    total = norms.sum()
    p = norms / total if total > 0 else np.zeros_like(norms)
    matched = np.full(fv.shape[0], -1, dtype=np.int64)
    for start in range(0, fv.shape[0], chunk):
        block = fv[start : start + chunk]
        bn = np.einsum("ij,ij->i", block, block)
        dist2 = np.maximum(bn[:, None] + norms[None, :] - 2.0 * block @ fa.T, 0.0)
        ok = (np.abs(bn[:, None] - norms[None, :]) <= fidelity * norms[None, :])
        ok &= dist2 <= (distance**2) * norms[None, :]
        ok &= norms[None, :] > 0
        dist2 = np.where(ok, dist2, np.inf)
        best = np.argmin(dist2, axis=1)
        hit = np.isfinite(dist2[np.arange(block.shape[0]), best])
        matched[start : start + chunk] = np.where(hit, best, -1)
    counts = np.bincount(matched[matched >= 0], minlength=fa.shape[0])
    good = matched >= 0
    fid = np.einsum("ij,ij->i", fv[good], fv[good]) / norms[matched[good]]
    tested = np.arange(fa.shape[0]) if tested is None else np.asarray(tested, dtype=np.int64)
    return DistributionReport(p, counts, fv.shape[0], matched, fid, tested)


def exact_least_squares(
    a: np.ndarray, b: np.ndarray, transform: TransformSpec = DEFAULT
) -> tuple[np.ndarray, float]:
    """Minimum-norm argmin_x ||f(A) x - b|| and the optimal residual."""
    fa = transform.apply(_check(a))
    b = np.asarray(b, dtype=float)
    x, *_ = np.linalg.lstsq(fa, b, rcond=None)
    return x, float(np.linalg.norm(fa @ x - b))
