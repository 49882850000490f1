"""Cyclic Jacobi eigensolver for symmetric matrices.

Rotations are applied in round-robin (tournament) order: each round
annihilates m/2 disjoint off-diagonal pairs at once, so a round is a handful
of whole-array numpy operations.  A sweep is m-1 rounds.
"""
from __future__ import annotations

import numpy as np

__all__ = ["jacobi_eigh", "off_norm", "JacobiNoConvergence"]


class JacobiNoConvergence(RuntimeError):
    pass


def off_norm(a: np.ndarray) -> float:
    """Frobenius norm of the off-diagonal part."""
    off = a - np.diag(np.diag(a))  # ||a||^2 - ||diag||^2 would cancel
    return float(np.sqrt(np.sum(off * off)))


def _schedule(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(
    a: np.ndarray,
    tol: float = 1e-12,
    max_sweeps: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric ``a``.

    Iterates until the off-diagonal Frobenius mass is at most
    ``tol * ||a||_F``.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jacobi_eigh needs a square matrix")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * (np.abs(a).max() + 1e-300)):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    a = 0.5 * (a + a.T)
    m = n + (n % 2)
    if m != n:
        padded = np.zeros((m, m))
        padded[:n, :n] = a
        a = padded
    v = np.eye(m)
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return np.zeros(n), np.eye(n)
    target = tol * scale
    rounds = _schedule(m) if m > 1 else []

    for _ in range(max_sweeps):
        if off_norm(a) <= target:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = a[p, p], a[q, q]
            tau = (aqq - app) / (2.0 * apq)
            # hypot avoids overflow of tau^2 when a_pq is tiny
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p], v[:, q]
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    else:
        if off_norm(a) > target:
            raise JacobiNoConvergence(
                f"off-diagonal mass {off_norm(a):.3e} above {target:.3e} after {max_sweeps} sweeps"
            )

    w = np.diag(a)[:n].copy()
    vecs = v[:n, :n] if m == n else _drop_padding(v, w, n)
    order = np.argsort(-w, kind="stable")
    return w[order], vecs[:, order]


def _drop_padding(v: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    # the padded index never couples (its row/column stays zero), so its
    # eigenvector is e_m and the first n eigenvectors live in the top block
    return v[:n, :n]
