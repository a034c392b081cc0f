"""Spectral clustering building blocks: Jacobi eigensolver, seeded k-means.

The affinities involved are at most 6x6, so a cyclic Jacobi rotation
sweep is plenty fast and keeps the whole numeric path explicit.
"""

from __future__ import annotations

import numpy as np


def symmetric_eigen(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues ascending and eigenvectors as columns, with a
    canonical sign (largest-magnitude entry positive) so results are
    reproducible across runs.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    n = a.shape[0]
    m = a.copy()
    vecs = np.eye(n)
    if n == 1:
        return m.diagonal().copy(), vecs

    scale = max(np.abs(m).max(), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt((np.tril(m, -1) ** 2).sum())
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(m[p, q]) <= 1e-300:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * m[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
                vecs = vecs @ rot

    eigvals = m.diagonal().copy()
    order = np.argsort(eigvals, kind="stable")
    eigvals = eigvals[order]
    vecs = vecs[:, order]
    for j in range(n):
        lead = np.argmax(np.abs(vecs[:, j]))
        if vecs[lead, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return eigvals, vecs


def normalized_laplacian(affinity: np.ndarray, degree_floor: float = 1e-12) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}."""
    a = np.asarray(affinity, dtype=np.float64)
    sym = 0.5 * (a + a.T)
    deg = np.maximum(sym.sum(axis=1), degree_floor)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return np.eye(a.shape[0]) - inv_sqrt[:, None] * sym * inv_sqrt[None, :]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    sq_dist = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = sq_dist.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=sq_dist / total))
        centroids[c] = points[idx]
        sq_dist = np.minimum(sq_dist, ((points - centroids[c]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Lloyd iterations with k-means++ init; returns (centroids, labels).

    Empty clusters are repaired by stealing the point farthest from its
    assigned centroid, keeping every output cluster populated.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k={k} out of range for {n} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        assigned_cost = dists[np.arange(n), labels].copy()
        for c in range(k):
            if not np.any(labels == c):
                worst = int(np.argmax(assigned_cost))
                labels[worst] = c
                assigned_cost[worst] = -1.0  # cannot be stolen twice
        new_centroids = np.array([points[labels == c].mean(axis=0) for c in range(k)])
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if shift < tol:
            break
    return centroids, labels


def spectral_embedding(
    a0: np.ndarray, t: int, zero_tol: float = 1e-8
) -> tuple[np.ndarray, bool]:
    """Row-normalized spectral embedding from the t smallest informative eigenpairs.

    For a connected affinity the single (near-)zero eigenvalue is skipped
    and the t smallest nonzero eigenvalues are used. When several
    eigenvalues sit at zero the graph is disconnected and those
    eigenvectors are the component indicators, so they are kept and the
    fallback flag is raised. The same flag covers the case of fewer than
    t nonzero eigenvalues.
    """
    n = a0.shape[0]
    if not 1 < t < n:
        raise ValueError(f"cluster count t={t} must satisfy 1 < t < {n}")
    lap = normalized_laplacian(a0)
    eigvals, eigvecs = symmetric_eigen(lap)
    near_zero = int(np.sum(eigvals <= zero_tol))
    fallback = near_zero != 1 or (n - near_zero) < t
    start = 0 if fallback else near_zero
    u = eigvecs[:, start : start + t]
    norms = np.sqrt((u * u).sum(axis=1))
    out = np.zeros_like(u)
    ok = norms > 0
    out[ok] = u[ok] / norms[ok, None]
    return out, fallback
