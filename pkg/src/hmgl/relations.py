"""Explicit relation masks derived from geometry, keypoints and embeddings.

Occlusion edges point from the member with more visible keypoints to the
one with fewer, restricted to pairs whose boxes overlap; the appearance
mask keeps pairs whose row-standardized similarity clears a threshold.
"""

from __future__ import annotations

import numpy as np

from .domain import GroupSample, MemberBox, RelationMasks


def euclidean_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between the rows of `a` and `b`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def norm_rows(x: np.ndarray, sigma_floor: float = 1e-6) -> np.ndarray:
    """Standardize each row to mean 0 and population std 1.

    Rows whose std falls below `sigma_floor` are mapped to all zeros, so
    constant rows cannot blow up downstream thresholding.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    out = np.zeros_like(x)
    ok = std[:, 0] >= sigma_floor
    if np.any(ok):
        out[ok] = (x[ok] - mean[ok]) / std[ok]
    return out


def appearance_mask(f0: np.ndarray, tau: float, sigma_floor: float = 1e-6) -> np.ndarray:
    """Binary mask of appearance-similar pairs.

    Distances are standardized per row with the diagonal excluded from
    the statistics, negated into similarities, thresholded at `tau` and
    symmetrized by logical OR. A single-member group yields [[0]].
    """
    f0 = np.asarray(f0, dtype=np.float64)
    n = f0.shape[0]
    mask = np.zeros((n, n), dtype=np.int64)
    if n < 2:
        return mask
    dist = euclidean_matrix(f0, f0)
    off_diag = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = dist[i][off_diag[i]]
        mean, std = row.mean(), row.std()
        if std < sigma_floor:
            continue
        sim = -(row - mean) / std
        cols = np.flatnonzero(off_diag[i])
        mask[i, cols[sim > tau]] = 1
    return np.maximum(mask, mask.T)


def boxes_overlap(a: MemberBox, b: MemberBox) -> bool:
    """Closed-rectangle intersection test: touching edges count."""
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    return ax0 <= bx1 and bx0 <= ax1 and ay0 <= by1 and by0 <= ay1


def occlusion_masks(members: list[MemberBox] | tuple[MemberBox, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Occlusion and foreground masks from box overlap and keypoint counts.

    m_oc[i][j] = 1 iff the boxes intersect and member i shows strictly
    more keypoints than member j; m_fo is exactly its transpose.
    """
    n = len(members)
    m_oc = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if members[i].num_keypoints > members[j].num_keypoints and boxes_overlap(
                members[i], members[j]
            ):
                m_oc[i, j] = 1
    return m_oc, m_oc.T.copy()


def relation_masks(sample: GroupSample, tau: float, sigma_floor: float = 1e-6) -> RelationMasks:
    """All explicit masks for one group sample."""
    m_oc, m_fo = occlusion_masks(sample.members)
    m_ap = appearance_mask(sample.embeddings, tau, sigma_floor)
    return RelationMasks(m_ap=m_ap, m_oc=m_oc, m_fo=m_fo)
