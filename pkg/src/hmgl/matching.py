"""Multi-scale group matching: node assignment, subgraph assignment,
centroid distance, and their weighted fusion.

Similarities at every scale live on the same footing: distances are
standardized per row, negated, and passed through ReLU, so the fused
score adds like-signed terms. The local scale clusters members through
the spectral embedding of each group's global affinity but represents
each cluster by the mean of its members' output features, which keeps
centroid coordinates comparable across two different graphs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .assignment import max_weight_assignment
from .domain import Config, GroupSample, MatchScore, ModelParams
from .mgnn import embed_group
from .relations import euclidean_matrix, norm_rows
from .spectral import kmeans, spectral_embedding


class SpectralClusters(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    zero_fallback: bool


@dataclass(frozen=True)
class GroupEmbedding:
    """Cached inference outputs for one group."""

    group_id: int
    view_id: int
    f_out: np.ndarray
    a0: np.ndarray


def node_similarity(fq: np.ndarray, fg: np.ndarray, sigma_floor: float = 1e-6) -> np.ndarray:
    """Row-standardized, negated, rectified distance matrix between feature sets."""
    return np.maximum(-norm_rows(euclidean_matrix(fq, fg), sigma_floor), 0.0)


def km_assign(weights: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Maximum-weight assignment with the mean matched weight as score."""
    pairs, total = max_weight_assignment(weights)
    n, m = np.asarray(weights).shape
    return pairs, total / min(n, m)


def spectral_subgraphs(a0: np.ndarray, t: int, seed: int, zero_tol: float = 1e-8) -> SpectralClusters:
    """Cluster one group's members through its spectral embedding.

    Returns the k-means centroids in embedding space together with the
    member-to-cluster labels and a flag marking that zero eigenvalues had
    to be kept (disconnected affinity or too few nonzero eigenvalues).
    """
    u, fallback = spectral_embedding(np.asarray(a0, dtype=np.float64), t, zero_tol)
    centroids, labels = kmeans(u, t, seed)
    return SpectralClusters(centroids=centroids, labels=labels, zero_fallback=fallback)


def _cluster_count(n: int, m: int, config: Config) -> int:
    if config.cluster_mode == "auto":
        # half-up, not banker's rounding: 10 members -> 3 clusters
        t = int(np.floor((n + m) / 4.0 + 0.5))
    else:
        t = config.clusters
    return max(2, min(t, min(n, m) - 1))


def local_similarity(
    aq0: np.ndarray,
    ag0: np.ndarray,
    fq: np.ndarray,
    fg: np.ndarray,
    config: Config,
    seed: int,
) -> tuple[float, bool]:
    """Subgraph-level similarity; skipped for groups of 2 or fewer."""
    n, m = fq.shape[0], fg.shape[0]
    if min(n, m) <= 2:
        return 0.0, True
    t = _cluster_count(n, m, config)
    centroids = []
    for a0, feats in ((aq0, fq), (ag0, fg)):
        clusters = spectral_subgraphs(a0, t, seed, config.eig_zero_tol)
        centroids.append(
            np.array([feats[clusters.labels == c].mean(axis=0) for c in range(t)])
        )
    _, score = km_assign(node_similarity(centroids[0], centroids[1], config.sigma_floor))
    return score, False


def global_similarity(
    fq: np.ndarray, fg: np.ndarray, gallery_distances, sigma_floor: float = 1e-6
) -> float:
    """Centroid-distance similarity, standardized across the query's gallery."""
    raw = float(np.linalg.norm(fq.mean(axis=0) - fg.mean(axis=0)))
    gallery_distances = np.asarray(gallery_distances, dtype=np.float64)
    std = gallery_distances.std()
    if std < sigma_floor:
        return 0.0
    z = (raw - gallery_distances.mean()) / std
    return float(max(-z, 0.0))


def fuse(
    p_nod: float,
    p_sub: float,
    p_glo: float,
    skipped: bool,
    alpha: float,
    beta: float,
    gamma: float,
) -> float:
    """Weighted fusion; when the local scale is skipped the remaining
    weights are renormalized so scores stay on one scale."""
    if not skipped:
        return alpha * p_nod + beta * p_sub + gamma * p_glo
    remaining = alpha + gamma
    if remaining <= 0.0:
        return 0.0
    return (alpha * p_nod + gamma * p_glo) / remaining * (alpha + beta + gamma)


def compute_embedding(sample: GroupSample, params: ModelParams, config: Config) -> GroupEmbedding:
    f_out, a0 = embed_group(sample, params, config)
    return GroupEmbedding(group_id=sample.group_id, view_id=sample.view_id, f_out=f_out, a0=a0)


def score_query(
    query: GroupEmbedding, gallery: list[GroupEmbedding], config: Config
) -> list[MatchScore]:
    """All three scales against every gallery candidate, fused."""
    if not gallery:
        raise ValueError("empty gallery")
    centroid_q = query.f_out.mean(axis=0)
    raw_glo = np.array(
        [np.linalg.norm(centroid_q - g.f_out.mean(axis=0)) for g in gallery]
    )
    glo = np.maximum(-norm_rows(raw_glo[None, :], config.sigma_floor)[0], 0.0)

    scores = []
    for idx, g in enumerate(gallery):
        _, p_nod = km_assign(node_similarity(query.f_out, g.f_out, config.sigma_floor))
        p_sub, skipped = local_similarity(
            query.a0, g.a0, query.f_out, g.f_out, config, config.seed
        )
        p_glo = float(glo[idx])
        p = fuse(p_nod, p_sub, p_glo, skipped, config.alpha, config.beta, config.gamma)
        scores.append(
            MatchScore(p_nod=p_nod, p_sub=p_sub, p_glo=p_glo, p=p, sub_skipped=skipped)
        )
    return scores


def rank_scores(scores: list[MatchScore]) -> list[tuple[int, MatchScore]]:
    """Descending by fused score, ties broken by gallery index."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i].p, i))
    return [(i, scores[i]) for i in order]


def match_query(
    query: GroupSample,
    gallery: list[GroupSample],
    params: ModelParams,
    config: Config,
) -> list[tuple[int, MatchScore]]:
    """Rank every gallery sample against one query sample."""
    if not gallery:
        raise ValueError("empty gallery")
    query_emb = compute_embedding(query, params, config)
    gallery_embs = [compute_embedding(g, params, config) for g in gallery]
    return rank_scores(score_query(query_emb, gallery_embs, config))


def match_all(
    queries: list[GroupSample],
    gallery: list[GroupSample],
    params: ModelParams,
    config: Config,
    threads: int = 1,
) -> list[list[tuple[int, MatchScore]]]:
    """Rank the gallery for every query; output order follows the queries
    regardless of thread count."""
    if not gallery:
        raise ValueError("empty gallery")
    gallery_embs = [compute_embedding(g, params, config) for g in gallery]

    def run(q: GroupSample) -> list[tuple[int, MatchScore]]:
        return rank_scores(score_query(compute_embedding(q, params, config), gallery_embs, config))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, queries))
    return [run(q) for q in queries]
