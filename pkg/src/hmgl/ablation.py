"""Ablation harness: relation-graph, loss and matching-scale toggles.

Scale rows reuse one matching pass and only re-fuse the cached per-scale
components; graph and loss rows retrain with the component disabled.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .domain import Config, GroupSample, MatchScore
from .evaluation import cmc, mean_ap
from .matching import fuse, match_all
from .trainer import train

CMC_KS = (1, 5, 10, 20)

SUITES = ("graphs", "losses", "scales")

_SCALE_ROWS = (
    ("full", (1, 1, 1)),
    ("nod_only", (1, 0, 0)),
    ("sub_only", (0, 1, 0)),
    ("glo_only", (0, 0, 1)),
    ("nod_sub", (1, 1, 0)),
    ("nod_glo", (1, 0, 1)),
    ("sub_glo", (0, 1, 1)),
)


@dataclass(frozen=True)
class AblationRow:
    name: str
    rank1: float
    rank5: float
    rank10: float
    rank20: float
    mean_ap: float


def split_views(
    dataset: list[GroupSample], query_view: int, gallery_view: int
) -> tuple[list[GroupSample], list[GroupSample]]:
    queries = [s for s in dataset if s.view_id == query_view]
    gallery = [s for s in dataset if s.view_id == gallery_view]
    if not queries:
        raise ValueError(f"no samples with view {query_view}")
    if not gallery:
        raise ValueError(f"no samples with view {gallery_view}")
    return queries, gallery


def retrieval_metrics(
    ranked_ids: list[list[int]], truths: list[set]
) -> dict[str, float]:
    rates = cmc(ranked_ids, truths, CMC_KS)
    return {
        "rank1": rates[1],
        "rank5": rates[5],
        "rank10": rates[10],
        "rank20": rates[20],
        "map": mean_ap(ranked_ids, truths),
    }


def _rankings_to_ids(
    rankings: list[list[tuple[int, MatchScore]]], gallery: list[GroupSample]
) -> list[list[int]]:
    return [[gallery[idx].group_id for idx, _ in ranked] for ranked in rankings]


def evaluate_matching(
    queries: list[GroupSample],
    gallery: list[GroupSample],
    params,
    config: Config,
    threads: int = 1,
) -> tuple[list[list[tuple[int, MatchScore]]], dict[str, float]]:
    """Rank every query, then score CMC/mAP with same-group relevance."""
    rankings = match_all(queries, gallery, params, config, threads=threads)
    truths = [{q.group_id} for q in queries]
    metrics = retrieval_metrics(_rankings_to_ids(rankings, gallery), truths)
    return rankings, metrics


def _refuse_row(
    rankings: list[list[tuple[int, MatchScore]]],
    gallery: list[GroupSample],
    queries: list[GroupSample],
    config: Config,
    keep: tuple[int, int, int],
) -> dict[str, float]:
    alpha = config.alpha * keep[0]
    beta = config.beta * keep[1]
    gamma = config.gamma * keep[2]
    ranked_ids = []
    for ranked in rankings:
        rescored = []
        for idx, score in ranked:
            p = fuse(score.p_nod, score.p_sub, score.p_glo, score.sub_skipped, alpha, beta, gamma)
            rescored.append((idx, p))
        rescored.sort(key=lambda pair: (-pair[1], pair[0]))
        ranked_ids.append([gallery[idx].group_id for idx, _ in rescored])
    truths = [{q.group_id} for q in queries]
    return retrieval_metrics(ranked_ids, truths)


def ablate(
    dataset: list[GroupSample],
    config: Config,
    suite: str,
    params,
    query_view: int = 0,
    gallery_view: int = 1,
    threads: int = 1,
) -> list[AblationRow]:
    """Run one toggle suite; `params` supplies the trained all-on model."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite '{suite}', expected one of {SUITES}")
    queries, gallery = split_views(dataset, query_view, gallery_view)
    rows: list[AblationRow] = []

    def add(name: str, metrics: dict[str, float]) -> None:
        rows.append(AblationRow(name=name, rank1=metrics["rank1"], rank5=metrics["rank5"],
                                rank10=metrics["rank10"], rank20=metrics["rank20"],
                                mean_ap=metrics["map"]))

    if suite == "scales":
        rankings, _ = evaluate_matching(queries, gallery, params, config, threads)
        for name, keep in _SCALE_ROWS:
            add(name, _refuse_row(rankings, gallery, queries, config, keep))
        return rows

    _, all_on = evaluate_matching(queries, gallery, params, config, threads)
    add("all_on", all_on)

    if suite == "graphs":
        variants = [("no_" + g, tuple(x for x in config.active_graphs if x != g))
                    for g in config.active_graphs]
        variants.append(("none", ()))
        for name, graphs in variants:
            variant_cfg = dataclasses.replace(config, active_graphs=graphs)
            retrained, _ = train(dataset, variant_cfg)
            _, metrics = evaluate_matching(queries, gallery, retrained, variant_cfg, threads)
            add(name, metrics)
        return rows

    for loss in config.active_losses:
        variant_cfg = dataclasses.replace(
            config, active_losses=tuple(x for x in config.active_losses if x != loss)
        )
        retrained, _ = train(dataset, variant_cfg)
        _, metrics = evaluate_matching(queries, gallery, retrained, variant_cfg, threads)
        add("no_" + loss, metrics)
    return rows
