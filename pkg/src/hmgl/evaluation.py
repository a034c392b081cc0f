"""Retrieval metrics: CMC rank-k rates and mean average precision."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def _check_inputs(rankings: Sequence[Sequence[int]], truths: Sequence[set]) -> None:
    if len(rankings) != len(truths):
        raise ValueError("rankings and truths must align")
    if len(rankings) == 0:
        raise ValueError("no queries")
    for q, truth in enumerate(truths):
        if not truth:
            raise ValueError(f"query {q} has an empty relevant set")


def cmc(
    rankings: Sequence[Sequence[int]],
    truths: Sequence[set],
    ks: Iterable[int],
) -> dict[int, float]:
    """Fraction of queries with a relevant entry somewhere in the top k."""
    _check_inputs(rankings, truths)
    ks = list(ks)
    hits = {k: 0 for k in ks}
    for ranked, truth in zip(rankings, truths):
        first_hit = next((pos for pos, gid in enumerate(ranked) if gid in truth), None)
        for k in ks:
            if first_hit is not None and first_hit < k:
                hits[k] += 1
    return {k: hits[k] / len(rankings) for k in ks}


def mean_ap(rankings: Sequence[Sequence[int]], truths: Sequence[set]) -> float:
    """Mean over queries of non-interpolated average precision."""
    _check_inputs(rankings, truths)
    aps = []
    for q, (ranked, truth) in enumerate(zip(rankings, truths)):
        relevant = 0
        precisions = []
        for pos, gid in enumerate(ranked, start=1):
            if gid in truth:
                relevant += 1
                precisions.append(relevant / pos)
        if not precisions:
            raise ValueError(f"query {q} has no relevant entry in its ranking")
        aps.append(float(np.mean(precisions)))
    return float(np.mean(aps))
