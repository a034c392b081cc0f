"""Maximum-weight bipartite assignment via the Kuhn-Munkres algorithm.

Classic O(n^3) shortest-augmenting-path formulation with dual potentials,
run on the negated weights. Group sizes here are tiny (at most a handful
of members a side), so a dense solver is the right tool.
"""

from __future__ import annotations

import numpy as np


def _min_cost_square(cost: np.ndarray) -> np.ndarray:
    """Column index assigned to each row of a square cost matrix."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row owning column j, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)

    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        min_slack = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < min_slack[j]:
                    min_slack[j] = cur
                    way[j] = j0
                if min_slack[j] < delta:
                    delta = min_slack[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    min_slack[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    col_of_row = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        if match[j] > 0:
            col_of_row[match[j] - 1] = j - 1
    return col_of_row


def max_weight_assignment(weights: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Best assignment of min(N, M) pairs maximizing total weight.

    Rectangular inputs are zero-padded to square internally; pairs that
    land on padding are dropped from the result.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.size == 0:
        raise ValueError("weights must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite")
    n, m = weights.shape
    k = max(n, m)
    padded = np.zeros((k, k))
    padded[:n, :m] = weights

    col_of_row = _min_cost_square(-padded)
    pairs = [(i, int(col_of_row[i])) for i in range(n) if col_of_row[i] < m]
    total = float(sum(weights[i, j] for i, j in pairs))
    return pairs, total
