"""Minimum-cost assignment (Kuhn-Munkres with row potentials)."""
from __future__ import annotations

import numpy as np

from sevae.errors import ContractError


def _square_assignment(cost: np.ndarray) -> np.ndarray:
    """O(n^3) shortest-augmenting-path Hungarian method on a square matrix.

    Returns ``col_of_row``.  Rows are inserted in index order and ties in the
    column scan go to the lowest column, so the output is deterministic.
    """
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=int)  # 1-based; 0 means free
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            delta, j1 = inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[row_of_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def hungarian(cost) -> tuple[list[tuple[int, int]], float]:
    """Optimal one-to-one assignment of ``min(n, m)`` row/column pairs.

    Rectangular inputs are padded to square with ``max(cost) + 1``.
    Returns the ``(row, col)`` pairs sorted by row and their total cost.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ContractError(f"cost must be 2-D, got shape {cost.shape}")
    if cost.size == 0:
        return [], 0.0
    if not np.all(np.isfinite(cost)):
        raise ContractError("cost matrix contains non-finite entries")
    n, m = cost.shape
    size = max(n, m)
    padded = np.full((size, size), cost.max() + 1.0)
    padded[:n, :m] = cost
    col_of_row = _square_assignment(padded)
    pairs = [(i, int(col_of_row[i])) for i in range(n) if col_of_row[i] < m]
    return pairs, float(sum(cost[i, j] for i, j in pairs))
