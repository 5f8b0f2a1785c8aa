"""Greedy minimum-degree ordering on the symmetric adjacency structure.

The ordering only affects fill; every downstream result is invariant to
it.  The implementation is the plain greedy scheme: repeatedly eliminate
a vertex of minimum current degree and connect its neighbours into a
clique.  A binary heap with lazy invalidation keeps selection cheap;
ties break on vertex index so the result is deterministic.
"""

from __future__ import annotations

import heapq

import numpy as np

from .sparse import Permutation, SparseMatrix


def fill_reducing_order(A: SparseMatrix) -> Permutation:
    """Return a fill-reducing elimination order for the structure of A.

    Parameters
    ----------
    A : SparseMatrix
        Symmetric matrix; only the nonzero pattern matters.

    Returns
    -------
    Permutation
        ``perm[new] = old``; position ``new`` is eliminated at step ``new``.
    """
    n = A.n
    adj: list[set[int]] = [set() for _ in range(n)]
    cols = A._col_of_entry()
    for i, j in zip(A.row_idx.tolist(), cols.tolist()):
        if i != j:
            adj[i].add(j)
            adj[j].add(i)
    if A.mode == "full":
        # full mode may store one triangle only; the loop above already
        # inserted both directions, nothing further needed
        pass

    # ties break toward the higher vertex id, which keeps hub-and-spoke
    # centers (high degree for most of the elimination) at the very end
    heap = [(len(adj[v]), -v) for v in range(n)]
    heapq.heapify(heap)
    eliminated = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    count = 0
    while count < n:
        deg, nv = heapq.heappop(heap)
        v = -nv
        if eliminated[v] or deg != len(adj[v]):
            continue  # stale heap entry
        eliminated[v] = True
        order[count] = v
        count += 1
        nb = adj[v]
        adj[v] = set()
        for u in nb:
            au = adj[u]
            au.discard(v)
            au |= nb
            au.discard(u)
            heapq.heappush(heap, (len(au), -u))
    return Permutation(order)
