"""Fill-reducing symmetric ordering.

Classic minimum degree on a quotient graph with the approximate-degree
update used by AMD-family codes. Bit-exact agreement with any particular
library is not a goal; determinism and fill reduction are.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .csc import SparseCSC, DimensionError


@dataclass(frozen=True)
class Permutation:
    """perm[k] = original index of the k-th pivot; inv_perm undoes it."""

    perm: np.ndarray
    inv_perm: np.ndarray

    @classmethod
    def from_order(cls, order) -> "Permutation":
        perm = np.asarray(order, dtype=np.int32)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size, dtype=np.int32)
        return cls(perm, inv)

    @classmethod
    def identity(cls, n) -> "Permutation":
        idx = np.arange(n, dtype=np.int32)
        return cls(idx, idx.copy())

    @property
    def n(self) -> int:
        return self.perm.size

    def validate(self) -> "Permutation":
        n = self.n
        if sorted(self.perm.tolist()) != list(range(n)):
            raise ValueError("perm is not a bijection")
        if np.any(self.perm[self.inv_perm] != np.arange(n)):
            raise ValueError("inv_perm does not invert perm")
        return self


def amd_order(pattern: SparseCSC) -> Permutation:
    """Fill-reducing ordering of a structurally symmetric sparse pattern.

    Non-symmetric inputs are symmetrized internally. Identical input yields
    an identical ordering (ties break toward the smallest node index).
    """
    if pattern.nrows != pattern.ncols:
        raise DimensionError("ordering needs a square matrix")
    n = pattern.nrows
    if n == 0:
        return Permutation.identity(0)

    sym = pattern.symmetrized_pattern()
    adj = [set() for _ in range(n)]
    rows, cols, _ = sym.triplets()
    for r, c in zip(rows.tolist(), cols.tolist()):
        if r != c:
            adj[c].add(r)

    elem_of = [set() for _ in range(n)]      # elements adjacent to each variable
    elements: dict[int, set] = {}            # element id -> variable set
    degree = [len(a) for a in adj]
    alive = np.ones(n, dtype=bool)
    heap = [(degree[i], i) for i in range(n)]
    heapq.heapify(heap)
    order = []
    stamp = {}                               # element -> (pivot step, |Le \ Lp|)
    nelim = 0

    while nelim < n:
        d, piv = heapq.heappop(heap)
        if not alive[piv] or d != degree[piv]:
            continue
        alive[piv] = False
        order.append(piv)
        nelim += 1

        # new element: union of direct neighbours and absorbed elements
        le = set(adj[piv])
        for e in elem_of[piv]:
            le |= elements.pop(e)
        le.discard(piv)
        le = {j for j in le if alive[j]}
        if not le:
            adj[piv].clear()
            elem_of[piv].clear()
            continue
        elements[piv] = le

        # |Le \ Lp| per outside element in one stamped scan
        for j in le:
            for e in elem_of[j]:
                if e in elements:
                    st = stamp.get(e)
                    if st is None or st[0] != nelim:
                        stamp[e] = [nelim, len(elements[e]) - 1]
                    else:
                        st[1] -= 1

        for j in le:
            adj[j].discard(piv)
            adj[j] -= le
            elem_of[j] = {e for e in elem_of[j] if e in elements}
            elem_of[j].add(piv)
            ext = len(le) - 1
            approx = len(adj[j]) + ext
            for e in elem_of[j]:
                if e != piv:
                    approx += max(stamp[e][1], 0)
            degree[j] = min(n - nelim, approx)
            heapq.heappush(heap, (degree[j], j))

        adj[piv].clear()
        elem_of[piv].clear()

    return Permutation.from_order(order)
