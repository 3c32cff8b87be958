"""Nearest-centroid retrieval (Alloc) and candidate providers.

All distances that decide a token go through the same row kernel,
``_sq_rows(query - centroids)``, so single-query and batched searches agree
bit for bit. Batched searches use the fast ``|c|^2 - 2 x.c`` expansion and fall back to
the exact kernel wherever rounding could change the winner.
"""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .core import (
    CandidateSet,
    Codebook,
    CodebookStack,
    HcTree,
    LevelCandidates,
    SemanticId,
)


def _centroids(codebook) -> np.ndarray:
    return codebook.centroids if isinstance(codebook, Codebook) else np.asarray(codebook, dtype=np.float64)


def _sq_rows(diff: np.ndarray) -> np.ndarray:
    return (diff * diff).sum(-1)


def alloc_topk(query, codebook, k: int):
    """Return the ``k`` nearest centroids to ``query``.

    Output is ``(indices, distances, residuals)`` sorted by ascending distance,
    ties going to the lower centroid index; ``residuals[r] = query - centroid``.
    """
    C = _centroids(codebook)
    m = C.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} outside 1..{m}")
    diff = np.asarray(query, dtype=np.float64) - C
    dist = np.sqrt(_sq_rows(diff))
    order = np.argsort(dist, kind="stable")[:k]
    return order, dist[order], diff[order]


def nearest(X: np.ndarray, C: np.ndarray, chunk: int = 4096):
    """Nearest centroid for every row of ``X``.

    Returns ``(labels, distances, residuals)``; agrees exactly with
    ``alloc_topk(x, C, 1)`` row by row. Rows whose runner-up is within
    rounding distance of the winner are settled by the exact kernel.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    n, d = X.shape
    labels = np.empty(n, dtype=np.int64)
    cn = _sq_rows(C)
    cmax = float(cn.max())
    for s in range(0, n, chunk):
        Xb = X[s:s + chunk]
        approx = cn[None, :] - 2.0 * (Xb @ C.T)
        lab = approx.argmin(axis=1)
        best = approx[np.arange(len(Xb)), lab]
        eps = 1e-12 * d * (_sq_rows(Xb) + cmax) + 1e-300
        close = (approx <= (best + 4 * eps)[:, None]).sum(axis=1) > 1
        for r in np.flatnonzero(close):
            lab[r] = alloc_topk(Xb[r], C, 1)[0][0]
        labels[s:s + chunk] = lab
    residuals = X - C[labels]
    return labels, np.sqrt(_sq_rows(residuals)), residuals


def greedy_chain(e, stack: CodebookStack):
    """Nearest-centroid token at every level, following the residual chain.

    Returns ``(tokens, chain, final_residual)`` where ``chain[l]`` is the query
    fed to level ``l + 1`` (``chain[0] == e``).
    """
    x = np.asarray(e, dtype=np.float64)
    tokens = []
    chain = []
    for cb in stack.levels:
        chain.append(x)
        idx, _, res = alloc_topk(x, cb, 1)
        tokens.append(int(idx[0]))
        x = res[0]
    return tuple(tokens), np.array(chain), x


def greedy_batch(X: np.ndarray, stack: CodebookStack):
    """Vectorised greedy chains: ``(ids N x L, distances N x L, final residuals)``."""
    X = np.asarray(X, dtype=np.float64)
    L = stack.depth
    ids = np.empty((len(X), L), dtype=np.int64)
    dists = np.empty((len(X), L), dtype=np.float64)
    R = X
    for l, cb in enumerate(stack.levels):
        ids[:, l], dists[:, l], R = nearest(R, cb.centroids)
    return ids, dists, R


def chain_candidates(chain: np.ndarray, stack: CodebookStack, kvec: Sequence[int]) -> CandidateSet:
    """Per-level top-k against the fixed greedy residual chain."""
    levels = []
    for l, cb in enumerate(stack.levels):
        idx, dist, res = alloc_topk(chain[l], cb, kvec[l])
        levels.append(LevelCandidates(idx, dist, res))
    return CandidateSet(tuple(levels))


def hc_candidates(prefix: Sequence[int], query, k: int, tree: HcTree):
    """The ``k`` children of node ``prefix`` nearest to ``query``.

    Trees carry no residuals, so the residual slot holds the unchanged query.
    ``k`` above the node's arity is clamped; the returned flag records it.
    """
    node = tree.node(prefix)
    if not node.children:
        raise ValueError(f"prefix {tuple(prefix)} is a leaf")
    if k < 1:
        raise ValueError(f"k={k} must be >= 1")
    C = np.array([c.centroid for c in node.children])
    clamped = k > len(C)
    k = min(k, len(C))
    q = np.asarray(query, dtype=np.float64)
    idx, dist, _ = alloc_topk(q, C, k)
    return LevelCandidates(idx, dist, np.tile(q, (k, 1))), clamped


class RqProvider:
    """Candidate provider over a residual codebook stack."""

    mode = "rq"

    def __init__(self, stack: CodebookStack):
        self.index = stack
        self.stack = stack

    @property
    def depth(self) -> int:
        return self.stack.depth

    @property
    def capacity(self) -> int:
        return self.stack.capacity

    @property
    def max_k(self) -> tuple[int, ...]:
        return self.stack.sizes

    def greedy_batch(self, X):
        ids, dists, _ = greedy_batch(X, self.stack)
        return ids, dists

    def expand(self, prefix: SemanticId, x: np.ndarray, k: int):
        """Children of a partial id: ``(tokens, distances, next queries)``."""
        cb = self.stack.levels[len(prefix)]
        return alloc_topk(x, cb, min(k, cb.size))

    def ecm_paths(self, e, kvec: Sequence[int]):
        """All combinations of per-level candidates, odometer order.

        Returns ``(ranks, tokens, distances)``, each ``P x L``.
        """
        _, chain, _ = greedy_chain(e, self.stack)
        cs = chain_candidates(chain, self.stack, kvec)
        return combine_levels(cs)


class HcProvider:
    """Candidate provider over a hierarchical clustering tree.

    Distances are from the original query to each child centroid.
    """

    mode = "hc"

    def __init__(self, tree: HcTree):
        self.index = tree
        self.tree = tree

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def capacity(self) -> int:
        return self.tree.capacity

    @property
    def max_k(self) -> tuple[int, ...]:
        return (self.tree.branching,) * self.tree.depth

    def greedy_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        L = self.tree.depth
        ids = np.empty((len(X), L), dtype=np.int64)
        dists = np.empty((len(X), L), dtype=np.float64)
        stack = [(self.tree.root, np.arange(len(X)), 0)]
        while stack:
            node, rows, depth = stack.pop()
            if depth == L or len(rows) == 0:
                continue
            C = np.array([c.centroid for c in node.children])
            lab, dd, _ = nearest(X[rows], C)
            ids[rows, depth] = lab
            dists[rows, depth] = dd
            for j, child in enumerate(node.children):
                stack.append((child, rows[lab == j], depth + 1))
        return ids, dists

    def expand(self, prefix: SemanticId, x: np.ndarray, k: int):
        lc, _ = hc_candidates(prefix, x, k, self.tree)
        return lc.indices, lc.distances, lc.residuals

    def ecm_paths(self, e, kvec: Sequence[int]):
        e = np.asarray(e, dtype=np.float64)
        L = self.tree.depth
        ranks, tokens, dists = [], [], []

        def walk(node, rk, tk, dk):
            if len(tk) == L:
                ranks.append(rk)
                tokens.append(tk)
                dists.append(dk)
                return
            C = np.array([c.centroid for c in node.children])
            idx, dd, _ = alloc_topk(e, C, min(kvec[len(tk)], len(C)))
            for r, (i, d) in enumerate(zip(idx, dd)):
                walk(node.children[i], rk + (r,), tk + (int(i),), dk + (float(d),))

        walk(self.tree.root, (), (), ())
        return (np.array(ranks, dtype=np.int64), np.array(tokens, dtype=np.int64),
                np.array(dists, dtype=np.float64))


def combine_levels(cs: CandidateSet):
    """Cartesian product of per-level candidates; last level varies fastest."""
    L = len(cs.levels)
    kvec = cs.kvec
    ranks = np.array(list(itertools.product(*(range(k) for k in kvec))), dtype=np.int64).reshape(-1, L)
    tokens = np.empty_like(ranks)
    dists = np.empty(ranks.shape, dtype=np.float64)
    for l, lc in enumerate(cs.levels):
        tokens[:, l] = lc.indices[ranks[:, l]]
        dists[:, l] = lc.distances[ranks[:, l]]
    return ranks, tokens, dists


def make_provider(index):
    if isinstance(index, CodebookStack):
        return RqProvider(index)
    if isinstance(index, HcTree):
        return HcProvider(index)
    raise TypeError(f"no candidate provider for {type(index).__name__}")
