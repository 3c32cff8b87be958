"""Brute-force reference implementations used only by the tests.

Nothing here imports the package's search code; distances come straight
from ``np.linalg.norm`` and orderings from plain Python sorts.
"""
from __future__ import annotations

import itertools

import numpy as np


def topk(x, C, k):
    d = [float(np.linalg.norm(x - c)) for c in C]
    order = sorted(range(len(C)), key=lambda i: (d[i], i))[:k]
    return [(i, d[i], x - C[i]) for i in order]


def greedy_tokens(e, books):
    x = np.asarray(e, dtype=float)
    toks, chain = [], []
    for C in books:
        chain.append(x)
        i, _, r = topk(x, C, 1)[0]
        toks.append(i)
        x = r
    return tuple(toks), chain


def ecm_candidates(e, books, kvec):
    """All (score, rank tuple, ids) combinations, best first."""
    _, chain = greedy_tokens(e, books)
    per_level = [topk(chain[l], C, kvec[l]) for l, C in enumerate(books)]
    out = []
    for ranks in itertools.product(*(range(len(p)) for p in per_level)):
        ids = tuple(per_level[l][r][0] for l, r in enumerate(ranks))
        score = -sum(per_level[l][r][1] for l, r in enumerate(ranks))
        out.append((score, ranks, ids))
    out.sort(key=lambda t: (-t[0], t[1]))
    return out


def ecm_assign(E, books, kvec):
    """Sequential ECM; stops (returning the partial list) at the first failure."""
    used, got = set(), []
    for e in E:
        pick = next((ids for _, _, ids in ecm_candidates(e, books, kvec) if ids not in used), None)
        if pick is None:
            return got, True
        used.add(pick)
        got.append(pick)
    return got, False


def dfs_leaves(e, books, kvec):
    """Every leaf of the nearest-first search tree, in visiting order."""
    leaves = []

    def rec(x, l, prefix):
        if l == len(books):
            leaves.append(tuple(prefix))
            return
        for i, _, r in topk(x, books[l], kvec[l]):
            rec(r, l + 1, prefix + [i])

    rec(np.asarray(e, dtype=float), 0, [])
    return leaves


def rrs_assign(E, books, kvec):
    used, got = set(), []
    for e in E:
        pick = next((ids for ids in dfs_leaves(e, books, kvec) if ids not in used), None)
        if pick is None:
            return got, True
        used.add(pick)
        got.append(pick)
    return got, False


def lloyd(X, C, iters=500):
    """Plain Lloyd iterations from given centroids until labels stop changing."""
    X = np.asarray(X, dtype=float)
    C = np.array(C, dtype=float)
    labels = None
    for _ in range(iters):
        d = np.linalg.norm(X[:, None, :] - C[None, :, :], axis=2)
        new = d.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(C)):
            if np.any(labels == j):
                C[j] = X[labels == j].mean(axis=0)
    return C, labels


def group_conflicts(ids):
    groups = {}
    for k, v in ids.items():
        groups.setdefault(v, []).append(k)
    shared = [g for g in groups.values() if len(g) > 1]
    return sum(len(g) for g in shared), len(shared)


def random_instance(rng, L=None, max_m=8, max_n=50):
    """Small random codebook stack plus a clumpy corpus that forces conflicts."""
    L = L or int(rng.integers(2, 4))
    d = int(rng.integers(1, 4))
    sizes = [int(rng.integers(3, max_m + 1)) for _ in range(L)]
    books = [rng.standard_normal((m, d)) * (0.5 ** l) for l, m in enumerate(sizes)]
    kvec = tuple(int(rng.integers(2, 4)) for _ in range(L))
    n = int(rng.integers(2, max_n + 1))
    pool = rng.standard_normal((max(1, n // 4), d))
    E = pool[rng.integers(len(pool), size=n)] + rng.standard_normal((n, d)) * 0.05
    return books, kvec, E
