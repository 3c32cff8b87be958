"""Codebook training: k-means, residual k-means stacks and clustering trees."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .alloc import _sq_rows, nearest
from .core import CodebookStack, DegenerateInput, EmbeddingSet, HcNode, HcTree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    init: str | np.ndarray = "kmeans++"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    history: list[float]


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    xn = _sq_rows(X)
    chosen = [int(rng.integers(n))]
    c = X[chosen[0]]
    d2 = np.maximum(xn - 2.0 * (X @ c) + c @ c, 0.0)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        c = X[nxt]
        np.minimum(d2, np.maximum(xn - 2.0 * (X @ c) + c @ c, 0.0), out=d2)
    return X[chosen].copy()


def _update(X, labels, dists, C):
    k = C.shape[0]
    counts = np.bincount(labels, minlength=k)
    order = np.argsort(labels, kind="stable")
    present = np.flatnonzero(counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[present]
    sums = np.add.reduceat(X[order], starts, axis=0)
    new = C.copy()
    new[present] = sums / counts[present, None]
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        far = np.argsort(-dists, kind="stable")[: len(empty)]
        new[empty[: len(far)]] = X[far]
    return new


def kmeans(points, cfg: KMeansConfig) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when the relative inertia improvement drops to ``cfg.tol`` or after
    ``cfg.max_iters`` centroid updates. Empty clusters are moved onto the
    points currently farthest from their centroids.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DegenerateInput("kmeans needs at least one point")
    if not np.isfinite(X).all():
        raise DegenerateInput("kmeans input has non-finite values")
    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.init, str):
        if cfg.init != "kmeans++":
            raise ValueError(f"unknown init {cfg.init!r}")
        C = kmeans_plusplus(X, cfg.k, rng)
    else:
        C = np.array(cfg.init, dtype=np.float64)
        if C.shape != (cfg.k, X.shape[1]):
            raise ValueError(f"initial centroids have shape {C.shape}, expected {(cfg.k, X.shape[1])}")

    labels, dists, _ = nearest(X, C)
    inertia = float(np.sum(dists * dists))
    history = [inertia]
    for _ in range(cfg.max_iters):
        C = _update(X, labels, dists, C)
        labels, dists, _ = nearest(X, C)
        prev, inertia = inertia, float(np.sum(dists * dists))
        history.append(inertia)
        if prev - inertia <= cfg.tol * prev:
            break
    return KMeansResult(C, labels, inertia, history)


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, EmbeddingSet):
        return data.vectors
    return np.asarray(data, dtype=np.float64)


def train_rq(data, levels: int = 3, size: int = 256, *, max_iters: int = 100,
             tol: float = 1e-4, seed: int = 0, normalize: bool = False) -> CodebookStack:
    """Residual k-means: each level clusters the residuals left by the one above."""
    if levels < 1 or size < 1:
        raise ValueError("levels and size must be >= 1")
    if normalize and isinstance(data, EmbeddingSet):
        data = data.normalized()
    R = _as_matrix(data)
    books = []
    for l in range(levels):
        res = kmeans(R, KMeansConfig(size, max_iters, tol, seed + l))
        log.debug("rq level %d: inertia %.6g after %d updates", l + 1, res.inertia, len(res.history) - 1)
        books.append(res.centroids)
        R = R - res.centroids[res.labels]
    config = dict(kind="rq", levels=levels, size=size, max_iters=max_iters, tol=tol,
                  seed=seed, normalize=normalize)
    return CodebookStack.from_arrays(books, config)


def train_hc(data, depth: int = 3, branching: int = 16, *, max_iters: int = 100,
             tol: float = 1e-4, seed: int = 0, normalize: bool = False) -> HcTree:
    """Fixed-depth tree of recursive k-means partitions.

    Clusters too small to split continue as single-child chains so every leaf
    sits at ``depth``. Node centroids are the means of their members.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if branching < 2:
        raise ValueError("branching must be >= 2")
    if normalize and isinstance(data, EmbeddingSet):
        data = data.normalized()
    X = _as_matrix(data)
    if X.shape[0] == 0:
        raise DegenerateInput("train_hc needs at least one point")

    def build(rows: np.ndarray, level: int) -> HcNode:
        node = HcNode(X[rows].mean(axis=0), [], len(rows))
        if level == depth:
            return node
        k = min(branching, len(rows))
        if k == 1:
            node.children.append(build(rows, level + 1))
            return node
        res = kmeans(X[rows], KMeansConfig(k, max_iters, tol, seed))
        for j in range(k):
            members = rows[res.labels == j]
            if len(members):
                node.children.append(build(members, level + 1))
        return node

    root = build(np.arange(X.shape[0]), 0)
    config = dict(kind="hc", depth=depth, branching=branching, max_iters=max_iters,
                  tol=tol, seed=seed, normalize=normalize)
    return HcTree(root, depth, branching, config)


def reconstruct(tokens: Sequence[int], stack: CodebookStack) -> np.ndarray:
    """Sum of the selected centroid at every level."""
    stack.validate_id(tokens)
    v = np.zeros(stack.dim)
    for cb, t in zip(stack.levels, tokens):
        v = v + cb.centroids[t]
    return v


def reconstruct_many(ids: np.ndarray, stack: CodebookStack) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    v = np.zeros((ids.shape[0], stack.dim))
    for l, cb in enumerate(stack.levels):
        v = v + cb.centroids[ids[:, l]]
    return v
