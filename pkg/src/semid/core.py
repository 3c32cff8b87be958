"""Domain types shared across the toolkit.

Semantic ids are plain tuples of ints so that equality, hashing and ordering
are lexicographic on tokens for free.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

ATOL = 1e-6

SemanticId = tuple[int, ...]


class SemIdError(Exception):
    """Base class for toolkit errors."""


class DegenerateInput(SemIdError, ValueError):
    pass


class CapacityExceeded(SemIdError):
    def __init__(self, n: int, capacity: int):
        self.n = n
        self.capacity = capacity
        super().__init__(f"{n} embeddings exceed id capacity {capacity} ({n} > {capacity})")


class ExhaustedCandidates(SemIdError):
    """Every candidate id for an embedding is already taken."""

    def __init__(self, key: str, kvec: Sequence[int], report=None):
        self.key = key
        self.kvec = tuple(kvec)
        self.report = report
        super().__init__(
            f"no free id for {key!r}: all candidates under kvec={self.kvec} are taken"
        )


class SuffixedId(NamedTuple):
    prefix: SemanticId
    suffix: int

    def tokens(self) -> SemanticId:
        return self.prefix + (self.suffix,)


def as_id(tokens: Iterable[int]) -> SemanticId:
    return tuple(int(t) for t in tokens)


@dataclass(frozen=True)
class EmbeddingSet:
    """Ordered (key, vector) pairs. Row order is the processing order."""

    keys: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2:
            raise DegenerateInput(f"vectors must be 2-D, got shape {vecs.shape}")
        if vecs.shape[1] < 1:
            raise DegenerateInput("embedding dimension must be >= 1")
        keys = tuple(str(k) for k in self.keys)
        if len(keys) != vecs.shape[0]:
            raise DegenerateInput(f"{len(keys)} keys for {vecs.shape[0]} vectors")
        if len(set(keys)) != len(keys):
            dup = next(k for k, c in Counter(keys).items() if c > 1)
            raise DegenerateInput(f"duplicate key {dup!r}")
        if not np.isfinite(vecs).all():
            row = int(np.argwhere(~np.isfinite(vecs))[0, 0])
            raise DegenerateInput(f"non-finite component in row {row} ({keys[row]!r})")
        vecs = vecs.copy()
        vecs.flags.writeable = False
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def from_array(cls, vectors, keys: Sequence[str] | None = None) -> "EmbeddingSet":
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        if keys is None:
            keys = [f"e{i}" for i in range(vectors.shape[0])]
        return cls(tuple(keys), vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.keys)

    def subset(self, rows: Sequence[int]) -> "EmbeddingSet":
        rows = list(rows)
        return EmbeddingSet(tuple(self.keys[i] for i in rows), self.vectors[rows])

    def normalized(self) -> "EmbeddingSet":
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return EmbeddingSet(self.keys, self.vectors / norms)


@dataclass(frozen=True)
class Codebook:
    level: int
    centroids: np.ndarray

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError(f"codebook {self.level}: centroids must be a non-empty M x d matrix")
        if not np.isfinite(c).all():
            raise ValueError(f"codebook {self.level}: non-finite centroid")
        if self.level < 1:
            raise ValueError("codebook level must be >= 1")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class CodebookStack:
    levels: tuple[Codebook, ...]
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("a codebook stack needs at least one level")
        for i, cb in enumerate(levels, start=1):
            if cb.level != i:
                raise ValueError(f"codebook at position {i} has level {cb.level}")
            if cb.dim != levels[0].dim:
                raise ValueError("codebooks disagree on dimension")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], config: dict | None = None) -> "CodebookStack":
        return cls(tuple(Codebook(i, a) for i, a in enumerate(arrays, start=1)), dict(config or {}))

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.levels[0].dim

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(cb.size for cb in self.levels)

    @property
    def capacity(self) -> int:
        return int(np.prod(self.sizes, dtype=object))

    def validate_id(self, tokens: Sequence[int]) -> None:
        if len(tokens) != self.depth:
            raise ValueError(f"id {tuple(tokens)} has length {len(tokens)}, expected {self.depth}")
        for lvl, (t, m) in enumerate(zip(tokens, self.sizes), start=1):
            if not 0 <= t < m:
                raise ValueError(f"token {t} out of range for level {lvl} (size {m})")


@dataclass
class HcNode:
    """Tree node. ``count`` is the number of training points routed here."""

    centroid: np.ndarray
    children: list["HcNode"] = field(default_factory=list)
    count: int = 0

    @property
    def arity(self) -> int:
        return len(self.children)


@dataclass
class HcTree:
    root: HcNode
    depth: int
    branching: int
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for path, node in self.iter_paths():
            if len(path) != self.depth:
                raise ValueError(f"leaf at {path} has depth {len(path)}, expected {self.depth}")
            if node.children:
                raise ValueError(f"node at {path} has children below the maximum depth")

    @property
    def dim(self) -> int:
        return self.root.centroid.shape[0]

    def node(self, prefix: Sequence[int]) -> HcNode:
        node = self.root
        for depth, t in enumerate(prefix):
            if not 0 <= t < node.arity:
                raise ValueError(f"prefix {tuple(prefix)} invalid at depth {depth}: node has {node.arity} children")
            node = node.children[t]
        return node

    def iter_paths(self):
        """Yield (path, leaf) for every root-to-leaf path, in DFS order."""
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            if not node.children:
                yield path, node
                continue
            for i in range(node.arity - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))

    def iter_nodes(self):
        """Preorder traversal yielding (path, node)."""
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for i in range(node.arity - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))

    @property
    def capacity(self) -> int:
        return sum(1 for _ in self.iter_paths())

    def validate_id(self, tokens: Sequence[int]) -> None:
        if len(tokens) != self.depth:
            raise ValueError(f"id {tuple(tokens)} has length {len(tokens)}, expected {self.depth}")
        self.node(tokens)


@dataclass(frozen=True)
class LevelCandidates:
    indices: np.ndarray
    distances: np.ndarray
    residuals: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class CandidateSet:
    levels: tuple[LevelCandidates, ...]

    @property
    def kvec(self) -> tuple[int, ...]:
        return tuple(len(lc) for lc in self.levels)

    def check(self, atol: float = ATOL) -> None:
        for lc in self.levels:
            d = lc.distances
            order = np.lexsort((lc.indices, d))
            if not np.array_equal(order, np.arange(len(d))):
                raise AssertionError("candidates not sorted by (distance, index)")
            norms = np.linalg.norm(lc.residuals, axis=1)
            if not np.allclose(norms, d, rtol=0, atol=atol):
                raise AssertionError("residual norms disagree with distances")


class UsedIdRegistry:
    """Ids already granted, plus per-prefix occurrence counts for the suffix baseline."""

    def __init__(self, ids: Iterable[SemanticId] = ()):
        self._used: set[SemanticId] = set()
        self._prefix_counts: Counter = Counter()
        for i in ids:
            self.insert(i)

    def insert(self, id_: SemanticId) -> bool:
        id_ = tuple(id_)
        if id_ in self._used:
            return False
        self._used.add(id_)
        return True

    def __contains__(self, id_) -> bool:
        return tuple(id_) in self._used

    def __len__(self) -> int:
        return len(self._used)

    def __iter__(self):
        return iter(self._used)

    def next_suffix(self, prefix: SemanticId) -> int:
        """Return the occurrence rank of ``prefix`` and bump its counter."""
        n = self._prefix_counts[prefix]
        self._prefix_counts[prefix] = n + 1
        return n

    def prefix_count(self, prefix: SemanticId) -> int:
        return self._prefix_counts[prefix]


def registry_insert(registry: UsedIdRegistry, id_: SemanticId) -> tuple[UsedIdRegistry, bool]:
    return registry, registry.insert(id_)


def capacity_check(n: int, index) -> None:
    """Raise CapacityExceeded unless ``n`` ids fit in ``index``."""
    cap = index.capacity
    if n > cap:
        raise CapacityExceeded(n, cap)
