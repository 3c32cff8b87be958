"""Id assignment strategies.

``greedy`` keeps nearest-centroid ids and their conflicts, ``suffix`` appends
an occurrence counter to the greedy id, ``ecm`` ranks every combination of
per-level candidates and ``rrs`` runs a depth-first search with branch-local
residuals. All strategies visit embeddings in ingestion order and share one
registry of granted ids.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .alloc import combine_levels, make_provider
from .core import (
    CandidateSet,
    EmbeddingSet,
    ExhaustedCandidates,
    SemanticId,
    SuffixedId,
    UsedIdRegistry,
    capacity_check,
)

STRATEGIES = ("greedy", "suffix", "ecm", "rrs")
RANKINGS = ("score", "order", "random")


@dataclass(frozen=True)
class RankingStrategy:
    """How ECM orders its candidate combinations.

    ``score`` sorts by the negative sum of residual norms, ``order`` keeps the
    odometer order of candidate ranks, ``random`` shuffles with ``seed``.
    """

    variant: str = "score"
    seed: int | None = None

    def __post_init__(self):
        if self.variant not in RANKINGS:
            raise ValueError(f"unknown ranking {self.variant!r}")
        if self.variant == "random" and self.seed is None:
            raise ValueError("random ranking needs an explicit seed")

    def __str__(self):
        return f"random:{self.seed}" if self.variant == "random" else self.variant


RESIDUAL_SCORE = RankingStrategy("score")
COMBINATION_ORDER = RankingStrategy("order")


@dataclass(frozen=True)
class AssignConfig:
    kvec: tuple[int, ...] | int = 1
    ranking: RankingStrategy = RESIDUAL_SCORE
    on_exhausted: str = "fail"
    strategy: str = "ecm"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.on_exhausted not in ("fail", "widen"):
            raise ValueError(f"on_exhausted must be 'fail' or 'widen', got {self.on_exhausted!r}")
        kv = (self.kvec,) if isinstance(self.kvec, int) else tuple(int(k) for k in self.kvec)
        if any(k < 1 for k in kv):
            raise ValueError(f"kvec entries must be >= 1, got {kv}")
        object.__setattr__(self, "kvec", kv)

    def resolve_kvec(self, depth: int, max_k: Sequence[int]) -> tuple[int, ...]:
        kv = self.kvec * depth if len(self.kvec) == 1 else self.kvec
        if len(kv) != depth:
            raise ValueError(f"kvec {kv} has {len(kv)} entries for {depth} levels")
        for l, (k, m) in enumerate(zip(kv, max_k), start=1):
            if k > m:
                raise ValueError(f"k={k} at level {l} exceeds codebook size {m}")
        return kv

    def describe(self) -> dict:
        return dict(strategy=self.strategy, kvec=",".join(map(str, self.kvec)),
                    ranking=str(self.ranking), on_exhausted=self.on_exhausted)


@dataclass
class AssignReport:
    strategy: str
    keys: tuple[str, ...]
    ids: dict = field(default_factory=dict)
    ranks: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    widened: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    duration: float = 0.0
    config: dict = field(default_factory=dict)

    def id_list(self) -> list:
        return [self.ids[k] for k in self.keys if k in self.ids]

    def is_injective(self) -> bool:
        vals = self.id_list()
        return len(set(vals)) == len(vals)

    def semantic_ids(self) -> dict[str, SemanticId]:
        """Ids with any conflict suffix stripped."""
        return {k: (v.prefix if isinstance(v, SuffixedId) else v) for k, v in self.ids.items()}


def score_candidate(norms: Iterable[float]) -> float:
    """Negative sum of per-level residual norms; higher is better."""
    return -sum(float(n) for n in norms)


def _scores(dists: np.ndarray) -> np.ndarray:
    # left-to-right, same association as score_candidate
    s = dists[:, 0].copy()
    for l in range(1, dists.shape[1]):
        s = s + dists[:, l]
    return -s


def order_candidates(dists: np.ndarray, ranking: RankingStrategy, item: int = 0) -> np.ndarray:
    """Visiting order over candidates given in odometer (rank-lexicographic) order."""
    p = dists.shape[0]
    if ranking.variant == "score":
        return np.argsort(-_scores(dists), kind="stable")
    if ranking.variant == "order":
        return np.arange(p)
    return np.random.default_rng([ranking.seed, item]).permutation(p)


def enumerate_ecm_candidates(cands: CandidateSet, ranking: RankingStrategy = RESIDUAL_SCORE,
                             item: int = 0) -> list[tuple[SemanticId, float]]:
    """Every combination of per-level candidates with its score, in visiting order."""
    _, tokens, dists = combine_levels(cands)
    scores = _scores(dists)
    order = order_candidates(dists, ranking, item)
    return [(tuple(tokens[p].tolist()), float(scores[p])) for p in order]


def seed_registry(prior: Iterable) -> UsedIdRegistry:
    """Registry pre-filled with ids granted by an earlier run."""
    reg = UsedIdRegistry()
    for v in prior:
        if isinstance(v, SuffixedId):
            reg.insert(v.tokens())
            reg.next_suffix(v.prefix)
        else:
            reg.insert(tuple(v))
    return reg


def _provider(index_or_provider):
    if hasattr(index_or_provider, "greedy_batch") and hasattr(index_or_provider, "expand"):
        return index_or_provider
    return make_provider(index_or_provider)


def _widen(kvec, max_k):
    return tuple(min(2 * k, m) for k, m in zip(kvec, max_k))


def assign_greedy(data: EmbeddingSet, index) -> AssignReport:
    prov = _provider(index)
    t0 = time.perf_counter()
    ids, dists = prov.greedy_batch(data.vectors)
    rep = AssignReport("greedy", data.keys, config=dict(strategy="greedy"))
    zero = (0,) * prov.depth
    for i, key in enumerate(data.keys):
        rep.ids[key] = tuple(ids[i].tolist())
        rep.ranks[key] = zero
        rep.scores[key] = score_candidate(dists[i])
    rep.duration = time.perf_counter() - t0
    return rep


def assign_suffix(data: EmbeddingSet, index, registry: UsedIdRegistry | None = None) -> AssignReport:
    """Greedy id plus its zero-based occurrence rank as a trailing token."""
    prov = _provider(index)
    reg = registry if registry is not None else UsedIdRegistry()
    t0 = time.perf_counter()
    ids, dists = prov.greedy_batch(data.vectors)
    rep = AssignReport("suffix", data.keys, config=dict(strategy="suffix"))
    zero = (0,) * prov.depth
    for i, key in enumerate(data.keys):
        prefix = tuple(ids[i].tolist())
        sid = SuffixedId(prefix, reg.next_suffix(prefix))
        reg.insert(sid.tokens())
        rep.ids[key] = sid
        rep.ranks[key] = zero
        rep.scores[key] = score_candidate(dists[i])
    rep.duration = time.perf_counter() - t0
    return rep


def _grant(rep, reg, key, tokens, ranks, score):
    reg.insert(tokens)
    rep.ids[key] = tokens
    rep.ranks[key] = ranks
    rep.scores[key] = score


def _fail(rep, key, kvec, t0):
    rep.failures.append(key)
    rep.duration = time.perf_counter() - t0
    raise ExhaustedCandidates(key, kvec, rep)


def assign_ecm(data: EmbeddingSet, index, cfg: AssignConfig = AssignConfig(),
               registry: UsedIdRegistry | None = None) -> AssignReport:
    """Exhaustive candidate matching.

    For each embedding, every combination of its per-level top-k candidates is
    ranked and the first one not yet granted is taken.
    """
    prov = _provider(index)
    kvec0 = cfg.resolve_kvec(prov.depth, prov.max_k)
    capacity_check(len(data) + (len(registry) if registry else 0), prov)
    reg = registry if registry is not None else UsedIdRegistry()
    rep = AssignReport("ecm", data.keys, config=dict(cfg.describe(), strategy="ecm"))
    t0 = time.perf_counter()
    X = data.vectors
    gids, gdists = prov.greedy_batch(X)
    # the rank-0 combination leads both score and odometer order
    fast = cfg.ranking.variant != "random"
    zero = (0,) * prov.depth
    for i, key in enumerate(data.keys):
        g = tuple(gids[i].tolist())
        if fast and g not in reg:
            _grant(rep, reg, key, g, zero, score_candidate(gdists[i]))
            continue
        kvec = kvec0
        while True:
            ranks, tokens, dists = prov.ecm_paths(X[i], kvec)
            order = order_candidates(dists, cfg.ranking, i)
            hit = next((p for p in order if tuple(tokens[p].tolist()) not in reg), None)
            if hit is not None:
                _grant(rep, reg, key, tuple(tokens[hit].tolist()), tuple(ranks[hit].tolist()),
                       score_candidate(dists[hit]))
                if kvec != kvec0:
                    rep.widened[key] = kvec
                break
            wider = _widen(kvec, prov.max_k)
            if cfg.on_exhausted == "fail" or wider == kvec:
                _fail(rep, key, kvec, t0)
            kvec = wider
    rep.duration = time.perf_counter() - t0
    return rep


def _dfs(prov, x, kvec, reg, prefix=(), ranks=(), dists=()):
    if len(prefix) == len(kvec):
        return None if prefix in reg else (prefix, ranks, dists)
    idx, dd, nxt = prov.expand(prefix, x, kvec[len(prefix)])
    for r in range(len(idx)):
        found = _dfs(prov, nxt[r], kvec, reg, prefix + (int(idx[r]),), ranks + (r,),
                     dists + (float(dd[r]),))
        if found is not None:
            return found
    return None


def rrs_search(prov, e, kvec, reg):
    """First free leaf of the nearest-first DFS, or None."""
    return _dfs(prov, np.asarray(e, dtype=np.float64), tuple(kvec), reg)


def assign_rrs(data: EmbeddingSet, index, cfg: AssignConfig = AssignConfig(strategy="rrs"),
               registry: UsedIdRegistry | None = None) -> AssignReport:
    """Recursive residual searching.

    Depth-first over the top-k centroids of each level, nearest first, with
    the residual updated along each branch; backtracks on taken ids.
    """
    prov = _provider(index)
    kvec0 = cfg.resolve_kvec(prov.depth, prov.max_k)
    capacity_check(len(data) + (len(registry) if registry else 0), prov)
    reg = registry if registry is not None else UsedIdRegistry()
    rep = AssignReport("rrs", data.keys, config=dict(cfg.describe(), strategy="rrs"))
    t0 = time.perf_counter()
    X = data.vectors
    gids, gdists = prov.greedy_batch(X)
    zero = (0,) * prov.depth
    for i, key in enumerate(data.keys):
        g = tuple(gids[i].tolist())
        # the first leaf of the DFS is the greedy id
        if g not in reg:
            _grant(rep, reg, key, g, zero, score_candidate(gdists[i]))
            continue
        kvec = kvec0
        while True:
            found = rrs_search(prov, X[i], kvec, reg)
            if found is not None:
                tokens, ranks, dists = found
                _grant(rep, reg, key, tokens, ranks, score_candidate(dists))
                if kvec != kvec0:
                    rep.widened[key] = kvec
                break
            wider = _widen(kvec, prov.max_k)
            if cfg.on_exhausted == "fail" or wider == kvec:
                _fail(rep, key, kvec, t0)
            kvec = wider
    rep.duration = time.perf_counter() - t0
    return rep


def assign(data: EmbeddingSet, index, cfg: AssignConfig,
           registry: UsedIdRegistry | None = None) -> AssignReport:
    if cfg.strategy == "greedy":
        return assign_greedy(data, index)
    if cfg.strategy == "suffix":
        return assign_suffix(data, index, registry)
    if cfg.strategy == "ecm":
        return assign_ecm(data, index, cfg, registry)
    return assign_rrs(data, index, cfg, registry)
