"""Conflict, distortion, rank-displacement and timing measurements.

Reports render as tab-separated tables so runs can be diffed.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .assign import AssignReport, assign_greedy
from .core import CodebookStack, EmbeddingSet, HcTree, SuffixedId
from .quantizer import reconstruct_many


def format_table(header, rows) -> str:
    lines = ["\t".join(map(str, header))]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


@dataclass(frozen=True)
class ConflictStats:
    n: int
    conflicting: int
    groups: int
    largest: int = 0

    @property
    def proportion(self) -> float:
        return self.conflicting / self.n if self.n else 0.0

    def table(self) -> str:
        return format_table(("n", "conflicting", "groups", "largest_group", "proportion"),
                            [(self.n, self.conflicting, self.groups, self.largest,
                              f"{self.proportion:.6f}")])


def conflict_stats(report: AssignReport | Mapping) -> ConflictStats:
    """Group ids by equality; embeddings in groups of two or more conflict."""
    ids = report.semantic_ids() if isinstance(report, AssignReport) else dict(report)
    counts = Counter(ids.values())
    shared = [c for c in counts.values() if c > 1]
    return ConflictStats(len(ids), sum(shared), len(shared), max(counts.values(), default=0))


def id_errors(data: EmbeddingSet, index, report: AssignReport) -> np.ndarray:
    """Per-embedding distortion in ingestion order.

    Codebook stacks use the reconstruction error; trees use the summed
    distance from the embedding to every node on its path.
    """
    ids = report.semantic_ids()
    tok = np.array([ids[k] for k in data.keys], dtype=np.int64).reshape(len(data), index.depth)
    X = data.vectors
    if isinstance(index, CodebookStack):
        return np.linalg.norm(X - reconstruct_many(tok, index), axis=1)
    if isinstance(index, HcTree):
        out = np.zeros(len(data))
        for i in range(len(data)):
            node = index.root
            for t in tok[i]:
                node = node.children[t]
                out[i] += np.linalg.norm(X[i] - node.centroid)
        return out
    raise TypeError(f"unsupported index {type(index).__name__}")


@dataclass
class DistortionReport:
    mean: dict[str, float] = field(default_factory=dict)
    total: dict[str, float] = field(default_factory=dict)
    overhead: dict[str, float] = field(default_factory=dict)
    per_item: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def table(self) -> str:
        rows = [(name, f"{self.mean[name]:.6f}", f"{self.total[name]:.6f}",
                 f"{self.overhead[name]:.3f}") for name in self.mean]
        return format_table(("strategy", "mean_distortion", "total_distortion", "overhead_vs_greedy"), rows)


def distortion_report(data: EmbeddingSet, index, reports: Mapping[str, AssignReport],
                      baseline: np.ndarray | None = None) -> DistortionReport:
    """Distortion per strategy and its ratio to the greedy distortion.

    ``baseline`` is the greedy per-item error; computed from the index when
    not given.
    """
    if baseline is None:
        greedy = next((r for r in reports.values() if r.strategy == "greedy"), None)
        baseline = id_errors(data, index, greedy or assign_greedy(data, index))
    out = DistortionReport()
    gmean = float(baseline.mean()) if len(baseline) else 0.0
    for name, rep in reports.items():
        err = id_errors(data, index, rep)
        out.per_item[name] = err
        out.total[name] = float(err.sum())
        out.mean[name] = float(err.mean()) if len(err) else 0.0
        if gmean > 0:
            out.overhead[name] = out.mean[name] / gmean
        else:
            out.overhead[name] = 1.0 if out.mean[name] == 0 else float("inf")
    return out


def rank_displacement(report: AssignReport) -> list[Counter]:
    """Per level, how often the 1st, 2nd, ... nearest candidate was chosen.

    Counter keys are 1-based ranks.
    """
    ranks = [report.ranks[k] for k in report.keys if k in report.ranks]
    depth = len(ranks[0]) if ranks else 0
    return [Counter(r[l] + 1 for r in ranks) for l in range(depth)]


def displacement_table(report: AssignReport) -> str:
    hist = rank_displacement(report)
    rows = []
    for l, c in enumerate(hist, start=1):
        for rank in sorted(c):
            rows.append((report.strategy, l, rank, c[rank]))
    return format_table(("strategy", "level", "rank", "count"), rows)


def search_space(report: AssignReport, index) -> int:
    """Size of the token space the ids live in.

    Purely semantic ids span the index capacity; suffixed ids multiply it by
    the number of suffix values in use.
    """
    cap = index.capacity
    if report.strategy == "suffix":
        top = max((v.suffix for v in report.ids.values() if isinstance(v, SuffixedId)), default=0)
        return cap * (top + 1)
    return cap


@dataclass
class TimingReport:
    phases: dict[str, float]

    @property
    def total(self) -> float:
        return float(sum(self.phases.values()))

    def table(self) -> str:
        rows = [(name, f"{sec:.6f}") for name, sec in self.phases.items()]
        rows.append(("total", f"{self.total:.6f}"))
        return format_table(("phase", "seconds"), rows)


def timing_report(durations: Mapping[str, float]) -> TimingReport:
    """Wall-clock seconds per phase, e.g. ``train`` and ``assign:rrs``."""
    return TimingReport({str(k): float(v) for k, v in durations.items()})
