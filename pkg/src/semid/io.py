"""Embedding, index and id-map file formats.

Embedding files come in two flavours:

* ``bin``: ``b"SEMID\\0"``, u32 version, u64 count, u32 dim, then per record a
  u16 key length, the UTF-8 key and ``dim`` float32 values, all little-endian.
* ``lines``: ``key<TAB>v1,v2,...`` per line.

Index files start with ``key value`` header lines ending in ``payload <n>``,
followed by ``n`` bytes holding every centroid (text rows or raw float32).
"""
from __future__ import annotations

import json
import math
import shlex
import struct
import zlib
from pathlib import Path

import numpy as np

from .assign import AssignReport
from .core import (
    CodebookStack,
    EmbeddingSet,
    HcNode,
    HcTree,
    SemIdError,
    SuffixedId,
)

MAGIC = b"SEMID\x00"
VERSION = 1
_HEAD = struct.Struct("<6sIQI")

INDEX_MAGIC = "SEMIDX"
INDEX_VERSION = 1


class FormatError(SemIdError, ValueError):
    pass


class MalformedHeader(FormatError):
    pass


class DimensionMismatch(FormatError):
    pass


class DuplicateKey(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class CorruptIndex(FormatError):
    pass


def write_embeddings(path, data: EmbeddingSet, format: str = "bin") -> None:
    path = Path(path)
    if format == "bin":
        vecs = np.ascontiguousarray(data.vectors, dtype="<f4")
        with path.open("wb") as f:
            f.write(_HEAD.pack(MAGIC, VERSION, len(data), data.dim))
            for key, row in zip(data.keys, vecs):
                kb = key.encode("utf-8")
                if len(kb) > 0xFFFF:
                    raise ValueError(f"key too long ({len(kb)} bytes)")
                f.write(struct.pack("<H", len(kb)))
                f.write(kb)
                f.write(row.tobytes())
    elif format == "lines":
        with path.open("w", encoding="utf-8") as f:
            for key, row in zip(data.keys, data.vectors):
                if "\t" in key or "\n" in key:
                    raise ValueError(f"key {key!r} cannot be stored in lines format")
                f.write(key + "\t" + ",".join(repr(float(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def _read_bin(path: Path) -> EmbeddingSet:
    buf = path.read_bytes()
    if len(buf) < _HEAD.size:
        raise MalformedHeader(f"{path}: file too short for header ({len(buf)} bytes) at offset 0")
    magic, version, count, dim = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version} at offset 6")
    if dim < 1:
        raise MalformedHeader(f"{path}: dim must be >= 1 at offset 18")
    off = _HEAD.size
    keys = []
    seen = set()
    vecs = np.empty((count, dim), dtype=np.float32)
    rec = 4 * dim
    for i in range(count):
        if off + 2 > len(buf):
            raise DimensionMismatch(f"{path}: truncated record {i} at offset {off}")
        (klen,) = struct.unpack_from("<H", buf, off)
        start = off
        off += 2
        if off + klen + rec > len(buf):
            raise DimensionMismatch(f"{path}: record {i} at offset {start} shorter than key + {dim} floats")
        try:
            key = buf[off:off + klen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedHeader(f"{path}: key of record {i} at offset {off} is not UTF-8") from exc
        off += klen
        if key in seen:
            raise DuplicateKey(f"{path}: duplicate key {key!r} at offset {start}")
        seen.add(key)
        row = np.frombuffer(buf, dtype="<f4", count=dim, offset=off)
        if not np.isfinite(row).all():
            raise NonFiniteValue(f"{path}: non-finite value in record {i} at offset {off}")
        vecs[i] = row
        keys.append(key)
        off += rec
    if off != len(buf):
        raise DimensionMismatch(f"{path}: {len(buf) - off} trailing bytes at offset {off} after {count} records")
    return EmbeddingSet(tuple(keys), vecs.astype(np.float64))


def _read_lines(path: Path) -> EmbeddingSet:
    keys, rows, seen = [], [], set()
    dim = None
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            key, sep, values = line.partition("\t")
            if not sep:
                raise MalformedHeader(f"{path}:{lineno}: expected key<TAB>values")
            try:
                row = [float(v) for v in values.split(",")]
            except ValueError as exc:
                raise MalformedHeader(f"{path}:{lineno}: {exc}") from exc
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise DimensionMismatch(f"{path}:{lineno}: {len(row)} values, expected {dim}")
            if not all(math.isfinite(v) for v in row):
                raise NonFiniteValue(f"{path}:{lineno}: non-finite value")
            if key in seen:
                raise DuplicateKey(f"{path}:{lineno}: duplicate key {key!r}")
            seen.add(key)
            keys.append(key)
            rows.append(row)
    if dim is None:
        raise MalformedHeader(f"{path}: no records")
    return EmbeddingSet(tuple(keys), np.array(rows, dtype=np.float64))


def read_embeddings(path, format: str | None = None) -> EmbeddingSet:
    """Read an embedding file; ``format`` is sniffed from the magic when omitted."""
    path = Path(path)
    if format is None:
        with path.open("rb") as f:
            format = "bin" if f.read(len(MAGIC)) == MAGIC else "lines"
    if format == "bin":
        return _read_bin(path)
    if format == "lines":
        return _read_lines(path)
    raise ValueError(f"unknown embedding format {format!r}")


# index files

def _preorder(tree: HcTree):
    return [node for _, node in tree.iter_nodes()]


def write_index(path, index, encoding: str = "text") -> None:
    """Persist a codebook stack or clustering tree.

    ``text`` writes centroids as decimals with 9 significant digits, ``f32``
    as raw little-endian float32.
    """
    if isinstance(index, CodebookStack):
        header = [("kind", "rq"), ("dim", index.dim), ("sizes", " ".join(map(str, index.sizes)))]
        mat = np.vstack([cb.centroids for cb in index.levels])
    elif isinstance(index, HcTree):
        nodes = _preorder(index)
        header = [("kind", "hc"), ("dim", index.dim), ("depth", index.depth),
                  ("branching", index.branching),
                  ("children", " ".join(str(n.arity) for n in nodes)),
                  ("counts", " ".join(str(n.count) for n in nodes))]
        mat = np.array([n.centroid for n in nodes])
    else:
        raise TypeError(f"cannot write {type(index).__name__}")
    if encoding == "text":
        payload = "".join(" ".join(f"{v:.9g}" for v in row) + "\n" for row in mat).encode()
    elif encoding == "f32":
        payload = np.ascontiguousarray(mat, dtype="<f4").tobytes()
    else:
        raise ValueError(f"unknown index encoding {encoding!r}")
    lines = [f"{INDEX_MAGIC} {INDEX_VERSION}", f"encoding {encoding}"]
    lines += [f"{k} {v}" for k, v in header]
    lines.append("config " + json.dumps(index.config, sort_keys=True))
    lines.append(f"crc32 {zlib.crc32(payload)}")
    lines.append(f"payload {len(payload)}")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())
        f.write(payload)


def read_index(path):
    """Load an index written by ``write_index``."""
    buf = Path(path).read_bytes()
    head = {}
    off = 0
    first = True
    while True:
        nl = buf.find(b"\n", off)
        if nl < 0:
            raise CorruptIndex(f"{path}: header not terminated")
        line = buf[off:nl].decode("utf-8", errors="replace")
        off = nl + 1
        key, _, value = line.partition(" ")
        if first:
            if key != INDEX_MAGIC:
                raise CorruptIndex(f"{path}: not an index file")
            if value != str(INDEX_VERSION):
                raise VersionMismatch(f"{path}: index version {value}, expected {INDEX_VERSION}")
            first = False
            continue
        head[key] = value
        if key == "payload":
            break
    try:
        size = int(head["payload"])
        dim = int(head["dim"])
        encoding = head["encoding"]
        crc = int(head["crc32"])
        config = json.loads(head.get("config", "{}"))
    except (KeyError, ValueError) as exc:
        raise CorruptIndex(f"{path}: bad header ({exc})") from exc
    payload = buf[off:]
    if len(payload) != size or zlib.crc32(payload) != crc:
        raise CorruptIndex(f"{path}: payload length or checksum mismatch")
    if encoding == "text":
        rows = [[float(v) for v in ln.split()] for ln in payload.decode().splitlines()]
        mat = np.array(rows, dtype=np.float64).reshape(len(rows), -1 if rows else dim)
    elif encoding == "f32":
        mat = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(-1, dim)
    else:
        raise CorruptIndex(f"{path}: unknown encoding {encoding!r}")
    if mat.shape[1:] != (dim,):
        raise CorruptIndex(f"{path}: centroid rows do not have dimension {dim}")

    kind = head.get("kind")
    if kind == "rq":
        sizes = [int(s) for s in head.get("sizes", "").split()]
        if not sizes:
            raise CorruptIndex(f"{path}: index has no levels")
        if sum(sizes) != len(mat) or min(sizes) < 1:
            raise CorruptIndex(f"{path}: level sizes {sizes} do not match {len(mat)} centroids")
        bounds = np.cumsum([0] + sizes)
        return CodebookStack.from_arrays([mat[a:b] for a, b in zip(bounds[:-1], bounds[1:])], config)
    if kind == "hc":
        arity = [int(s) for s in head["children"].split()]
        counts = [int(s) for s in head.get("counts", "").split()] or [0] * len(arity)
        depth = int(head["depth"])
        if depth < 1:
            raise CorruptIndex(f"{path}: tree depth must be >= 1")
        if len(arity) != len(mat) or len(counts) != len(mat):
            raise CorruptIndex(f"{path}: {len(arity)} nodes declared, {len(mat)} centroids stored")
        it = iter(range(len(mat)))

        def build():
            i = next(it)
            node = HcNode(mat[i].copy(), [], counts[i])
            node.children = [build() for _ in range(arity[i])]
            return node

        try:
            root = build()
            if next(it, None) is not None:
                raise CorruptIndex(f"{path}: trailing tree nodes")
            return HcTree(root, depth, int(head["branching"]), config)
        except (StopIteration, ValueError) as exc:
            raise CorruptIndex(f"{path}: malformed tree ({exc})") from exc
    raise CorruptIndex(f"{path}: unknown index kind {kind!r}")


# id maps

IDMAP_COLUMNS = ("key", "tokens", "suffix", "ranks", "score")


def write_idmap(path, report: AssignReport, extra: dict | None = None) -> None:
    meta = dict(report.config)
    meta.setdefault("strategy", report.strategy)
    meta.update(extra or {})
    with open(path, "w", encoding="utf-8") as f:
        f.write("# " + " ".join(shlex.quote(f"{k}={v}") for k, v in meta.items()) + "\n")
        f.write("\t".join(IDMAP_COLUMNS) + "\n")
        for key in report.keys:
            v = report.ids[key]
            if isinstance(v, SuffixedId):
                toks, suffix = v.prefix, str(v.suffix)
            else:
                toks, suffix = v, ""
            f.write("\t".join((key, " ".join(map(str, toks)), suffix,
                               " ".join(map(str, report.ranks.get(key, ()))),
                               repr(float(report.scores.get(key, 0.0))))) + "\n")


def read_idmap(path) -> AssignReport:
    meta = {}
    keys, ids, ranks, scores = [], {}, {}, {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if lineno == 1 and line.startswith("#"):
                for item in shlex.split(line[1:]):
                    k, _, v = item.partition("=")
                    meta[k] = v
                continue
            if line.startswith("key\t") or not line:
                continue
            cols = line.split("\t")
            if len(cols) != len(IDMAP_COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected {len(IDMAP_COLUMNS)} columns, got {len(cols)}")
            key, toks, suffix, rk, score = cols
            if key in ids:
                raise DuplicateKey(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                tid = tuple(int(t) for t in toks.split())
                ids[key] = SuffixedId(tid, int(suffix)) if suffix else tid
                ranks[key] = tuple(int(r) for r in rk.split())
                scores[key] = float(score)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            keys.append(key)
    return AssignReport(meta.get("strategy", "unknown"), tuple(keys), ids, ranks, scores, config=meta)
