"""Command-line entry point: ``semid {gen,train-rq,train-hc,assign,eval,bench}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from . import io
from .assign import AssignConfig, RankingStrategy, assign, assign_greedy, seed_registry
from .core import CapacityExceeded, ExhaustedCandidates, SemIdError
from .metrics import (
    conflict_stats,
    displacement_table,
    distortion_report,
    format_table,
    search_space,
    timing_report,
)
from .quantizer import train_hc, train_rq
from .synth import gen_synthetic

log = logging.getLogger("semid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ASSIGN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kvec(text: str) -> tuple[int, ...]:
    try:
        kv = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --k {text!r}; expected an int or comma list")
    if not kv or min(kv) < 1:
        raise argparse.ArgumentTypeError("--k entries must be >= 1")
    return kv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semid", description="Conflict-free semantic id assignment.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic Gaussian-mixture corpus")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--clusters", type=int, default=64)
    g.add_argument("--spread", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--intrinsic-dim", type=int)
    g.add_argument("--format", choices=("bin", "lines"), default="bin")
    g.add_argument("--out", required=True)

    for name, size_flag in (("train-rq", "--codebook-size"), ("train-hc", "--branching")):
        t = sub.add_parser(name, help=f"train a {'codebook stack' if name == 'train-rq' else 'clustering tree'}")
        t.add_argument("--input", required=True)
        t.add_argument("--out", required=True)
        t.add_argument("--levels", type=int, default=3)
        t.add_argument(size_flag, dest="size", type=int, default=256 if name == "train-rq" else 16)
        t.add_argument("--seed", type=int, default=0)
        t.add_argument("--max-iters", type=int, default=100)
        t.add_argument("--tol", type=float, default=1e-4)
        t.add_argument("--normalize", action="store_true")
        t.add_argument("--encoding", choices=("text", "f32"), default="text")

    a = sub.add_parser("assign", help="assign ids to every embedding")
    a.add_argument("--input", required=True)
    a.add_argument("--index", required=True)
    a.add_argument("--method", choices=("greedy", "suffix", "ecm", "rrs"), default="ecm")
    a.add_argument("--k", type=_kvec, default=(1,))
    a.add_argument("--ranking", choices=("score", "order", "random"), default="score")
    a.add_argument("--ranking-seed", type=int, default=0)
    a.add_argument("--on-exhausted", choices=("fail", "widen"), default="fail")
    a.add_argument("--prior", help="id map whose ids are already taken")
    a.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="conflict, distortion and displacement tables")
    e.add_argument("--input", required=True)
    e.add_argument("--index", required=True)
    e.add_argument("--ids", nargs="+", required=True)
    e.add_argument("--out")

    b = sub.add_parser("bench", help="time training and id generation on a synthetic corpus")
    b.add_argument("--n", type=int, default=10000)
    b.add_argument("--dim", type=int, default=32)
    b.add_argument("--clusters", type=int, default=64)
    b.add_argument("--spread", type=float, default=0.1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--intrinsic-dim", type=int)
    b.add_argument("--levels", type=int, default=3)
    b.add_argument("--codebook-size", type=int, default=256)
    b.add_argument("--max-iters", type=int, default=100)
    b.add_argument("--k", type=_kvec, default=(2,))
    b.add_argument("--on-exhausted", choices=("fail", "widen"), default="widen")
    b.add_argument("--methods", default="greedy,suffix,ecm,rrs")
    b.add_argument("--out")
    return p


def _embeddings_for(path, index):
    data = io.read_embeddings(path)
    if index.config.get("normalize") in (True, "true", "True"):
        data = data.normalized()
    return data


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args):
    data = gen_synthetic(args.n, args.dim, args.clusters, args.spread, args.seed, args.intrinsic_dim)
    io.write_embeddings(args.out, data, args.format)
    log.info("wrote %d embeddings to %s", len(data), args.out)


def cmd_train(args):
    data = io.read_embeddings(args.input)
    train = train_rq if args.cmd == "train-rq" else train_hc
    t0 = time.perf_counter()
    index = train(data, args.levels, args.size, max_iters=args.max_iters, tol=args.tol,
                  seed=args.seed, normalize=args.normalize)
    index.config["train_seconds"] = round(time.perf_counter() - t0, 6)
    io.write_index(args.out, index, args.encoding)


def _config(args) -> AssignConfig:
    ranking = RankingStrategy(args.ranking, args.ranking_seed if args.ranking == "random" else None)
    return AssignConfig(args.k, ranking, args.on_exhausted, args.method)


def cmd_assign(args):
    index = io.read_index(args.index)
    data = _embeddings_for(args.input, index)
    cfg = _config(args)
    registry = None
    if args.prior:
        registry = seed_registry(io.read_idmap(args.prior).ids.values())
    rep = assign(data, index, cfg, registry)
    extra = {"index": args.index, "index_seed": index.config.get("seed"),
             "seconds": f"{rep.duration:.6f}"}
    if args.method == "greedy":
        stats = conflict_stats(rep)
        extra["conflicting"] = stats.conflicting
        if stats.conflicting:
            log.warning("%d embeddings share greedy ids", stats.conflicting)
    io.write_idmap(args.out, rep, extra)


def cmd_eval(args):
    index = io.read_index(args.index)
    data = _embeddings_for(args.input, index)
    greedy = assign_greedy(data, index)
    reports = {}
    for path in args.ids:
        rep = io.read_idmap(path)
        missing = set(data.keys) - set(rep.ids)
        if missing:
            raise io.FormatError(f"{path}: no id for {len(missing)} embeddings, e.g. {sorted(missing)[0]!r}")
        name = rep.strategy
        while name in reports:
            name += "'"
        reports[name] = rep
    parts = ["# conflicts (greedy ids)\n", conflict_stats(greedy).table()]
    dist = distortion_report(data, index, {"greedy": greedy, **reports})
    parts += ["# distortion\n", dist.table()]
    rows = []
    for name, rep in reports.items():
        rows.append((name, rep.strategy, int(rep.is_injective()),
                     conflict_stats(rep).conflicting, search_space(rep, index)))
    parts += ["# id maps\n", format_table(("name", "strategy", "unique", "conflicting", "search_space"), rows)]
    parts.append("# rank displacement\n")
    for rep in reports.values():
        if rep.ranks:
            parts.append(displacement_table(rep))
    _emit("".join(parts), args.out)


def cmd_bench(args):
    phases = {}
    t0 = time.perf_counter()
    data = gen_synthetic(args.n, args.dim, args.clusters, args.spread, args.seed, args.intrinsic_dim)
    phases["generate_corpus"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    index = train_rq(data, args.levels, args.codebook_size, max_iters=args.max_iters, seed=args.seed)
    phases["train"] = time.perf_counter() - t0
    for method in args.methods.split(","):
        cfg = AssignConfig(args.k, on_exhausted=args.on_exhausted, strategy=method.strip())
        rep = assign(data, index, cfg)
        phases[f"assign:{cfg.strategy}"] = rep.duration
    _emit(timing_report(phases).table(), args.out)


COMMANDS = {"gen": cmd_gen, "train-rq": cmd_train, "train-hc": cmd_train,
            "assign": cmd_assign, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"semid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.cmd](args)
    except (ExhaustedCandidates, CapacityExceeded) as exc:
        print(f"semid: {exc}", file=sys.stderr)
        return EXIT_ASSIGN
    except (SemIdError, ValueError, OSError) as exc:
        print(f"semid: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
