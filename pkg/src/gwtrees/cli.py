"""Command-line interface: generate, sample, verify, oracle, bench.

All output is line-oriented (preorder bitstrings, DOT text, or CSV with a
header row) so CI can parse and gate on it. Exit codes: 0 success / all
checks passed, 1 verification failure, 2 usage error.
"""

import argparse
import csv
import os
import sys
from fractions import Fraction

from . import exact, verify
from .engines import (ALGOS, RNG_MODES, EngineRuntime, GenParams,
                      generate, sample_stream)
from .errors import InvalidSize
from .store import encode_bits, height_nodes, left_spine, to_dot

SUITES = ("uniform", "lifetime", "peak", "time", "determinism")


def _add_gen_flags(p, with_algo=True):
    if with_algo:
        p.add_argument("--algo", choices=ALGOS, default="iterative")
        p.add_argument("--threshold", type=int, default=64,
                       help="pending-node batch size handed to a new task")
        p.add_argument("--hybrid-switch", type=int, default=None,
                       help="pending nodes before the hybrid engine goes parallel")
        p.add_argument("--max-nodes", type=int, default=1 << 31)
        p.add_argument("--rng-mode", choices=RNG_MODES, default="split_deterministic")
    p.add_argument("--seed", type=int, default=None,
                   help="64-bit master seed (default: OS entropy, echoed in the header)")
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("GW_WORKERS", "1")))
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--format", choices=("bits", "dot", "stats"), default="bits")
    p.add_argument("--out", default="-", help="output file ('-' = stdout)")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="gwtrees",
        description="Uniform random binary trees via critical branching-process "
                    "engines, with exact-combinatorics verification.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run the free (unconditioned) process")
    _add_gen_flags(g)
    g.add_argument("--slab-capacity", type=int, default=1 << 16)

    s = sub.add_parser("sample", help="uniform trees of an exact size")
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--method", choices=("rejection", "cycle"), default="cycle")
    s.add_argument("--algo", choices=ALGOS, default="parallel",
                   help="engine used by the rejection method")
    s.add_argument("--threshold", type=int, default=2)
    _add_gen_flags(s, with_algo=False)

    v = sub.add_parser("verify", help="run a distributional acceptance suite")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--seed", type=int, required=True,
                   help="explicit seed keeps CI runs reproducible")
    v.add_argument("--sizes", type=int, nargs="+", default=None)
    v.add_argument("--size", type=int, default=None)
    v.add_argument("--samples", type=int, default=None)
    v.add_argument("--threshold", type=int, default=2)
    v.add_argument("--workers", type=int,
                   default=int(os.environ.get("GW_WORKERS", "4")))
    v.add_argument("--out", default="-")

    o = sub.add_parser("oracle", help="exact tables: counts, pmf, limit law")
    o.add_argument("what", choices=("tnk", "pmf", "limit"))
    o.add_argument("--size", type=int, default=7)
    o.add_argument("--threshold", type=int, default=1)
    o.add_argument("--kmax", type=int, default=50)
    o.add_argument("--out", default="-")

    b = sub.add_parser("bench", help="relative engine throughput")
    b.add_argument("--algos", nargs="+", choices=ALGOS,
                   default=["naive", "iterative"])
    b.add_argument("--sizes", type=int, nargs="+", default=[1_000_000],
                   help="node budget per run (free generation until reached)")
    b.add_argument("--workers", type=int,
                   default=int(os.environ.get("GW_WORKERS", "1")))
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--threshold", type=int, default=256)
    b.add_argument("--hybrid-switch", type=int, default=None)
    b.add_argument("--seed", type=int, default=2024)
    b.add_argument("--out", default="-")
    return ap


class _Out:
    def __init__(self, path):
        self.path = path
        self.fh = sys.stdout if path == "-" else open(path, "w")

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()


def _emit_trees(args, fh, outcomes):
    """Render (outcome, params) pairs in the chosen format."""
    comment = "//" if args.format == "dot" else "#"
    fh.write(f"{comment} gwtrees seed={args.seed} format={args.format}\n")
    writer = None
    if args.format == "stats":
        writer = csv.writer(fh)
        writer.writerow(["size", "height", "left_spine",
                         "bits_consumed", "tasks_spawned"])
    for out in outcomes:
        if out.overflow:
            fh.write(f"{comment} overflow nodes={out.nodes_generated}\n")
            continue
        if args.format == "bits":
            fh.write(encode_bits(out.tree) + "\n")
        elif args.format == "dot":
            fh.write(to_dot(out.tree))
        else:
            writer.writerow([out.nodes_generated, height_nodes(out.tree),
                             left_spine(out.tree), out.bits_consumed,
                             out.tasks_spawned])


def cmd_generate(args):
    params = GenParams(algo=args.algo, threshold=args.threshold,
                       hybrid_switch=args.hybrid_switch,
                       max_nodes=args.max_nodes, workers=args.workers,
                       seed=args.seed, rng_mode=args.rng_mode,
                       slab_capacity=args.slab_capacity)
    args.seed = params.seed  # echo the entropy seed in the header
    runtime = EngineRuntime(params)

    def outcomes():
        from .prng import mix64
        for i in range(args.count):
            params.seed = mix64(args.seed + i) if args.count > 1 else args.seed
            yield generate(params, runtime)

    try:
        with _Out(args.out) as fh:
            _emit_trees(args, fh, outcomes())
    finally:
        runtime.close()
    return 0


class _SampleShim:
    """Adapts a sampled tree to the emit helper's outcome interface."""

    def __init__(self, tree):
        self.tree = tree
        self.overflow = False
        self.nodes_generated = tree.node_count
        self.bits_consumed = ""
        self.tasks_spawned = ""


def cmd_sample(args):
    if args.size < 1 or args.size % 2 == 0:
        raise InvalidSize(f"size must be a positive odd integer, got {args.size}")
    params = GenParams(algo=args.algo, threshold=args.threshold,
                       workers=args.workers, seed=args.seed)
    args.seed = params.seed
    method = "cycle_lemma" if args.method == "cycle" else "rejection"
    stream = sample_stream(params, args.size, args.count, method=method)
    with _Out(args.out) as fh:
        _emit_trees(args, fh, (_SampleShim(t) for t in stream))
    return 0


def cmd_verify(args):
    if args.suite == "lifetime":
        verdicts = verify.suite_lifetime(seed=args.seed)
    elif args.suite == "uniform":
        verdicts = verify.suite_uniform(seed=args.seed, n=args.size or 9,
                                        samples=args.samples or 200_000,
                                        workers=args.workers,
                                        threshold=args.threshold)
    elif args.suite == "peak":
        sizes = tuple(args.sizes or (1_000, 10_000, 100_000))
        if len(sizes) < 3:
            raise _Usage("peak suite needs at least 3 sizes for the exponent fit")
        verdicts = verify.suite_peak(seed=args.seed, sizes=sizes,
                                     samples=args.samples or 10_000)
    elif args.suite == "time":
        verdicts = verify.suite_time(seed=args.seed, n=args.size or 1001,
                                     count=args.samples or 1_000)
    else:
        verdicts = verify.suite_determinism(seed=args.seed)
    with _Out(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(["name", "observed", "reference", "tolerance", "status"])
        for v in verdicts:
            w.writerow(v.row())
    return 0 if verify.all_passed(verdicts) else 1


def cmd_oracle(args):
    n, t = args.size, args.threshold
    with _Out(args.out) as fh:
        w = csv.writer(fh)
        if args.what == "tnk":
            counts = exact.lifetime_counts(n, t)
            w.writerow(["n", "k", "closed_form", "brute_force", "match"])
            for k in range(1, n + 1):
                closed = exact.tnk_closed(n, k, t) if n >= 3 else ""
                brute = counts.get(k, 0)
                w.writerow([n, k, closed, brute,
                            "yes" if closed == brute else "NO"])
        elif args.what == "pmf":
            pmf = exact.exact_pmf_lifetime(n, t)
            w.writerow(["k", "probability", "float"])
            for k, p in pmf.entries.items():
                w.writerow([k, f"{p.numerator}/{p.denominator}", float(p)])
        else:
            pmf = exact.limit_pmf(t, args.kmax)
            w.writerow(["k", "probability", "float"])
            total = Fraction(0)
            for k, p in pmf.items():
                total += p
                w.writerow([k, f"{p.numerator}/{p.denominator}", float(p)])
            w.writerow(["total", f"{total.numerator}/{total.denominator}",
                        float(total)])
    return 0


def cmd_bench(args):
    rows, medians = verify.bench_rows(
        algos=tuple(args.algos), sizes=tuple(args.sizes), workers=args.workers,
        repeats=args.repeats, threshold=args.threshold,
        hybrid_switch=args.hybrid_switch, base_seed=args.seed)
    with _Out(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(["algo", "nodes", "workers", "threshold", "repeat",
                    "seconds", "nodes_per_second"])
        for row in rows:
            w.writerow(row)
    return 0


class _Usage(Exception):
    pass


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"generate": cmd_generate, "sample": cmd_sample,
               "verify": cmd_verify, "oracle": cmd_oracle,
               "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except (_Usage, InvalidSize, ValueError) as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
