"""Verification suites: distributional theorems checked at desk scale.

Each suite returns :class:`Verdict` rows designed for machine-readable
output (the CLI prints them as CSV) and for direct assertion by the test
suite. Informational rows report values the underlying theory leaves
convention-dependent (constants, violation rates, formula mismatches);
they never gate.
"""

import math
import os
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import exact, replay, stats
from .engines import EngineRuntime, GenParams, SamplerStats, generate, sample_stream
from .prng import mix64
from .store import encode_bits, height_nodes

SQRT_PI = math.sqrt(math.pi)


@dataclass
class Verdict:
    name: str
    observed: str
    reference: str
    tolerance: str
    passed: bool
    info: bool = False  # reported, not gated

    def row(self):
        status = "info" if self.info else ("pass" if self.passed else "FAIL")
        return (self.name, self.observed, self.reference, self.tolerance, status)


def all_passed(verdicts) -> bool:
    return all(v.passed for v in verdicts if not v.info)


def _seeds(seed, count):
    return [mix64(seed + 0x5EED + i) for i in range(count)]


# ---------------------------------------------------------------------------
# lifetime: exact finite-n identities and limit means


def suite_lifetime(seed=0, n_max=15) -> list:
    """Enumeration vs closed forms for both thresholds, plus limit means."""
    out = []
    t0 = time.time()
    pmf_ok = True
    mean1_ok = True
    for n in range(1, n_max + 1, 2):
        pmf = exact.exact_pmf_lifetime(n, 1)
        if pmf.total() != 1:
            pmf_ok = False
        if n >= 3:
            closed = {k: exact.finite_pmf_closed(n, k) for k in range(1, n + 1)}
            closed = {k: p for k, p in closed.items() if p}
            if closed != pmf.entries:
                pmf_ok = False
        if exact.mean_lifetime_exact(n, 1) != pmf.mean():
            mean1_ok = False
    elapsed = time.time() - t0
    out.append(Verdict("lifetime_t1_pmf_closed_equals_bruteforce",
                       "exact match" if pmf_ok else "mismatch",
                       f"all odd n <= {n_max}", "rational equality", pmf_ok))
    out.append(Verdict("lifetime_t1_mean_4n_over_n+3",
                       "exact match" if mean1_ok else "mismatch",
                       f"all odd n <= {n_max}", "rational equality", mean1_ok))
    out.append(Verdict("lifetime_t1_runtime", f"{elapsed:.2f}s", "< 5 s",
                       "wall clock", elapsed < 5.0))

    mean2_ok = True
    mismatches = []
    for n in range(1, n_max + 1, 2):
        pmf = exact.exact_pmf_lifetime(n, 2)
        if exact.mean_lifetime_exact(n, 2) != pmf.mean():
            mean2_ok = False
        if n >= 3:
            counts = exact.lifetime_counts(n, 2)
            for k in range(1, n + 1):
                formula = exact.tnk_closed(n, k, 2)
                if formula != counts.get(k, 0):
                    mismatches.append((n, k, formula, counts.get(k, 0)))
    out.append(Verdict("lifetime_t2_mean_formula",
                       "exact match" if mean2_ok else "mismatch",
                       f"(17n^2-8n+15)/(n^2+8n+15), odd n <= {n_max}",
                       "rational equality", mean2_ok))
    out.append(Verdict("lifetime_t2_count_formula_mismatches",
                       f"{len(mismatches)} at " +
                       ";".join(f"(n={n} k={k} formula={f} brute={b})"
                                for n, k, f, b in mismatches[:4]),
                       "suspected transcription issue; brute force authoritative",
                       "recorded only", True, info=True))

    for t, ref in ((1, 4), (2, 17), (4, 69)):
        got = exact.limit_mean(t)
        out.append(Verdict(f"limit_mean_t{t}", str(got), str(ref),
                           "rational equality", got == Fraction(ref)))
    return out


# ---------------------------------------------------------------------------
# uniformity of the conditioned samplers


def _shape_counts(params, n, count, method):
    counts = {}
    for tree in sample_stream(params, n, count, method=method):
        enc = encode_bits(tree)
        counts[enc] = counts.get(enc, 0) + 1
    return counts


def suite_uniform(seed=0, n=9, samples=200_000, workers=4, threshold=2) -> list:
    """Chi-square uniformity over all shapes, 3-seed majority, both samplers."""
    out = []
    n_shapes = exact.catalan((n - 1) // 2)
    cycle_counts = []
    reject_counts = []
    for s in _seeds(seed, 3):
        pc = GenParams(seed=s)
        cycle_counts.append(_shape_counts(pc, n, samples, "cycle_lemma"))
        pr = GenParams(algo="parallel", threshold=threshold, workers=workers, seed=s)
        reject_counts.append(_shape_counts(pr, n, samples, "rejection"))
    for label, per_seed in (("cycle", cycle_counts), ("rejection_parallel", reject_counts)):
        pvals = []
        for counts in per_seed:
            cells = list(counts.values()) + [0] * (n_shapes - len(counts))
            _, p = stats.chi_square_uniform(cells)
            pvals.append(p)
        good = sum(p >= 0.001 for p in pvals)
        out.append(Verdict(f"uniform_chi2_{label}_n{n}",
                           "p=" + "/".join(f"{p:.4f}" for p in pvals),
                           "p >= 0.001", "majority of 3 seeds", good >= 2))
        shapes_seen = len(set().union(*[set(c) for c in per_seed]))
        out.append(Verdict(f"uniform_shapes_seen_{label}", str(shapes_seen),
                           str(n_shapes), "all shapes", shapes_seen == n_shapes))
    half = min(100_000, samples)
    s0 = _seeds(seed, 1)[0]
    emp = stats.EmpiricalDist()
    for enc, c in _shape_counts(GenParams(seed=mix64(s0 + 1)), n, half,
                                "cycle_lemma").items():
        emp.add(enc, c)
    rc = _shape_counts(GenParams(algo="parallel", threshold=threshold,
                                 workers=workers, seed=mix64(s0 + 2)),
                       n, half, "rejection")
    ref = {enc: Fraction(c, half) for enc, c in rc.items()}
    d = stats.tvd(emp, ref)
    out.append(Verdict(f"uniform_cross_sampler_tvd_n{n}", f"{d:.4f}", "<= 0.01",
                       f"{half} samples each", d <= 0.01))
    return out


# ---------------------------------------------------------------------------
# convergence to the limit lifetime laws


def suite_limit(seed=0, n=2001, samples=200_000) -> list:
    """TVD of sampled first-task lifetimes against the limit laws."""
    t0 = time.time()
    emp1 = stats.EmpiricalDist()
    emp2 = stats.EmpiricalDist()
    for tree in sample_stream(GenParams(seed=seed), n, samples):
        emp1.add(replay.mark_lifetime(tree, 1))
        emp2.add(replay.mark_lifetime(tree, 2))
    elapsed = time.time() - t0
    out = []
    for t, emp in ((1, emp1), (2, emp2)):
        ref = exact.limit_pmf(t, 2000)
        d = stats.tvd(emp, ref)
        out.append(Verdict(f"limit_tvd_t{t}_n{n}", f"{d:.4f}", "<= 0.01",
                           f"{samples} cycle-lemma samples", d <= 0.01))
    out.append(Verdict("limit_runtime", f"{elapsed:.1f}s", "< 120 s",
                       "wall clock", elapsed < 120.0))
    return out


# ---------------------------------------------------------------------------
# peak load scaling


def suite_peak(seed=0, sizes=(1_000, 10_000, 100_000), samples=10_000) -> list:
    """BFS peak-load exponent over n, with the constant reported."""
    if len(sizes) < 3:
        raise ValueError("peak suite needs at least 3 sizes")
    t0 = time.time()
    points = []
    consts = []
    for n in sizes:
        n_odd = n if n % 2 else n + 1
        acc = 0
        for tree in sample_stream(GenParams(seed=mix64(seed + n)), n_odd, samples):
            acc += replay.peak_load(tree, "bfs")
        mean = acc / samples
        points.append((n_odd, mean))
        consts.append(mean / math.sqrt(n_odd))
    elapsed = time.time() - t0
    slope = stats.fit_exponent(points)
    out = [Verdict("peak_bfs_exponent", f"{slope:.4f}", "0.5",
                   "in [0.47, 0.53]", 0.47 <= slope <= 0.53)]
    c = consts[-1]
    out.append(Verdict("peak_bfs_constant_over_sqrt_n",
                       f"{c:.4f} (deviation {c - SQRT_PI:+.4f})",
                       f"sqrt(pi) = {SQRT_PI:.4f}",
                       "informational (convention-dependent)", True, info=True))
    out.append(Verdict("peak_runtime", f"{elapsed:.1f}s", "< 300 s",
                       "wall clock", elapsed < 300.0))
    return out


# ---------------------------------------------------------------------------
# fully-parallel time


def suite_time(seed=0, n=1001, count=1_000,
               sizes=(1_000, 10_000, 100_000), scale_samples=2_000) -> list:
    """Schedule identities at fixed n plus the mean-time scaling exponent."""
    out = []
    t1_exact = True
    t2_bounded = True
    outside = 0
    checked = 0
    max_slack = -(1 << 60)
    for tree in sample_stream(GenParams(seed=seed), n, count):
        h = height_nodes(tree)
        if replay.parallel_time(tree, 1) != h:
            t1_exact = False
        det = replay.schedule_details(tree)
        if det.time > 2 * h:
            t2_bounded = False
        outside += det.outside_window
        checked += det.nodes_checked
        max_slack = max(max_slack, det.max_slack)
    out.append(Verdict(f"time_t1_equals_height_n{n}",
                       "exact for all" if t1_exact else "mismatch",
                       f"{count} trees", "exact equality", t1_exact))
    out.append(Verdict(f"time_t2_at_most_2h_n{n}",
                       "holds for all" if t2_bounded else "violated",
                       f"{count} trees", "T2 <= 2*height", t2_bounded))
    out.append(Verdict("time_t2_window_violation_rate",
                       f"{outside / checked:.4f} (max completion - 2*level = {max_slack})",
                       "window {2h-1, 2h}",
                       "informational (schedule convention)", True, info=True))
    pts1 = []
    pts2 = []
    for m in sizes:
        m_odd = m if m % 2 else m + 1
        acc1 = acc2 = 0
        for tree in sample_stream(GenParams(seed=mix64(seed + m)), m_odd, scale_samples):
            acc1 += replay.parallel_time(tree, 1)
            acc2 += replay.parallel_time(tree, 2)
        pts1.append((m_odd, acc1 / scale_samples))
        pts2.append((m_odd, acc2 / scale_samples))
    for t, pts in ((1, pts1), (2, pts2)):
        slope = stats.fit_exponent(pts)
        out.append(Verdict(f"time_t{t}_exponent", f"{slope:.4f}", "0.5",
                           "in [0.47, 0.53]", 0.47 <= slope <= 0.53))
    return out


# ---------------------------------------------------------------------------
# determinism and randomness economy


def suite_determinism(seed=0, n_seeds=10, worker_counts=(1, 2, 8),
                      threshold=4, cap=1 << 17) -> list:
    """Byte-identical encodings across worker counts, jitter invariance,
    and the at-most-one-wasted-word bound for every source."""
    out = []
    identical = True
    max_waste = 0
    sizes = []
    for s in _seeds(seed, n_seeds):
        encs = set()
        for w in worker_counts:
            p = GenParams(algo="parallel", threshold=threshold, workers=w,
                          seed=s, max_nodes=cap)
            o = generate(p)
            encs.add("overflow" if o.overflow else encode_bits(o.tree))
            max_waste = max(max_waste, o.max_source_waste)
            sizes.append(o.nodes_generated)
        if len(encs) != 1:
            identical = False
    out.append(Verdict("determinism_across_workers",
                       "identical" if identical else "DIVERGED",
                       f"{n_seeds} seeds x workers {worker_counts}",
                       "byte-identical encodings", identical))

    rng = np.random.default_rng(seed)
    jitter_ok = True
    base = None
    for trial in range(3):
        p = GenParams(algo="parallel", threshold=2, workers=4,
                      seed=mix64(seed + 77), max_nodes=cap)
        delay = (lambda: time.sleep(rng.random() * 1e-4)) if trial else None
        o = generate(p, task_delay=delay)
        enc = "overflow" if o.overflow else encode_bits(o.tree)
        max_waste = max(max_waste, o.max_source_waste)
        if base is None:
            base = enc
        elif enc != base:
            jitter_ok = False
    out.append(Verdict("determinism_under_jitter",
                       "identical" if jitter_ok else "DIVERGED",
                       "randomized task-start delays", "byte-identical", jitter_ok))

    sampler_stats = SamplerStats()
    for _ in sample_stream(GenParams(seed=mix64(seed + 5)), 1001, 200,
                           stats=sampler_stats):
        pass
    for _ in sample_stream(GenParams(algo="parallel", threshold=2, workers=4,
                                     seed=mix64(seed + 6)), 9, 500,
                           method="rejection", stats=sampler_stats):
        pass
    max_waste = max(max_waste, sampler_stats.max_source_waste)
    out.append(Verdict("rng_economy_max_waste", f"{max_waste} bits",
                       "<= 64 bits (one partial word per source)",
                       "engines + samplers", max_waste <= 64))
    out.append(Verdict("generated_sizes_odd",
                       "all odd" if all(s % 2 for s in sizes) else "PARITY BROKEN",
                       "size = 2*internal + 1", "exact", all(s % 2 for s in sizes)))
    return out


# ---------------------------------------------------------------------------
# relative performance


def physical_cores() -> int:
    try:
        pairs = set()
        phys = core = None
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.startswith("physical id"):
                    phys = line.split(":")[1].strip()
                elif line.startswith("core id"):
                    core = line.split(":")[1].strip()
                elif not line.strip() and phys is not None and core is not None:
                    pairs.add((phys, core))
                    phys = core = None
        if phys is not None and core is not None:
            pairs.add((phys, core))
        if pairs:
            return len(pairs)
    except OSError:
        pass
    return os.cpu_count() or 1


def budget_generate(params: GenParams, budget: int, runtime: EngineRuntime,
                    base_seed: int) -> tuple:
    """Generate free trees from a fixed seed sequence until ``budget`` nodes.

    Every engine sees the same seed sequence; per-seed trees differ across
    engines (they consume bits differently) but the workload distribution is
    identical, and for naive vs iterative the trees are the same.
    """
    total = 0
    trees = 0
    i = 0
    t0 = time.perf_counter()
    while total < budget:
        params.seed = mix64(base_seed + i)
        i += 1
        out = generate(params, runtime)
        total += out.nodes_generated
        trees += 1
    return total, time.perf_counter() - t0, trees


def bench_rows(algos=("naive", "iterative"), sizes=(10_000_000,), workers=1,
               repeats=5, threshold=256, hybrid_switch=None, base_seed=2024):
    """Benchmark rows: one per repeat plus a median aggregate per combo."""
    rows = []
    medians = {}
    for algo in algos:
        for n in sizes:
            p = GenParams(algo=algo, threshold=threshold, workers=workers,
                          seed=1, max_nodes=n,
                          hybrid_switch=hybrid_switch or max(threshold, 1),
                          slab_capacity=1 << 16)
            rt = EngineRuntime(p)
            budget_generate(p, min(n, 1 << 20), rt, base_seed)  # warm-up
            times = []
            totals = []
            for r in range(repeats):
                total, dt, trees = budget_generate(p, n, rt, base_seed)
                times.append(dt)
                totals.append(total)
                rows.append((algo, n, workers, threshold, str(r),
                             f"{dt:.4f}", f"{total / dt:.0f}"))
            rt.close()
            med = sorted(times)[len(times) // 2]
            total = totals[0]
            rows.append((algo, n, workers, threshold, "median",
                         f"{med:.4f}", f"{total / med:.0f}"))
            medians[(algo, n, workers, threshold)] = total / med
    return rows, medians
