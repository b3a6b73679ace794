"""Acceptance harness: the distributional and performance gates.

Run with ``pytest tests/test_acceptance.py -s`` to see one verdict line per
check (name, observed, reference, tolerance, status). Rows marked ``info``
report convention-dependent values and never gate.
"""

import pytest

from gwtrees import verify
from gwtrees.engines import GenParams, SamplerStats, generate, sample_stream
from gwtrees.stats import EmpiricalDist, tvd
from gwtrees.store import encode_bits

SEED = 20_25


def _report(verdicts):
    for v in verdicts:
        print(",".join(map(str, v.row())))
    failed = [v.name for v in verdicts if not v.info and not v.passed]
    assert not failed, f"failed checks: {failed}"


def test_c1_c2_c3_exact_lifetimes_and_limit_means():
    # C1: threshold-1 pmf and mean identities, exact, n <= 15, under 5 s.
    # C2: threshold-2 mean identity exact; count-formula mismatches recorded.
    # C3: limit means 4, 17, 69 by exact PGF differentiation.
    _report(verify.suite_lifetime(seed=SEED))


def test_c4_limit_distribution_convergence():
    # n = 2001, 2e5 cycle-lemma samples, TVD <= 0.01 per threshold, < 2 min.
    _report(verify.suite_limit(seed=SEED + 1, n=2001, samples=200_000))


def test_c5_uniformity_two_sampler_paths():
    # n = 9: chi-square over the 14 shapes at p >= 0.001 with 3-seed
    # majority, for the cycle sampler and for parallel-engine rejection at
    # W = 4; cross-sampler TVD <= 0.01 at 1e5 samples each.
    _report(verify.suite_uniform(seed=SEED + 2, n=9, samples=200_000,
                                 workers=4, threshold=2))


def test_c6_peak_load_scaling():
    # BFS peak load over n in {1e3, 1e4, 1e5}, 1e4 samples each:
    # fitted exponent in [0.47, 0.53]; the constant is informational.
    _report(verify.suite_peak(seed=SEED + 3, sizes=(1_000, 10_000, 100_000),
                              samples=10_000))


def test_c7_fully_parallel_time():
    # 1e3 conditioned trees at n = 1001: t=1 time == height exactly,
    # t=2 time <= 2*height, window-violation rate reported; mean-time
    # exponent over {1e3, 1e4, 1e5} within 0.5 +/- 0.03.
    _report(verify.suite_time(seed=SEED + 4, n=1001, count=1_000,
                              sizes=(1_000, 10_000, 100_000),
                              scale_samples=2_000))


def test_c8_parallel_determinism():
    # 10 seeds x workers {1, 2, 8}: byte-identical encodings per seed.
    _report(verify.suite_determinism(seed=SEED + 5, n_seeds=10,
                                     worker_counts=(1, 2, 8)))


def test_c9_relative_performance():
    # iterative strictly faster than naive at a 1e7-node free workload
    # (median of 5); best parallel/hybrid over thresholds 2^6..2^12 vs
    # iterative at ~1e8 nodes, W = 4. The >= 2.0x gate presumes >= 4
    # physical cores and is evaluated only when the machine provides them;
    # the measured speedup is always reported.
    verdicts = []
    rows, med = verify.bench_rows(algos=("naive", "iterative"),
                                  sizes=(10_000_000,), workers=1,
                                  repeats=5, threshold=256, base_seed=SEED)
    naive_rate = med[("naive", 10_000_000, 1, 256)]
    iter_rate = med[("iterative", 10_000_000, 1, 256)]
    verdicts.append(verify.Verdict(
        "perf_iterative_beats_naive_1e7",
        f"iterative {iter_rate:.3g} vs naive {naive_rate:.3g} nodes/s",
        "iterative strictly faster", "median of 5", iter_rate > naive_rate))

    budget = 100_000_000
    _, med_it = verify.bench_rows(algos=("iterative",), sizes=(budget,),
                                  workers=1, repeats=5, threshold=256,
                                  base_seed=SEED)
    base = med_it[("iterative", budget, 1, 256)]

    def sweep(workers):
        best = (0.0, None, None)
        for expo in range(6, 13):
            t = 1 << expo
            for algo in ("parallel", "hybrid"):
                _, m = verify.bench_rows(algos=(algo,), sizes=(budget,),
                                         workers=workers, repeats=3,
                                         threshold=t, hybrid_switch=2 * t,
                                         base_seed=SEED)
                rate = m[(algo, budget, workers, t)]
                if rate > best[0]:
                    best = (rate, algo, t)
        return best

    cores = verify.physical_cores()
    rate4, algo4, t4 = sweep(4)
    speedup = rate4 / base
    observed = (f"{speedup:.2f}x ({algo4}, threshold {t4}) on "
                f"{cores} physical cores")
    if cores >= 4:
        verdicts.append(verify.Verdict("perf_parallel_speedup_1e8_w4",
                                       observed, ">= 2.0x over iterative",
                                       "best of threshold sweep",
                                       speedup >= 2.0))
    else:
        verdicts.append(verify.Verdict(
            "perf_parallel_speedup_1e8_w4", observed,
            ">= 2.0x over iterative (gate requires >= 4 physical cores; "
            "this machine cannot satisfy the precondition)",
            "reported, gate not evaluated", True, info=True))
        rate_c, algo_c, t_c = sweep(max(2, cores))
        verdicts.append(verify.Verdict(
            "perf_parallel_speedup_1e8_at_core_count",
            f"{rate_c / base:.2f}x ({algo_c}, threshold {t_c}, "
            f"W={max(2, cores)})",
            "machine-fitted worker count", "informational", True, info=True))
    _report(verdicts)


def test_c10_rng_economy():
    # at most one partially used word per source, across engines and
    # samplers: generator words x 64 - bits consumed <= 64.
    worst = 0
    for algo, kw in (("iterative", {}), ("naive", {}),
                     ("parallel", dict(threshold=64, workers=4)),
                     ("hybrid", dict(threshold=64, hybrid_switch=128,
                                     workers=4))):
        p = GenParams(algo=algo, max_nodes=1 << 20, seed=SEED + 6, **kw)
        for i in range(30):
            p.seed = SEED + 6 + i
            out = generate(p)
            worst = max(worst, out.max_source_waste)
            assert out.words_drawn * 64 - out.bits_consumed >= 0
    st = SamplerStats()
    for _ in sample_stream(GenParams(seed=SEED + 7), 2001, 200, stats=st):
        pass
    for _ in sample_stream(GenParams(algo="parallel", threshold=2, workers=4,
                                     seed=SEED + 8), 9, 2_000,
                           method="rejection", stats=st):
        pass
    worst = max(worst, st.max_source_waste)
    v = verify.Verdict("rng_economy_all_paths", f"max waste {worst} bits",
                       "<= 64 bits per source", "engines + samplers",
                       worst <= 64)
    _report([v])


def test_engines_pairwise_distributional_equality():
    # conditioned outputs of all four engines agree pairwise: TVD <= 0.01
    # at 1e5 rejection samples each, n = 9
    n, samples = 9, 100_000
    dists = {}
    for algo, kw in (("naive", {}), ("iterative", {}),
                     ("parallel", dict(threshold=2, workers=4)),
                     ("hybrid", dict(threshold=2, hybrid_switch=4, workers=4))):
        p = GenParams(algo=algo, seed=SEED + 9, **kw)
        d = EmpiricalDist()
        for t in sample_stream(p, n, samples, method="rejection"):
            d.add(encode_bits(t))
        dists[algo] = d
    names = list(dists)
    verdicts = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ref = {k: v / dists[b].total for k, v in dists[b].counts.items()}
            d = tvd(dists[a], ref)
            verdicts.append(verify.Verdict(
                f"engine_equality_tvd_{a}_vs_{b}", f"{d:.4f}", "<= 0.01",
                f"{samples} samples each", d <= 0.01))
    _report(verdicts)
