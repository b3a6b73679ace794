"""Size-conditioned samplers: exactness, determinism, uniformity smoke."""

import pytest

from gwtrees import reference as ref
from gwtrees.bits import BitSource
from gwtrees.engines import (GenParams, SamplerStats, sample_conditioned,
                             sample_stream)
from gwtrees.errors import InvalidSize, RejectionBudgetExceeded
from gwtrees.stats import chi_square_uniform
from gwtrees.store import encode_bits


def test_size_one_always_the_leaf():
    assert encode_bits(sample_conditioned(GenParams(seed=1), 1)) == "0"
    got = [encode_bits(t) for t in sample_stream(GenParams(seed=2), 1, 5)]
    assert got == ["0"] * 5


def test_even_size_rejected():
    with pytest.raises(InvalidSize):
        sample_conditioned(GenParams(seed=1), 4)


def test_cycle_samples_have_exact_size_and_valid_words():
    for n in (3, 9, 101, 2001):
        for t in sample_stream(GenParams(seed=5), n, 20):
            enc = encode_bits(t)
            assert len(enc) == n
            assert enc.count("0") == enc.count("1") + 1


def test_cycle_stream_deterministic():
    a = [encode_bits(t) for t in sample_stream(GenParams(seed=9), 21, 200)]
    b = [encode_bits(t) for t in sample_stream(GenParams(seed=9), 21, 200)]
    assert a == b
    c = [encode_bits(t) for t in sample_stream(GenParams(seed=10), 21, 200)]
    assert a != c


def test_cycle_rotation_matches_direct_scan():
    # the sampler must pick the rotation after the first prefix-sum minimum
    import numpy as np
    from gwtrees import _kernels as K
    from gwtrees.bits import aligned_state
    rec = aligned_state(1)[0]
    K.fill_state(rec, np.uint64(123))
    n = 25
    word = np.empty(n, dtype=np.uint8)
    rotated = np.empty(n, dtype=np.uint8)
    for _ in range(200):
        cut = int(K.cycle_sample(rec, word, rotated))
        sums = np.cumsum(word.astype(np.int64) * 2 - 1)
        expect = int(np.argmin(sums)) + 1
        assert cut % n == expect % n
        assert np.array_equal(rotated, np.roll(word, -cut))


def test_rejection_matches_reference_per_engine():
    n, seed = 9, 77
    for algo, kw, engine in (
            ("iterative", {}, lambda s: ref.iterative(s, cap=n)),
            ("naive", {}, lambda s: ref.naive(s, cap=n)),
            ("parallel", dict(threshold=2, workers=3),
             lambda s: ref.parallel(s, cap=n, threshold=2)),
            ("hybrid", dict(threshold=2, hybrid_switch=4, workers=3),
             lambda s: ref.hybrid(s, cap=n, threshold=2, switch_size=4))):
        expected = []
        for a in range(1500):
            r = engine(BitSource(seed, (a,)))
            if not r.overflow and r.nodes_generated == n:
                expected.append(encode_bits(r.tree))
        p = GenParams(algo=algo, seed=seed, **kw)
        got = [encode_bits(t)
               for t in sample_stream(p, n, len(expected), method="rejection")]
        assert got == expected, algo


def test_rejection_parallel_deterministic_across_worker_counts():
    runs = []
    for w in (1, 2, 5):
        p = GenParams(algo="parallel", threshold=2, workers=w, seed=31)
        runs.append([encode_bits(t)
                     for t in sample_stream(p, 9, 300, method="rejection")])
    assert runs[0] == runs[1] == runs[2]


def test_rejection_budget_raises():
    p = GenParams(algo="iterative", seed=1, rejection_budget=4)
    with pytest.raises(RejectionBudgetExceeded):
        list(sample_stream(p, 1001, 3, method="rejection"))


def test_uniformity_smoke_n5():
    # two shapes at n=5: a fair coin essentially
    counts = {}
    for t in sample_stream(GenParams(seed=4), 5, 20_000):
        counts[encode_bits(t)] = counts.get(encode_bits(t), 0) + 1
    assert set(counts) == {"11000", "10100"}
    _, p = chi_square_uniform(counts.values())
    assert p > 1e-4


def test_uniformity_smoke_n9_both_methods():
    for method, params in (("cycle_lemma", GenParams(seed=6)),
                           ("rejection", GenParams(algo="parallel", threshold=2,
                                                   workers=2, seed=6))):
        counts = {}
        for t in sample_stream(params, 9, 42_000, method=method):
            e = encode_bits(t)
            counts[e] = counts.get(e, 0) + 1
        assert len(counts) == 14
        _, p = chi_square_uniform(counts.values())
        assert p > 1e-4, method


def test_sampler_stats_waste_bound():
    stats = SamplerStats()
    for _ in sample_stream(GenParams(seed=8), 501, 500, stats=stats):
        pass
    p = GenParams(algo="parallel", threshold=1, workers=2, seed=8)
    for _ in sample_stream(p, 9, 500, method="rejection", stats=stats):
        pass
    assert 0 <= stats.max_source_waste <= 64
    assert stats.bits_consumed > 0 and stats.words_drawn > 0
