"""Bit source contract: determinism, buffering, splitting, economy."""

import numpy as np
import pytest

from gwtrees import _kernels as K
from gwtrees import prng
from gwtrees.bits import (BITS_CONSUMED, WORD_WIDTH, WORDS_DRAWN, BitSource,
                          aligned_state, fill_state_record)


def test_same_lineage_same_stream():
    a = BitSource(42)
    b = BitSource(42)
    assert [a.next_bit() for _ in range(10_000)] == [b.next_bit() for _ in range(10_000)]


def test_path_changes_stream_within_256_bits():
    a = BitSource(42)
    b = BitSource(42, (0,))
    assert [a.next_bit() for _ in range(256)] != [b.next_bit() for _ in range(256)]


def test_bit_mean_within_3_sigma():
    src = BitSource(42)
    n = 10**6
    mean = sum(src.next_bit() for _ in range(n)) / n
    assert 0.498 <= mean <= 0.502


def test_bit_mean_4_sigma_other_seeds():
    # uniformity invariant: |mean - 1/2| < 4 / sqrt(4 N)
    n = 10**6
    for seed in (1, 2, 3):
        src = BitSource(seed)
        mean = sum(src.next_bit() for _ in range(n)) / n
        assert abs(mean - 0.5) < 4 / (4 * n) ** 0.5, seed


def test_extraction_order_low_bit_first():
    src = BitSource(0)
    src.buffer = 0b0110
    src.bits_remaining = 4
    assert [src.next_bit() for _ in range(4)] == [0, 1, 1, 0]


def test_one_word_per_word_width_bits():
    src = BitSource(7)
    src.next_bit()
    assert src.words_drawn == 1
    for _ in range(WORD_WIDTH - 1):
        src.next_bit()
    assert src.words_drawn == 1  # buffer exactly drained
    src.next_bit()
    assert src.words_drawn == 2


def test_longest_run_bounded():
    # P(a >= 60 run in 1e6 fair bits) < 1e-11
    src = BitSource(42)
    longest = run = 0
    prev = None
    for _ in range(10**6):
        b = src.next_bit()
        run = run + 1 if b == prev else 1
        prev = b
        longest = max(longest, run)
    assert longest <= 60


def test_next_below_degenerate_and_single_bit():
    src = BitSource(5)
    assert src.next_below(1) == 0
    assert src.bits_consumed == 0
    twin = BitSource(5)
    for _ in range(100):
        assert src.next_below(2) == twin.next_bit()


def test_next_below_uniform_three():
    src = BitSource(11)
    n = 300_000
    counts = [0, 0, 0]
    for _ in range(n):
        counts[src.next_below(3)] += 1
    for c in counts:
        assert 0.330 <= c / n <= 0.337


def test_next_below_rejects_bad_bound():
    with pytest.raises(ValueError):
        BitSource(1).next_below(0)


def test_split_streams_differ_and_parent_unaffected():
    s = BitSource(9)
    before = [s.next_bit() for _ in range(128)]
    c0 = s.split(0)
    c1 = s.split(1)
    assert [c0.next_bit() for _ in range(256)] != [c1.next_bit() for _ in range(256)]
    after = [s.next_bit() for _ in range(128)]
    fresh = BitSource(9)
    assert before + after == [fresh.next_bit() for _ in range(256)]


def test_split_deterministic_across_equal_lineages():
    a = BitSource(9, (3,)).split(0)
    b = BitSource(9, (3,)).split(0)
    assert [a.next_bit() for _ in range(500)] == [b.next_bit() for _ in range(500)]


def test_split_rejects_reused_index():
    s = BitSource(1)
    s.split(4)
    with pytest.raises(ValueError):
        s.split(4)


def test_waste_bounded_by_one_word():
    src = BitSource(3)
    for k in range(1, 2000):
        src.next_below(k % 7 + 1)
        assert 0 <= src.waste <= WORD_WIDTH


def test_kernel_twin_words_bits_and_bounds():
    # the compiled generator must be bit-exact with the Python one
    for seed, path in ((42, ()), (0, (1, 2, 3)), (2**63, (17,))):
        src = BitSource(seed, path)
        rec = aligned_state(1)[0]
        fill_state_record(rec, src.key)
        kb = [int(K.next_bit(rec)) for _ in range(1000)]
        pb = [src.next_bit() for _ in range(1000)]
        assert kb == pb
        assert int(rec[BITS_CONSUMED]) == src.bits_consumed
        assert int(rec[WORDS_DRAWN]) == src.words_drawn
        for bound in (1, 2, 3, 10, 1000):
            assert int(K.next_below(rec, bound)) == src.next_below(bound)


def test_kernel_twin_child_keys():
    key = prng.lineage_key(1234, (5, 6))
    for i in range(20):
        assert prng.child_key(key, i) == int(K.child_key(np.uint64(key), np.uint64(i)))


def test_state_records_are_padded_and_aligned():
    recs = aligned_state(4)
    assert recs.shape == (4, 16)  # 16 words = 128 bytes per record
    assert recs.ctypes.data % 128 == 0
    # rows are 128 bytes apart: distinct cache-line regions
    assert recs.strides[0] == 128


def test_state_record_export_resumes_stream():
    src = BitSource(77)
    for _ in range(37):
        src.next_bit()
    rec = src.state_record()
    cont = [int(K.next_bit(rec)) for _ in range(200)]
    assert cont == [src.next_bit() for _ in range(200)]
