"""Buffered random bits with deterministic, splittable lineage.

A :class:`BitSource` consumes one generator word per ``WORD_WIDTH`` bits
(lowest-order bit first), so at most one partially used word is ever wasted.
Splitting derives a child stream by hashing the lineage, which makes the
output of parallel runs independent of scheduling.

Each source is exclusively owned by one task at a time. The engine kernels
keep source state in 128-byte padded records (see :func:`aligned_state`) so
that sources used by different workers never share a cache line.
"""

import numpy as np

from .prng import MASK64, child_key, lineage_key, seed_state, xoshiro_next

WORD_WIDTH = 64

# uint64 slots of a kernel-side source state record
S0, S1, S2, S3 = 0, 1, 2, 3
BUF, BITS_LEFT, KEY, SPLITS = 4, 5, 6, 7
BITS_CONSUMED, WORDS_DRAWN = 8, 9
STATE_WORDS = 16  # 128 bytes


def aligned_state(n_records: int = 1) -> np.ndarray:
    """Allocate ``n_records`` source-state records, each 128-byte aligned.

    Returns a (n_records, STATE_WORDS) uint64 view whose rows never share a
    cache-line-sized region (false-sharing avoidance).
    """
    raw = np.zeros(n_records * STATE_WORDS + STATE_WORDS, dtype=np.uint64)
    shift = (-raw.ctypes.data) % 128 // 8
    return raw[shift:shift + n_records * STATE_WORDS].reshape(n_records, STATE_WORDS)


class BitSource:
    """Stream of unbiased random bits, a pure function of its lineage."""

    __slots__ = ("master_seed", "split_path", "key", "_s", "buffer",
                 "bits_remaining", "bits_consumed", "words_drawn",
                 "_next_child", "_used_children")

    def __init__(self, master_seed: int, split_path=()):
        self.master_seed = master_seed & MASK64
        self.split_path = tuple(split_path)
        self.key = lineage_key(master_seed, self.split_path)
        self._s = seed_state(self.key)
        self.buffer = 0
        self.bits_remaining = 0
        self.bits_consumed = 0
        self.words_drawn = 0
        self._next_child = 0
        self._used_children = set()

    @property
    def lineage(self):
        return (self.master_seed, self.split_path)

    def next_word(self) -> int:
        """Draw one raw generator word (does not touch the bit buffer)."""
        self.words_drawn += 1
        return xoshiro_next(self._s)

    def next_bit(self) -> int:
        if self.bits_remaining == 0:
            self.buffer = self.next_word()
            self.bits_remaining = WORD_WIDTH
        bit = self.buffer & 1
        self.buffer >>= 1
        self.bits_remaining -= 1
        self.bits_consumed += 1
        return bit

    def next_below(self, bound: int) -> int:
        """Exactly uniform integer in [0, bound) by bit rejection.

        Draws ceil(log2(bound)) bits per attempt, least significant first,
        and retries while the value is >= bound.
        """
        if bound < 1:
            raise ValueError(f"bound must be >= 1, got {bound}")
        if bound == 1:
            return 0
        nbits = (bound - 1).bit_length()
        while True:
            value = 0
            for i in range(nbits):
                value |= self.next_bit() << i
            if value < bound:
                return value

    def split(self, child_index: int | None = None) -> "BitSource":
        """Derive an independent child stream; the parent is unaffected."""
        if child_index is None:
            child_index = self._next_child
        elif child_index in self._used_children:
            raise ValueError(f"child index {child_index} already used")
        self._used_children.add(child_index)
        self._next_child = max(self._next_child, child_index + 1)
        return BitSource(self.master_seed, self.split_path + (child_index,))

    @property
    def waste(self) -> int:
        """Drawn-but-unconsumed bits; bounded by WORD_WIDTH by construction."""
        return self.words_drawn * WORD_WIDTH - self.bits_consumed

    def state_record(self) -> np.ndarray:
        """Export the current state as one kernel-compatible padded record."""
        rec = aligned_state(1)[0]
        rec[S0:S3 + 1] = self._s
        rec[BUF] = self.buffer
        rec[BITS_LEFT] = self.bits_remaining
        rec[KEY] = self.key
        rec[SPLITS] = self._next_child
        rec[BITS_CONSUMED] = self.bits_consumed
        rec[WORDS_DRAWN] = self.words_drawn
        return rec


def fill_state_record(rec: np.ndarray, key: int) -> None:
    """Initialize a kernel state record for a fresh source with lineage ``key``."""
    rec[:] = 0
    rec[S0:S3 + 1] = seed_state(key)
    rec[KEY] = key


def record_child_key(rec: np.ndarray) -> int:
    """Next child key for a kernel state record, advancing its split counter."""
    index = int(rec[SPLITS])
    rec[SPLITS] += 1
    return child_key(int(rec[KEY]), index)
