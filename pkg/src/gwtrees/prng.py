"""Word-based pseudorandom generator and deterministic lineage derivation.

The generator is xoshiro256** (64-bit words, period 2^256 - 1). Seeding and
stream splitting both go through the splitmix64 finalizer, so every stream is
a pure function of a 64-bit lineage key. The numba kernels in ``_kernels``
carry a bit-exact twin of these routines; ``tests/test_bits.py`` pins the two
implementations against each other.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_STATE_SALT = 0x1BD11BDAA9FC1A22


def mix64(z: int) -> int:
    """splitmix64 output finalizer; bijective on 64-bit words."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_key(key: int, index: int) -> int:
    """Lineage key of child ``index`` of the stream identified by ``key``."""
    return mix64((key + GOLDEN * (index + 1)) & MASK64)


def lineage_key(master_seed: int, split_path=()) -> int:
    """Fold a (master_seed, split_path) lineage into a single 64-bit key."""
    key = master_seed & MASK64
    for index in split_path:
        key = child_key(key, index)
    return key


def seed_state(key: int) -> list:
    """Fill a 4-word xoshiro256** state from a lineage key.

    Uses a salted splitmix64 stream so state filling and child-key
    derivation draw from disjoint domains.
    """
    base = mix64(key ^ _STATE_SALT)
    s = [mix64((base + GOLDEN * (j + 1)) & MASK64) for j in range(4)]
    if s[0] | s[1] | s[2] | s[3] == 0:  # all-zero state is invalid for xoshiro
        s[0] = GOLDEN
    return s


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def xoshiro_next(s: list) -> int:
    """Advance a 4-word state in place and return the next 64-bit output."""
    result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
    t = (s[1] << 17) & MASK64
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result
