"""Exact combinatorics oracle: enumeration, closed forms, and limit laws.

Everything here is integer or rational arithmetic; no floating point. The
brute-force enumeration is ground truth: closed-form formulas are validated
against it, never the other way around. The threshold-2 finite-n count
formula is known to disagree with enumeration at n = k (suspected
transcription slip in its source); ``tnk_closed`` therefore reports rather
than asserts for threshold 2.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import BudgetExceeded, ImproperPGF, InvalidSize, UnsupportedThreshold
from .replay import mark_lifetime
from .store import NodeStore, decode_bits

ENUMERATION_LIMIT = 21  # C_10 = 16796 trees keeps the suite fast


def catalan(m: int) -> int:
    """m-th Catalan number via the integer recurrence."""
    if m < 0:
        raise ValueError("m must be >= 0")
    c = 1
    for i in range(m):
        c = c * 2 * (2 * i + 1) // (i + 2)
    return c


def _check_odd(n):
    if n < 1 or n % 2 == 0:
        raise InvalidSize(f"tree size must be a positive odd integer, got {n}")


def all_encodings(n: int) -> list:
    """Every preorder word of size n, in recursive (left-size) order."""
    _check_odd(n)
    if n > ENUMERATION_LIMIT:
        raise BudgetExceeded(f"enumeration capped at n = {ENUMERATION_LIMIT}")
    return _encodings(n)


def _encodings(n, _cache={1: ["0"]}):
    if n not in _cache:
        out = []
        for left in range(1, n - 1, 2):
            for l_enc in _encodings(left):
                for r_enc in _encodings(n - 1 - left):
                    out.append("1" + l_enc + r_enc)
        _cache[n] = out
    return _cache[n]


def enumerate_trees(n: int, store: NodeStore | None = None):
    """Yield all binary trees of size n, each exactly once."""
    store = store or NodeStore(workers=1)
    for enc in all_encodings(n):
        yield decode_bits(enc, store)


@dataclass
class ExactPmf:
    n: int
    threshold: int
    entries: dict  # lifetime k -> Fraction probability
    source: str  # "brute_force" or "closed_form"

    def mean(self) -> Fraction:
        return sum((Fraction(k) * p for k, p in self.entries.items()), Fraction(0))

    def total(self) -> Fraction:
        return sum(self.entries.values(), Fraction(0))


def lifetime_counts(n: int, threshold: int) -> dict:
    """Brute-force map k -> number of size-n trees with first-task lifetime k."""
    counts = {}
    for tree in enumerate_trees(n):
        k = mark_lifetime(tree, threshold)
        counts[k] = counts.get(k, 0) + 1
    return counts


def exact_pmf_lifetime(n: int, threshold: int) -> ExactPmf:
    """Exact lifetime distribution by enumeration (ground truth)."""
    counts = lifetime_counts(n, threshold)
    total = catalan((n - 1) // 2)
    entries = {k: Fraction(c, total) for k, c in sorted(counts.items())}
    return ExactPmf(n=n, threshold=threshold, entries=entries, source="brute_force")


def tnk_closed(n: int, k: int, threshold: int):
    """Closed-form count of size-n trees with first-task lifetime k.

    Threshold 1 is exact (validated against enumeration). Threshold 2
    evaluates the published summation as stated, with the 0/0 term at j = 0
    taken as 0; callers compare it against brute force and report.
    """
    _check_odd(n)
    if n < 3:
        raise InvalidSize("closed forms start at n = 3")
    if threshold == 1:
        num = 2 * (k - 1) * math.comb(max(n - k - 1, 0), (n - 3) // 2) \
            if 1 <= k <= (n + 1) // 2 and n - k - 1 >= 0 else 0
        if num % (n - 1):
            raise AssertionError(f"non-integer count at n={n}, k={k}")
        return num // (n - 1)
    if threshold == 2:
        if k < 3 or k > n or k % 2 == 0:
            return Fraction(0)
        total = Fraction(0)
        for j in range((k - 3) // 2 + 1):
            if j == 0:
                continue  # the j factor vanishes (0/0 at n = k read as 0)
            total += Fraction(j, n - k + j) * math.comb((k - 3) // 2, j) \
                * math.comb(n - k + j, (n - k) // 2)
        return total
    raise UnsupportedThreshold(f"counts defined for thresholds 1 and 2, got {threshold}")


def mean_lifetime_exact(n: int, threshold: int) -> Fraction:
    """Closed-form mean first-task lifetime (exact rational value)."""
    _check_odd(n)
    if threshold == 1:
        return Fraction(4 * n, n + 3)
    if threshold == 2:
        return Fraction(17 * n * n - 8 * n + 15, n * n + 8 * n + 15)
    raise UnsupportedThreshold(f"means defined for thresholds 1 and 2, got {threshold}")


def finite_pmf_closed(n: int, k: int, threshold: int = 1) -> Fraction:
    """Closed-form P(lifetime = k) at size n (threshold 1 only)."""
    if threshold != 1:
        raise UnsupportedThreshold("closed-form pmf implemented for threshold 1")
    _check_odd(n)
    if n == 1:
        return Fraction(1) if k == 1 else Fraction(0)
    return Fraction(tnk_closed(n, k, 1), catalan((n - 1) // 2))


# ---------------------------------------------------------------------------
# limit laws as rational probability generating functions


@dataclass(frozen=True)
class RationalPGF:
    """N(u)/D(u) with integer coefficients, coefficient lists low-to-high."""

    numerator: tuple
    denominator: tuple

    def value_at_one(self) -> Fraction:
        return Fraction(sum(self.numerator), sum(self.denominator))

    def series(self, k_max: int) -> list:
        """Power-series coefficients 0..k_max by exact long division."""
        num, den = self.numerator, self.denominator
        d0 = den[0]
        if d0 == 0:
            raise ImproperPGF("denominator vanishes at u = 0")
        inv = []
        for m in range(k_max + 1):
            acc = Fraction(1 if m == 0 else 0)
            for j in range(1, min(m, len(den) - 1) + 1):
                acc -= den[j] * inv[m - j]
            inv.append(acc / d0)
        out = []
        for m in range(k_max + 1):
            acc = Fraction(0)
            for j in range(min(m, len(num) - 1) + 1):
                if num[j]:
                    acc += num[j] * inv[m - j]
            out.append(acc)
        return out

    def mean(self) -> Fraction:
        """Derivative at u = 1 via the quotient rule, exactly."""
        n1 = Fraction(sum(self.numerator))
        d1 = Fraction(sum(self.denominator))
        dn1 = sum(j * c for j, c in enumerate(self.numerator))
        dd1 = sum(j * c for j, c in enumerate(self.denominator))
        return (dn1 * d1 - n1 * dd1) / (d1 * d1)


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return tuple(out)


LIMIT_PGFS = {
    # u^2 / (2 - u)^2
    1: RationalPGF((0, 0, 1), (4, -4, 1)),
    # u^5 / (4 - 3u^2)^2
    2: RationalPGF((0, 0, 0, 0, 0, 1), (16, 0, -24, 0, 9)),
    # -u^11 / ((u^4 - 16u^2 + 16)(u^6 - 18u^4 + 48u^2 - 32))
    4: RationalPGF((0,) * 11 + (-1,),
                   _poly_mul((16, 0, -16, 0, 1), (-32, 0, 48, 0, -18, 0, 1))),
}

PGF_HORIZON = 10_000


def limit_pmf(threshold: int, k_max: int) -> dict:
    """Limit lifetime distribution up to k_max, as exact rationals."""
    if threshold not in LIMIT_PGFS:
        raise UnsupportedThreshold(
            f"limit laws available for thresholds {sorted(LIMIT_PGFS)}, got {threshold}")
    if not 0 <= k_max <= PGF_HORIZON:
        raise ValueError(f"k_max must be in [0, {PGF_HORIZON}]")
    pgf = LIMIT_PGFS[threshold]
    if pgf.value_at_one() != 1:
        raise ImproperPGF(f"PGF for threshold {threshold} is not normalized")
    coeffs = pgf.series(k_max)
    for k, c in enumerate(coeffs):
        if c < 0:
            raise ImproperPGF(f"negative series coefficient at k = {k}")
    return {k: c for k, c in enumerate(coeffs) if c}


def limit_mean(threshold: int) -> Fraction:
    """Mean of the limit lifetime law, by exact differentiation at u = 1."""
    if threshold not in LIMIT_PGFS:
        raise UnsupportedThreshold(
            f"limit laws available for thresholds {sorted(LIMIT_PGFS)}, got {threshold}")
    return LIMIT_PGFS[threshold].mean()
