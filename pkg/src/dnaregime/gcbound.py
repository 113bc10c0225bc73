"""Gilbert-Varshamov lower bounds for unconstrained and GC-constrained codes.

All counting is done on Python integers; the only floating-point step is the
final base-2 logarithm of an exact rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from .channels import GrowthModel, gc_window, substitution_rate

BRUTE_FORCE_MAX_N = 12

# rates come straight from the exact ratio; rearranged log forms are easy to
# get wrong by a factor of 2^n in the ball term
RATE_NOTE = "rate = log2(space size / average ball volume) / n"


def binomial(n: int, k: int) -> int:
    """C(n, k), zero outside 0 <= k <= n (including negative n)."""
    if n < 0 or k < 0 or k > n:
        return 0
    return math.comb(n, k)


def log2_ratio(num: int, den: int) -> float:
    if num <= 0 or den <= 0:
        raise ValueError("log2 of a nonpositive quantity")
    return math.log2(num) - math.log2(den)


def _check_d(n: int, d: int):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 1 <= d <= n + 1:
        raise ValueError(f"minimum distance d must lie in 1..{n + 1}, got {d}")


def hamming_ball_unconstrained(n: int, d: int) -> int:
    """Number of length-n quaternary sequences within distance d-1 of a point."""
    _check_d(n, d)
    return sum(math.comb(n, i) * 3 ** i for i in range(d))


@lru_cache(maxsize=None)
def _ball_constrained(n: int, d: int, lo: int, hi: int, w: int) -> int:
    total = 0
    nw = n - w
    for r in range(d):
        for delta in range(max(lo - w, -r), min(hi - w, r) + 1):
            # i_plus A/T->G/C moves, i_minus = i_plus - delta G/C->A/T moves,
            # the remaining r - i_plus - i_minus stay within their group
            for i_plus in range(max(0, delta), min(delta + w, r) + 1):
                i_minus = i_plus - delta
                total += (binomial(w, i_minus) * binomial(nw, i_plus)
                          * binomial(n - i_plus - i_minus, r - i_plus - i_minus)
                          * 2 ** (i_plus + i_minus))
    return total


def hamming_ball_constrained(n: int, d: int, epsilon: float, w: int) -> int:
    """Number of GC-window sequences within distance d-1 of a centre whose
    GC content is w."""
    _check_d(n, d)
    lo, hi = gc_window(n, epsilon)
    if not lo <= w <= hi:
        raise ValueError(f"centre GC content {w} outside window {lo}..{hi}")
    return _ball_constrained(n, d, lo, hi, w)


def hamming_ball_balanced(n: int, d: int) -> int:
    """Ball volume around a sequence of exactly n/2 G/C symbols inside the
    set of such sequences (even n)."""
    _check_d(n, d)
    if n % 2:
        raise ValueError("balanced closed form needs even n")
    h = n // 2
    total = 0
    for r in range(d):
        for i in range(min(r // 2, h) + 1):
            total += binomial(h, i) * binomial(n - h, i) * binomial(n - 2 * i, r - 2 * i) * 4 ** i
    return total


def hamming_ball_bruteforce(n: int, d: int, epsilon: float, w: int,
                            center: Optional[str] = None) -> int:
    """Count by enumerating all 4^n sequences (oracle for small n).

    The default centre is G^w A^(n-w).
    """
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    _check_d(n, d)
    lo, hi = gc_window(n, epsilon)
    if center is None:
        if not lo <= w <= hi:
            raise ValueError(f"centre GC content {w} outside window {lo}..{hi}")
        center = "G" * w + "A" * (n - w)
    if len(center) != n:
        raise ValueError("centre length differs from n")
    code = {"A": 0, "C": 1, "G": 2, "T": 3}
    c = np.array([code[s] for s in center], dtype=np.int64)
    count = 0
    chunk = 1 << 18
    total = 4 ** n
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        dist = np.zeros(idx.size, dtype=np.int64)
        gc = np.zeros(idx.size, dtype=np.int64)
        for pos in range(n):
            digit = (idx >> (2 * pos)) & 3
            dist += digit != c[pos]
            gc += (digit == 1) | (digit == 2)
        count += int(np.count_nonzero((dist <= d - 1) & (gc >= lo) & (gc <= hi)))
    return count


def constrained_space_size(n: int, epsilon: float) -> int:
    """Number of length-n sequences whose GC content lies in the window."""
    lo, hi = gc_window(n, epsilon)
    return sum(math.comb(n, w) for w in range(lo, hi + 1)) * 2 ** n


# -- d selection ---------------------------------------------------------

@dataclass(frozen=True)
class DPolicy:
    """Map from the expected number of substitutions to a minimum distance.

    correct:  d = 2*ceil(e) + 1   (enough to correct e errors)
    detect:   d = ceil(e) + 1
    scaled:   d = ceil(c*e) + 1
    """

    kind: str = "correct"
    c: float = 2.0

    def __post_init__(self):
        if self.kind not in ("correct", "detect", "scaled"):
            raise ValueError(f"unknown d-policy {self.kind!r}")
        if self.c <= 0:
            raise ValueError("scale c must be positive")

    def distance(self, expected_errors: float) -> int:
        e = expected_errors
        if e < 0:
            raise ValueError("expected error count is negative")
        if self.kind == "correct":
            return 2 * _ceil(e) + 1
        if self.kind == "detect":
            return _ceil(e) + 1
        return _ceil(self.c * e) + 1

    def describe(self) -> str:
        return f"scaled(c={self.c:g})" if self.kind == "scaled" else self.kind

    @classmethod
    def parse(cls, text: str) -> "DPolicy":
        text = text.strip()
        if text.startswith("scaled"):
            inner = text[len("scaled"):].strip("():= ")
            if inner.startswith("c"):
                inner = inner[1:].strip("=: ")
            return cls("scaled", float(inner) if inner else 2.0)
        return cls(text)


def _ceil(x: float) -> int:
    # products like 0.0333*60 carry float dust; 1e-9 absorbs it
    return max(0, math.ceil(x - 1e-9))


def mean_substitution(n: int, epsilon: float, model: GrowthModel) -> float:
    """Average substitution probability over the GC window, weighted by the
    share of sequences at each GC content."""
    if model.is_run_model:
        raise ValueError(f"GC-content model required, got {model.kind}")
    lo, hi = gc_window(n, epsilon)
    if lo > hi:
        raise ValueError(f"empty GC window for n={n}, epsilon={epsilon}")
    weights = [math.comb(n, w) for w in range(lo, hi + 1)]
    total = sum(weights)
    return math.fsum(float(Fraction(c, total)) * substitution_rate(model, w=w, n=n)
                     for w, c in zip(range(lo, hi + 1), weights))


def expected_error_distance(n: int, epsilon: float, model: GrowthModel,
                            policy: Optional[DPolicy] = None) -> int:
    policy = policy or DPolicy()
    return policy.distance(mean_substitution(n, epsilon, model) * n)


# -- bounds ----------------------------------------------------------------

@dataclass
class GVResult:
    n: int
    d: int
    epsilon: float
    numerator: int = field(repr=False)
    denominator: int = field(repr=False)
    rate: float
    dpolicy: str = ""
    mean_p: Optional[float] = None
    alpha: Optional[float] = None
    p: Optional[float] = None
    note: str = RATE_NOTE

    def row(self) -> dict:
        return {
            "n": self.n, "d": self.d, "epsilon": self.epsilon, "alpha": self.alpha,
            "p": self.p, "mean_p": self.mean_p, "dpolicy": self.dpolicy, "rate": self.rate,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["numerator"] = str(self.numerator)
        d["denominator"] = str(self.denominator)
        return d


def gv_rate_unconstrained(n: int, d: int) -> GVResult:
    ball = hamming_ball_unconstrained(n, d)
    num = 4 ** n
    rate = 2.0 if ball == 1 else log2_ratio(num, ball) / n
    return GVResult(n=n, d=d, epsilon=0.5, numerator=num, denominator=ball, rate=rate)


def gv_rate_constrained(n: int, d: int, epsilon: float) -> GVResult:
    """Space size over the GC-weighted average ball volume, kept as an exact
    rational until the final logarithm."""
    _check_d(n, d)
    lo, hi = gc_window(n, epsilon)
    if lo > hi:
        raise ValueError(f"empty GC window for n={n}, epsilon={epsilon}")
    counts = [math.comb(n, w) for w in range(lo, hi + 1)]
    weight_total = sum(counts)
    space = weight_total * 2 ** n
    den = sum(c * _ball_constrained(n, d, lo, hi, w) for c, w in zip(counts, range(lo, hi + 1)))
    num = space * weight_total
    g = math.gcd(num, den)
    num, den = num // g, den // g
    rate = 2.0 if num == 4 ** n and den == 1 else log2_ratio(num, den) / n
    return GVResult(n=n, d=d, epsilon=epsilon, numerator=num, denominator=den, rate=rate)
