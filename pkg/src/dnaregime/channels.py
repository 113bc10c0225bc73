"""Substitution-rate growth laws, the quaternary entropy function and the
run-length / GC-content distributions of random DNA sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Optional

import numpy as np

CAP = 0.75
RUN_KINDS = ("linear-run", "exponential-run", "logarithmic-run")
GC_KINDS = ("parabolic-gc",)
KINDS = RUN_KINDS + GC_KINDS

# short names accepted on the command line and in config files
KIND_ALIASES = {
    "linear": "linear-run",
    "exponential": "exponential-run",
    "exp": "exponential-run",
    "logarithmic": "logarithmic-run",
    "log": "logarithmic-run",
    "parabolic": "parabolic-gc",
    "gc": "parabolic-gc",
}

TAIL_TOL = 1e-12


def canonical_kind(kind: str) -> str:
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown growth model kind {kind!r}; expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class GrowthModel:
    """Substitution probability as a function of run-length or GC content.

    ``alpha`` is the growth factor and ``base_p`` the substitution probability
    of an isolated nucleotide (run models) or of a balanced sequence (GC model).
    Every law saturates at 0.75, where output and input become independent.
    """

    kind: str
    alpha: float = 0.0
    base_p: float = 0.01
    cap: float = CAP

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a finite nonnegative number, got {self.alpha}")
        if not 0.0 <= self.base_p <= CAP:
            raise ValueError(f"base_p must lie in [0, 0.75], got {self.base_p}")
        if self.cap != CAP:
            raise ValueError("cap is fixed at 0.75")

    @property
    def is_run_model(self) -> bool:
        return self.kind in RUN_KINDS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "base_p": self.base_p}

    @classmethod
    def from_dict(cls, d: dict) -> "GrowthModel":
        return cls(kind=d["kind"], alpha=float(d.get("alpha", 0.0)), base_p=float(d.get("base_p", 0.01)))

    def rate(self, r: Optional[int] = None, *, w: Optional[int] = None, n: Optional[int] = None) -> float:
        return substitution_rate(self, r, w=w, n=n)

    def run_rates(self, rmax: int) -> np.ndarray:
        """p_r for r = 1..rmax (index 0 holds r = 1)."""
        return np.array([substitution_rate(self, r) for r in range(1, rmax + 1)])


def substitution_rate(model: GrowthModel, r: Optional[int] = None, *, w: Optional[int] = None,
                      n: Optional[int] = None) -> float:
    """Evaluate the model at run-length ``r`` or at GC content ``w`` of ``n``."""
    a, p = model.alpha, model.base_p
    if model.is_run_model:
        if r is None or int(r) != r or r < 1:
            raise ValueError(f"run-length context must be an integer >= 1, got {r!r}")
        if model.kind == "linear-run":
            val = a * (r - 1) + p
        elif model.kind == "exponential-run":
            # exp overflows long before the cap matters
            x = a * (r - 1)
            val = CAP if x > 700 else p * math.exp(x)
        else:
            val = a * math.log(r) + p
    else:
        if w is None or n is None or n < 1 or not 0 <= w <= n:
            raise ValueError(f"GC context requires 0 <= w <= n with n >= 1, got w={w!r}, n={n!r}")
        val = a * (w / n - 0.5) ** 2 + p
    return min(CAP, val)


def quaternary_entropy(p: float) -> float:
    """Entropy in bits of a symbol kept with probability 1-p and otherwise
    replaced by one of the three other symbols uniformly."""
    if not 0.0 <= p <= CAP:
        raise ValueError(f"substitution probability must lie in [0, 0.75], got {p}")
    if p == 0.0:
        return 0.0
    return -((1.0 - p) * math.log2(1.0 - p) + p * math.log2(p / 3.0))


# -- run-length distribution -------------------------------------------------

def run_length_pmf_exact(r: int) -> Fraction:
    if r < 1:
        raise ValueError(f"run-length must be >= 1, got {r}")
    return r * Fraction(1, 4) ** (r - 1) * Fraction(9, 16)


def run_length_pmf(r: int) -> float:
    """Probability that a random position of a uniform sequence lies in a run of length r."""
    return float(run_length_pmf_exact(r))


def run_length_tail(R: int) -> float:
    """Mass of the unbounded run-length pmf beyond ``R``: sum_{r>R} q(r)."""
    return 0.25 ** R * (0.75 * R + 1.0)


def run_length_tail_exact(R: int) -> Fraction:
    return Fraction(1, 4) ** R * (Fraction(3, 4) * R + 1)


def truncation_point(tol: float = TAIL_TOL) -> int:
    """Smallest R whose tail mass falls below ``tol``."""
    R = 1
    while run_length_tail(R) >= tol:
        R += 1
    return R


def run_length_pmf_constrained_exact(m: int, r: int) -> Fraction:
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 1 <= r <= m:
        raise ValueError(f"run-length {r} outside 1..{m}")
    norm = sum(run_length_pmf_exact(s) for s in range(1, m + 1))
    return run_length_pmf_exact(r) / norm


def run_length_pmf_constrained(m: int, r: int) -> float:
    """q(r) renormalized over the admissible run-lengths 1..m."""
    return float(run_length_pmf_constrained_exact(m, r))


@dataclass(frozen=True)
class RunLengthPmf:
    """Run-length pmf, either constrained to 1..m or truncated with a bounded tail."""

    m: Optional[int] = None
    truncation_tail: float = TAIL_TOL

    @property
    def support(self) -> int:
        return self.m if self.m is not None else truncation_point(self.truncation_tail)

    def probabilities(self) -> np.ndarray:
        R = self.support
        if self.m is None:
            return np.array([run_length_pmf(r) for r in range(1, R + 1)])
        return np.array([run_length_pmf_constrained(self.m, r) for r in range(1, R + 1)])

    def tail_mass(self) -> float:
        return 0.0 if self.m is not None else run_length_tail(self.support)

    def to_dict(self) -> dict:
        return asdict(self)


# -- GC-content distribution -------------------------------------------------

def gc_window(n: int, epsilon: float) -> tuple[int, int]:
    """Admissible GC contents ceil((0.5-eps)n) .. floor((0.5+eps)n).

    Epsilon is converted through its decimal representation so that values
    such as 0.1 land exactly on integer bounds.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    eps = Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon)
    if not 0 <= eps <= Fraction(1, 2):
        raise ValueError(f"epsilon must lie in [0, 0.5], got {epsilon}")
    lo = math.ceil((Fraction(1, 2) - eps) * n)
    hi = math.floor((Fraction(1, 2) + eps) * n)
    return lo, hi


def in_window(n: int, epsilon: float, w: int) -> bool:
    lo, hi = gc_window(n, epsilon)
    return lo <= w <= hi


def gc_pmf_exact(n: int, w: int) -> Fraction:
    if not 0 <= w <= n:
        raise ValueError(f"GC content {w} outside 0..{n}")
    return Fraction(math.comb(n, w), 2 ** n)


def gc_pmf(n: int, w: int) -> float:
    """Fraction of the 4^n sequences with exactly w G/C symbols."""
    return float(gc_pmf_exact(n, w))


def gc_pmf_constrained_exact(n: int, epsilon: float, w: int) -> Fraction:
    lo, hi = gc_window(n, epsilon)
    if lo > hi:
        raise ValueError(f"empty GC window for n={n}, epsilon={epsilon}")
    if not lo <= w <= hi:
        raise ValueError(f"GC content {w} outside window {lo}..{hi}")
    total = sum(math.comb(n, s) for s in range(lo, hi + 1))
    return Fraction(math.comb(n, w), total)


def gc_pmf_constrained(n: int, epsilon: float, w: int) -> float:
    return float(gc_pmf_constrained_exact(n, epsilon, w))
