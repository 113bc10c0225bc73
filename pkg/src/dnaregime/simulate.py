"""Monte Carlo codebooks, true-channel transmission and synthetic sequencing data.

Sequences are uint8 arrays over A=0, C=1, G=2, T=3.  Randomness is drawn
block by block (4096 sequences per block) from PCG64 streams keyed by
(seed, stream, block), so results do not depend on how work is split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .channels import GrowthModel, gc_window, run_length_pmf_exact
from .homopolymer import build_input_chain, effective_substitution, stationary_distribution

ALPHABET = "ACGT"
_LUT = np.frombuffer(b"ACGT", dtype=np.uint8)
_CODE = np.full(256, 255, dtype=np.uint8)
for _i, _c in enumerate(b"ACGT"):
    _CODE[_c] = _i
    _CODE[ord(chr(_c).lower())] = _i

BLOCK = 4096
STREAM_GENERATE, STREAM_CHANNEL, STREAM_SYNTH = 0, 1, 2
ACCEPT_MIN = 1e-3  # below this acceptance rate use the constant-composition sampler


def encode(seq: str) -> np.ndarray:
    arr = _CODE[np.frombuffer(seq.encode("ascii"), dtype=np.uint8)]
    if np.any(arr == 255):
        raise ValueError(f"non-ACGT symbol in {seq[:40]!r}")
    return arr


def decode(arr: np.ndarray) -> str:
    return _LUT[np.asarray(arr, dtype=np.uint8)].tobytes().decode("ascii")


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream, block))))


def _blocks(count: int, block: int = BLOCK) -> Iterator[tuple[int, int, int]]:
    for b, start in enumerate(range(0, count, block)):
        yield b, start, min(count, start + block)


# -- validators ------------------------------------------------------------

def run_lengths(seqs: np.ndarray) -> np.ndarray:
    """Length of the maximal run containing each position (same shape as input)."""
    s = np.atleast_2d(np.asarray(seqs))
    rows, n = s.shape
    left = np.ones((rows, n), dtype=np.int32)
    right = np.ones((rows, n), dtype=np.int32)
    for t in range(1, n):
        same = s[:, t] == s[:, t - 1]
        left[:, t] = np.where(same, left[:, t - 1] + 1, 1)
    for t in range(n - 2, -1, -1):
        same = s[:, t] == s[:, t + 1]
        right[:, t] = np.where(same, right[:, t + 1] + 1, 1)
    out = left + right - 1
    return out if np.ndim(seqs) == 2 else out[0]


def max_run_length(seqs: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(np.asarray(seqs))
    return run_lengths(s).max(axis=1)


def gc_counts(seqs: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(np.asarray(seqs))
    return np.count_nonzero((s == 1) | (s == 2), axis=1)


def run_histogram(seqs: np.ndarray, rmax: Optional[int] = None) -> np.ndarray:
    """Number of maximal runs of each length; index r-1 holds length r."""
    s = np.atleast_2d(np.asarray(seqs))
    rows, n = s.shape
    rl = run_lengths(s)
    start = np.ones((rows, n), dtype=bool)
    start[:, 1:] = s[:, 1:] != s[:, :-1]
    lengths = rl[start]
    size = rmax if rmax is not None else n
    return np.bincount(lengths, minlength=size + 1)[1:size + 1]


def expected_run_count(n: int, r: int, count: int = 1) -> float:
    """Expected number of maximal runs of length exactly r in ``count``
    uniform sequences of length n (edge runs included)."""
    if not 1 <= r <= n:
        return 0.0
    if r == n:
        return count * 0.25 ** (n - 1)
    # a run touching one end needs one differing neighbour, an interior run two
    edge = 2 * 0.25 ** (r - 1) * 0.75
    interior = (n - r - 1) * 0.25 ** (r - 1) * 0.75 ** 2
    return count * (edge + interior)


# -- constraints and codebooks ------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    kind: str = "none"  # none | run | gc
    m: Optional[int] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.kind == "run":
            if self.m is None or self.m < 1:
                raise ValueError("run constraint needs m >= 1")
        elif self.kind == "gc":
            if self.epsilon is None or not 0 <= self.epsilon <= 0.5:
                raise ValueError("GC constraint needs 0 <= epsilon <= 0.5")
        elif self.kind != "none":
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Constraint":
        text = text.strip().lower()
        if text in ("", "none", "unconstrained"):
            return cls()
        key, _, val = text.partition("=")
        if key == "m":
            return cls("run", m=int(val))
        if key in ("eps", "epsilon"):
            return cls("gc", epsilon=float(val))
        raise ValueError(f"cannot parse constraint {text!r}; use none, m=<int> or eps=<float>")

    def describe(self) -> str:
        if self.kind == "run":
            return f"m={self.m}"
        if self.kind == "gc":
            return f"eps={self.epsilon:g}"
        return "none"

    def satisfied(self, seqs: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(seqs)
        if self.kind == "run":
            return max_run_length(s) <= self.m
        if self.kind == "gc":
            lo, hi = gc_window(s.shape[1], self.epsilon)
            w = gc_counts(s)
            return (w >= lo) & (w <= hi)
        return np.ones(s.shape[0], dtype=bool)


@dataclass
class Codebook:
    n: int
    count: int
    constraint: Constraint
    sequences: np.ndarray = field(repr=False)
    law: str
    seed: int

    def strings(self) -> list[str]:
        return [decode(row) for row in self.sequences]

    def validate(self) -> None:
        """Check every sequence (not a sample) against the declared constraint."""
        if self.sequences.shape != (self.count, self.n):
            raise ValueError("codebook shape does not match (count, n)")
        bad = np.flatnonzero(~self.constraint.satisfied(self.sequences))
        if bad.size:
            raise ValueError(f"{bad.size} sequences violate {self.constraint.describe()}, first at row {bad[0]}")


def _markov_block(rng: np.random.Generator, m: int, rows: int, n: int, pi: np.ndarray,
                  track_k: bool = False):
    seqs = np.empty((rows, n), dtype=np.uint8)
    ks = np.empty((rows, n), dtype=np.int16) if track_k else None
    idx = rng.choice(pi.size, size=rows, p=pi)
    k = idx // 4 + 1
    x = idx % 4
    seqs[:, 0] = x
    if track_k:
        ks[:, 0] = k
    for t in range(1, n):
        u = rng.random(rows)
        at_cap = k == m
        # free move: uniform over four symbols, repeats extend the run
        c = np.minimum((u * 4).astype(np.int64), 3)
        forced = (x + 1 + np.minimum((u * 3).astype(np.int64), 2)) % 4
        nx = np.where(at_cap, forced, c)
        k = np.where(nx == x, k + 1, 1)
        x = nx
        seqs[:, t] = x
        if track_k:
            ks[:, t] = k
    return seqs, ks


def _chain_stationary(m: int) -> np.ndarray:
    pi = stationary_distribution(build_input_chain(m).transition)
    pi = np.clip(pi, 0, None)
    return pi / pi.sum()


def _constant_composition_block(rng, rows: int, n: int, ws: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = rng.choice(ws, size=rows, p=weights)
    keys = rng.random((rows, n))
    rank = np.argsort(np.argsort(keys, axis=1), axis=1)
    is_gc = rank < w[:, None]
    coin = rng.integers(0, 2, size=(rows, n))
    # G/C group is {1, 2}, A/T group is {0, 3}
    return np.where(is_gc, 1 + coin, 3 * coin).astype(np.uint8)


def generate_codewords(constraint: Union[Constraint, str, None], n: int, count: int, seed: int,
                       law: Optional[str] = None) -> Codebook:
    """Draw ``count`` length-n codewords.

    none: uniform over all 4^n sequences.  run: the order-m chain (repeats of
    a full run forbidden, everything else uniform) started in its stationary
    law.  gc: uniform over the window by rejection, or by choosing w first
    and placing the G/C positions when rejection would be too slow.
    """
    if isinstance(constraint, str) or constraint is None:
        constraint = Constraint.parse(constraint or "none")
    if count < 1 or n < 1:
        raise ValueError("count and n must be >= 1")
    out = np.empty((count, n), dtype=np.uint8)
    if constraint.kind == "none":
        tag = "uniform"
        for b, a, z in _blocks(count):
            out[a:z] = block_rng(seed, STREAM_GENERATE, b).integers(0, 4, size=(z - a, n), dtype=np.uint8)
    elif constraint.kind == "run":
        tag = "markov-order-m"
        pi = _chain_stationary(constraint.m)
        for b, a, z in _blocks(count):
            out[a:z] = _markov_block(block_rng(seed, STREAM_GENERATE, b), constraint.m, z - a, n, pi)[0]
    else:
        lo, hi = gc_window(n, constraint.epsilon)
        if lo > hi:
            raise ValueError(f"empty GC window for n={n}, epsilon={constraint.epsilon}")
        ws = np.arange(lo, hi + 1)
        binom = np.array([math.comb(n, w) for w in ws], dtype=object)
        accept = float(sum(binom) / 2 ** n)
        tag = law or ("rejection" if accept >= ACCEPT_MIN else "constant-composition")
        if tag == "rejection":
            for b, a, z in _blocks(count):
                rng = block_rng(seed, STREAM_GENERATE, b)
                need, got = z - a, 0
                while got < need:
                    batch = rng.integers(0, 4, size=(max(64, int((need - got) / accept * 1.2)), n), dtype=np.uint8)
                    w = gc_counts(batch)
                    keep = batch[(w >= lo) & (w <= hi)][: need - got]
                    out[a + got:a + got + keep.shape[0]] = keep
                    got += keep.shape[0]
        elif tag == "constant-composition":
            weights = np.array([float(c / sum(binom)) for c in binom])
            weights /= weights.sum()
            for b, a, z in _blocks(count):
                out[a:z] = _constant_composition_block(block_rng(seed, STREAM_GENERATE, b), z - a, n, ws, weights)
        else:
            raise ValueError(f"unknown GC sampling law {tag!r}")
    book = Codebook(n=n, count=count, constraint=constraint, sequences=out, law=tag, seed=seed)
    book.validate()
    return book


# -- channels ----------------------------------------------------------------

def _as_matrix(codewords):
    if isinstance(codewords, Codebook):
        return codewords.sequences, "array"
    if isinstance(codewords, str):
        return encode(codewords)[None, :], "str"
    arr = np.asarray(codewords, dtype=np.uint8)
    if arr.ndim == 1:
        return arr[None, :], "row"
    return arr, "array"


def _restore(mat, how):
    if how == "str":
        return decode(mat[0])
    if how == "row":
        return mat[0]
    return mat


def _substitute(rng, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    flip = rng.random(x.shape) < p
    shift = rng.integers(1, 4, size=x.shape, dtype=np.uint8)
    return np.where(flip, (x + shift) % 4, x).astype(np.uint8)


def run_rate_table(model: GrowthModel, rmax: int) -> np.ndarray:
    """Index r gives p_r (index 0 unused)."""
    return np.concatenate([[0.0], model.run_rates(rmax)])


def apply_runlength_channel(codewords, model: GrowthModel, seed: int):
    """Substitute each symbol with the rate of the full run it belongs to."""
    if not model.is_run_model:
        raise ValueError(f"run-length model required, got {model.kind}")
    x, how = _as_matrix(codewords)
    table = run_rate_table(model, x.shape[1])
    y = np.empty_like(x)
    for b, a, z in _blocks(x.shape[0]):
        block = x[a:z]
        y[a:z] = _substitute(block_rng(seed, STREAM_CHANNEL, b), block, table[run_lengths(block)])
    return _restore(y, how)


def gc_rate_table(model: GrowthModel, n: int) -> np.ndarray:
    return np.array([model.rate(w=w, n=n) for w in range(n + 1)])


def apply_gc_channel(codewords, model: GrowthModel, seed: int):
    """Substitute every symbol of a sequence with the rate set by its GC content."""
    if model.is_run_model:
        raise ValueError(f"GC-content model required, got {model.kind}")
    x, how = _as_matrix(codewords)
    table = gc_rate_table(model, x.shape[1])
    y = np.empty_like(x)
    for b, a, z in _blocks(x.shape[0]):
        block = x[a:z]
        p = table[gc_counts(block)][:, None]
        y[a:z] = _substitute(block_rng(seed, STREAM_CHANNEL, b), block, np.broadcast_to(p, block.shape))
    return _restore(y, how)


def sample_hmm_channel(m: int, model: GrowthModel, n: int, count: int, seed: int):
    """Inputs from the order-m chain passed through the marginalized channel,
    where position i flips with p_eff of its current run count."""
    if not model.is_run_model:
        raise ValueError(f"run-length model required, got {model.kind}")
    peff = np.array([0.0] + [effective_substitution(k, m, model) for k in range(1, m + 1)])
    pi = _chain_stationary(m)
    xs = np.empty((count, n), dtype=np.uint8)
    ys = np.empty_like(xs)
    for b, a, z in _blocks(count):
        rng = block_rng(seed, STREAM_GENERATE, b)
        x, k = _markov_block(rng, m, z - a, n, pi, track_k=True)
        xs[a:z] = x
        ys[a:z] = _substitute(block_rng(seed, STREAM_CHANNEL, b), x, peff[k])
    return xs, ys


# -- statistics ----------------------------------------------------------------

KINDS = ("substitution", "insertion", "deletion")


@dataclass
class SimStats:
    """Counters by run-length (index r-1) and by GC content w (index w)."""

    run_positions: np.ndarray
    gc_sequences: np.ndarray
    gc_positions: np.ndarray
    run_errors: dict = field(default_factory=dict)
    gc_errors: dict = field(default_factory=dict)

    def merge(self, other: "SimStats") -> "SimStats":
        def add(a, b):
            size = max(a.size, b.size)
            return np.pad(a, (0, size - a.size)) + np.pad(b, (0, size - b.size))
        kinds = set(self.run_errors) | set(other.run_errors)
        zero = np.zeros(0, dtype=np.int64)
        return SimStats(
            run_positions=add(self.run_positions, other.run_positions),
            gc_sequences=add(self.gc_sequences, other.gc_sequences),
            gc_positions=add(self.gc_positions, other.gc_positions),
            run_errors={k: add(self.run_errors.get(k, zero), other.run_errors.get(k, zero)) for k in kinds},
            gc_errors={k: add(self.gc_errors.get(k, zero), other.gc_errors.get(k, zero)) for k in kinds},
        )

    def run_pmf(self) -> np.ndarray:
        total = self.run_positions.sum()
        return self.run_positions / total if total else self.run_positions.astype(float)

    def gc_pmf(self) -> np.ndarray:
        total = self.gc_sequences.sum()
        return self.gc_sequences / total if total else self.gc_sequences.astype(float)

    def run_rates(self, kind: str = "substitution") -> np.ndarray:
        den = self.run_positions
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, self.run_errors[kind] / np.maximum(den, 1), np.nan)

    def gc_rates(self, kind: str = "substitution") -> np.ndarray:
        den = self.gc_positions
        return np.where(den > 0, self.gc_errors[kind] / np.maximum(den, 1), np.nan)

    def to_dict(self) -> dict:
        return {
            "run_positions": self.run_positions.tolist(),
            "gc_sequences": self.gc_sequences.tolist(),
            "gc_positions": self.gc_positions.tolist(),
            "run_errors": {k: v.tolist() for k, v in sorted(self.run_errors.items())},
            "gc_errors": {k: v.tolist() for k, v in sorted(self.gc_errors.items())},
        }


def measure_runlength_stats(codebook, margin: int = 12, position: Optional[int] = None) -> SimStats:
    """Run-length counts at interior positions (more than ``margin`` from
    either end), or at one fixed column when ``position`` is given so that
    samples from different sequences are independent."""
    seqs = codebook.sequences if isinstance(codebook, Codebook) else np.atleast_2d(codebook)
    if seqs.size == 0:
        raise ValueError("empty codebook")
    n = seqs.shape[1]
    if position is not None:
        cols = np.array([position])
    else:
        cols = np.arange(margin + 1, n - margin - 1)
        if cols.size == 0:
            raise ValueError(f"no interior positions for n={n}, margin={margin}")
    counts = np.zeros(n, dtype=np.int64)
    for _, a, z in _blocks(seqs.shape[0]):
        rl = run_lengths(seqs[a:z])[:, cols]
        counts += np.bincount(rl.ravel(), minlength=n + 1)[1:n + 1]
    w = np.bincount(gc_counts(seqs), minlength=n + 1).astype(np.int64)
    return SimStats(run_positions=counts, gc_sequences=w, gc_positions=w * n)


def measure_substitutions(x: np.ndarray, y: np.ndarray) -> SimStats:
    """Per-run-length (of the input) and per-GC substitution counts."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape != y.shape:
        raise ValueError("input and output shapes differ")
    n = x.shape[1]
    pos = np.zeros(n, dtype=np.int64)
    err = np.zeros(n, dtype=np.int64)
    gseq = np.zeros(n + 1, dtype=np.int64)
    gerr = np.zeros(n + 1, dtype=np.int64)
    for _, a, z in _blocks(x.shape[0]):
        xb, yb = x[a:z], y[a:z]
        rl = run_lengths(xb).ravel()
        diff = (xb != yb)
        pos += np.bincount(rl, minlength=n + 1)[1:n + 1]
        err += np.bincount(rl, weights=diff.ravel(), minlength=n + 1)[1:n + 1].astype(np.int64)
        w = gc_counts(xb)
        gseq += np.bincount(w, minlength=n + 1)
        gerr += np.bincount(w, weights=diff.sum(axis=1), minlength=n + 1).astype(np.int64)
    return SimStats(run_positions=pos, gc_sequences=gseq, gc_positions=gseq * n,
                    run_errors={"substitution": err}, gc_errors={"substitution": gerr})


def empirical_mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """Plug-in per-symbol mutual information (bits) between aligned symbols."""
    joint = np.bincount((np.ravel(x).astype(np.int64) * 4 + np.ravel(y)), minlength=16).reshape(4, 4)
    pj = joint / joint.sum()
    px = pj.sum(axis=1, keepdims=True)
    py = pj.sum(axis=0, keepdims=True)
    nz = pj > 0
    return float(np.sum(pj[nz] * np.log2(pj[nz] / (px @ py)[nz])))


def chain_run_length_pmf(m: int) -> np.ndarray:
    """Exact law of the run length containing a random position of the
    stationary order-m chain: runs end with probability 3/4 per step and
    are cut at m, and a position sees a run with weight proportional to its
    length."""
    runs = np.array([0.25 ** (j - 1) * 0.75 for j in range(1, m)] + [0.25 ** (m - 1)])
    w = np.arange(1, m + 1) * runs
    return w / w.sum()


def unconstrained_run_length_pmf(rmax: int) -> np.ndarray:
    """q(1..rmax-1) and the merged tail mass at index rmax-1."""
    head = np.array([float(run_length_pmf_exact(r)) for r in range(1, rmax)])
    return np.concatenate([head, [1.0 - head.sum()]])


def compare_channels(m: int, model: GrowthModel, n: int, count: int, seed: int) -> dict:
    """Per-run-length substitution rates of the marginalized chain channel
    and of the true channel on the same inputs."""
    x, y_hmm = sample_hmm_channel(m, model, n, count, seed)
    y_true = apply_runlength_channel(x, model, seed + 1)
    hmm = measure_substitutions(x, y_hmm)
    true = measure_substitutions(x, y_true)
    rows = []
    for r in range(1, m + 1):
        rows.append({
            "r": r, "positions": int(true.run_positions[r - 1]), "model_p": model.rate(r),
            "true_channel": float(true.run_rates()[r - 1]), "marginalized": float(hmm.run_rates()[r - 1]),
        })
    return {"m": m, "model": model.to_dict(), "n": n, "count": count, "seed": seed, "rows": rows}


# -- synthetic sequencing data ---------------------------------------------------

@dataclass(frozen=True)
class DepthLaw:
    """Reads per reference.  gc-biased draws Poisson(mean * exp(-beta (g-1/2)^2))
    where g is the GC fraction of the reference."""

    kind: str = "fixed"
    mean: float = 10.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "poisson", "gc-biased"):
            raise ValueError(f"unknown read-depth law {self.kind!r}")
        if self.mean < 0 or self.beta < 0:
            raise ValueError("read depth parameters must be nonnegative")
        if self.kind == "fixed" and self.mean != int(self.mean):
            raise ValueError("fixed read depth must be an integer")

    def intensity(self, gc_fraction) -> np.ndarray:
        g = np.asarray(gc_fraction, dtype=float)
        if self.kind == "gc-biased":
            return self.mean * np.exp(-self.beta * (g - 0.5) ** 2)
        return np.full(g.shape, float(self.mean))

    def draw(self, rng, gc_fraction) -> np.ndarray:
        lam = self.intensity(gc_fraction)
        if self.kind == "fixed":
            return lam.astype(np.int64)
        return rng.poisson(lam)


@dataclass(frozen=True)
class ErrorLaws:
    """Per-position injection laws; each is a run-length or GC growth model
    (alpha = 0 gives a flat rate).  ``insertion_symbol`` is uniform, or
    distinct to draw only symbols differing from the base the insertion
    follows, which keeps insertions identifiable by the run they follow."""

    substitution: Optional[GrowthModel] = None
    insertion: Optional[GrowthModel] = None
    deletion: Optional[GrowthModel] = None
    insertion_symbol: str = "uniform"

    def __post_init__(self):
        if self.insertion_symbol not in ("uniform", "distinct"):
            raise ValueError(f"unknown insertion symbol mode {self.insertion_symbol!r}")

    def tables(self, n: int) -> dict:
        out = {}
        for kind in KINDS:
            model = getattr(self, kind)
            if model is None:
                out[kind] = ("flat", np.zeros(1))
            elif model.is_run_model:
                out[kind] = ("run", run_rate_table(model, n))
            else:
                out[kind] = ("gc", gc_rate_table(model, n))
        return out

    def to_dict(self) -> dict:
        return {k: (getattr(self, k).to_dict() if getattr(self, k) else None) for k in KINDS} | {
            "insertion_symbol": self.insertion_symbol}


def _rates_for(table, rl: np.ndarray, w: int) -> np.ndarray:
    how, vals = table
    if how == "run":
        return vals[rl]
    if how == "gc":
        return np.full(rl.shape, vals[w])
    return np.zeros(rl.shape)


@dataclass
class SynthDataset:
    ref_ids: list
    references: list
    read_ids: list
    reads: list
    read_refs: list
    ledger: list
    paths: dict = field(default_factory=dict)

    def reads_per_reference(self) -> np.ndarray:
        return np.bincount(np.asarray(self.read_refs, dtype=np.int64), minlength=len(self.references))


def _mutate(rng, x: np.ndarray, rl: np.ndarray, w: int, tables: dict, insertion_symbol: str):
    n = x.size
    pd = _rates_for(tables["deletion"], rl, w)
    ps = _rates_for(tables["substitution"], rl, w)
    pi = _rates_for(tables["insertion"], rl, w)
    u = rng.random(n)
    deleted = u < pd
    substituted = (~deleted) & (u < pd + ps)
    inserted = rng.random(n) < pi
    shift = rng.integers(1, 4, size=n)
    ins_draw = rng.integers(0, 4, size=n)
    if insertion_symbol == "distinct":
        ins_draw = (x + rng.integers(1, 4, size=n)) % 4
    y = np.where(substituted, (x + shift) % 4, x).astype(np.uint8)
    # slot 2i holds the (possibly substituted) base, slot 2i+1 an insertion after it
    slots = np.empty(2 * n, dtype=np.uint8)
    slots[0::2] = y
    slots[1::2] = ins_draw
    keep = np.empty(2 * n, dtype=bool)
    keep[0::2] = ~deleted
    keep[1::2] = inserted
    events = []
    for i in np.flatnonzero(deleted | substituted | inserted).tolist():
        if deleted[i]:
            events.append({"kind": "deletion", "ref_pos": i, "from": ALPHABET[x[i]], "to": None})
        elif substituted[i]:
            events.append({"kind": "substitution", "ref_pos": i, "from": ALPHABET[x[i]], "to": ALPHABET[y[i]]})
        if inserted[i]:
            events.append({"kind": "insertion", "ref_pos": i, "from": None, "to": ALPHABET[ins_draw[i]]})
    return slots[keep], events


def synth_dataset(references: Codebook, depth: DepthLaw, errors: ErrorLaws, seed: int,
                  out_dir=None, fmt: str = "fasta") -> SynthDataset:
    """Reads drawn from each reference with independent substitution,
    deletion (disjoint per position) and insertion-after events."""
    seqs = references.sequences
    count, n = seqs.shape
    tables = errors.tables(n)
    gc = gc_counts(seqs)
    rls = run_lengths(seqs)
    for kind in ("insertion", "deletion"):
        # only contexts that occur in the references matter
        worst = max(float(_rates_for(tables[kind], rls[i], int(gc[i])).max()) for i in range(count)) if count else 0.0
        if worst > 0.2:
            raise ValueError(f"{kind} rate {worst:.4g} exceeds 0.2 for a context present in the references")
    depths = np.empty(count, dtype=np.int64)
    for b, a, z in _blocks(count):
        depths[a:z] = depth.draw(block_rng(seed, STREAM_SYNTH, 2 * b), gc[a:z] / n)
    ref_ids = [f"ref{i}" for i in range(count)]
    refs = references.strings()
    read_ids, reads, read_refs, ledger = [], [], [], []
    j = 0
    for b, a, z in _blocks(count):
        rng = block_rng(seed, STREAM_SYNTH, 2 * b + 1)
        for i in range(a, z):
            for _ in range(depths[i]):
                y, events = _mutate(rng, seqs[i], rls[i], int(gc[i]), tables, errors.insertion_symbol)
                rid = f"read{j}"
                read_ids.append(rid)
                reads.append(decode(y))
                read_refs.append(i)
                ledger.append({"read_id": rid, "ref_id": ref_ids[i], "events": events})
                j += 1
    ds = SynthDataset(ref_ids, refs, read_ids, reads, read_refs, ledger)
    if out_dir is not None:
        ds.paths = write_dataset(ds, out_dir, fmt)
    return ds


def write_dataset(ds: SynthDataset, out_dir, fmt: str = "fasta") -> dict:
    from .empirical.io import write_sequences
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "fasta" if fmt == "fasta" else "txt"
    paths = {"references": out / f"references.{ext}", "reads": out / f"reads.{ext}",
             "ledger": out / "ledger.jsonl"}
    write_sequences(paths["references"], ds.ref_ids, ds.references, fmt)
    write_sequences(paths["reads"], ds.read_ids, ds.reads, fmt)
    with open(paths["ledger"], "w") as fh:
        for row in ds.ledger:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    return {k: str(v) for k, v in paths.items()}
