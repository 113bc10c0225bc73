"""Reference payloads, k-mer index and read-to-reference assignment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..simulate import encode, gc_counts, run_lengths
from .align import BIG, banded_edit_distance
from .io import ParseError, is_acgt, iter_records


def kmer_codes(codes: np.ndarray, k: int) -> np.ndarray:
    if codes.size < k:
        return np.zeros(0, dtype=np.int64)
    weights = 4 ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return sliding_window_view(codes.astype(np.int64), k) @ weights


@numba.njit(cache=True)
def _rank_candidates(read, k, codes, refs, counts, max_candidates):
    n = read.size
    if n < k:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    q = np.empty(n - k + 1, np.int64)
    code = 0
    mask = (1 << (2 * k)) - 1
    for i in range(n):
        code = ((code << 2) | read[i]) & mask
        if i >= k - 1:
            q[i - k + 1] = code
    q = np.unique(q)
    touched = np.empty(counts.size, np.int64)
    m = 0
    for c in q:
        lo = np.searchsorted(codes, c, side="left")
        hi = np.searchsorted(codes, c, side="right")
        for t in range(lo, hi):
            r = refs[t]
            if counts[r] == 0:
                touched[m] = r
                m += 1
            counts[r] += 1
    take = min(max_candidates, m)
    out_r = np.empty(take, np.int64)
    out_c = np.empty(take, np.int64)
    # most shared k-mers first, ties by lower index
    for j in range(take):
        best = -1
        for i in range(m):
            r = touched[i]
            if counts[r] > 0 and (best < 0 or counts[r] > counts[best] or (counts[r] == counts[best] and r < best)):
                best = r
        out_r[j] = best
        out_c[j] = counts[best]
        counts[best] = -counts[best]
    for i in range(m):
        counts[touched[i]] = 0
    return out_r, out_c


class KmerIndex:
    """Sorted (k-mer code, reference index) pairs; each k-mer counted once per reference."""

    def __init__(self, payload_codes: Sequence[np.ndarray], k: int):
        if not 1 <= k <= 31:
            raise ValueError(f"k must lie in 1..31, got {k}")
        self.k = k
        per_ref = [np.unique(kmer_codes(c, k)) for c in payload_codes]
        codes = np.concatenate(per_ref) if per_ref else np.zeros(0, dtype=np.int64)
        refs = np.repeat(np.arange(len(per_ref)), [p.size for p in per_ref])
        order = np.argsort(codes, kind="stable")
        self.codes = codes[order]
        self.refs = refs[order].astype(np.int64)
        self._scratch = np.zeros(len(per_ref), np.int64)

    def candidates(self, read_codes: np.ndarray, max_candidates: int) -> tuple[np.ndarray, np.ndarray]:
        """Reference indices ranked by shared k-mer count (ties: lower index first)."""
        return _rank_candidates(np.asarray(read_codes, dtype=np.int64), self.k, self.codes, self.refs,
                                self._scratch, max_candidates)

    def candidates_reference(self, read_codes: np.ndarray, max_candidates: int):
        """Plain numpy ranking, kept as a cross-check for the compiled path."""
        q = np.unique(kmer_codes(read_codes, self.k))
        lo = np.searchsorted(self.codes, q, side="left")
        hi = np.searchsorted(self.codes, q, side="right")
        hits = np.concatenate([self.refs[a:b] for a, b in zip(lo, hi)] + [np.zeros(0, np.int64)])
        refs, counts = np.unique(hits, return_counts=True)
        order = np.lexsort((refs, -counts))[:max_candidates]
        return refs[order], counts[order]


@dataclass
class ReferenceSet:
    ids: list
    sequences: list
    payloads: list
    trim: tuple = (0, 0)
    k: int = 12
    skipped: int = 0
    codes: list = field(default_factory=list, repr=False)
    run_lengths: list = field(default_factory=list, repr=False)
    gc_fraction: np.ndarray = field(default=None, repr=False)
    index: Optional[KmerIndex] = field(default=None, repr=False)

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            seen, dup = set(), None
            for i in self.ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise ValueError(f"duplicate reference identifier {dup!r}")
        self.codes = [encode(p) for p in self.payloads]
        self.run_lengths = [None] * len(self.payloads)
        gc = np.zeros(len(self.payloads))
        # group by length so run lengths and GC are computed one matrix at a time
        by_len: dict = {}
        for i, c in enumerate(self.codes):
            by_len.setdefault(c.size, []).append(i)
        for length, idx in by_len.items():
            mat = np.stack([self.codes[i] for i in idx])
            rl = run_lengths(mat)
            w = gc_counts(mat)
            for row, i in enumerate(idx):
                self.run_lengths[i] = rl[row]
                gc[i] = w[row] / length
        self.gc_fraction = gc
        self.index = KmerIndex(self.codes, self.k)
        self.position = {rid: i for i, rid in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_sequences(cls, ids, sequences, trim=(0, 0), k: int = 12) -> "ReferenceSet":
        a, b = trim
        payloads = []
        for rid, s in zip(ids, sequences):
            if a < 0 or b < 0 or a + b >= len(s):
                raise ValueError(f"primer trim {trim} leaves no payload in {rid!r} (length {len(s)})")
            payloads.append(s[a:len(s) - b])
        return cls(list(ids), list(sequences), payloads, tuple(trim), k)


def load_references(path, fmt: str = "auto", primer_trim=(0, 0), k: int = 12) -> ReferenceSet:
    """Payload = sequence minus the primer prefix/suffix lengths in ``primer_trim``."""
    a, b = primer_trim
    ids, seqs, skipped = [], [], 0
    for rec in iter_records(path, fmt):
        seq = rec.seq.upper()
        if len(seq) <= a + b:
            raise ParseError(path, rec.line, f"sequence of length {len(seq)} shorter than primer trim {primer_trim}")
        if not is_acgt(seq[a:len(seq) - b]):
            skipped += 1
            continue
        ids.append(rec.id)
        seqs.append(seq)
    try:
        refs = ReferenceSet.from_sequences(ids, seqs, primer_trim, k)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from None
    refs.skipped = skipped
    return refs


@dataclass(frozen=True)
class AssignConfig:
    k: int = 12
    max_candidates: int = 5
    max_edit_fraction: float = 0.3

    def __post_init__(self):
        if self.max_candidates < 1 or not 0 <= self.max_edit_fraction <= 1:
            raise ValueError("max_candidates must be >= 1 and max_edit_fraction in [0, 1]")


@dataclass(frozen=True)
class Assignment:
    ref: int  # -1 when unassigned
    distance: int
    candidates: int


def assign_codes(read: np.ndarray, refset: ReferenceSet, config: AssignConfig = AssignConfig()) -> Assignment:
    cands, _ = refset.index.candidates(read, config.max_candidates)
    best, best_d = -1, BIG
    for c in cands.tolist():
        payload = refset.codes[c]
        limit = int(config.max_edit_fraction * payload.size)
        # a later candidate only matters if it ties or beats the current best
        band = min(limit, best_d)
        d = banded_edit_distance(payload, read, band)
        if d > band:
            continue
        if d < best_d or (d == best_d and refset.ids[c] < refset.ids[best]):
            best, best_d = c, d
    if best < 0:
        return Assignment(-1, -1, int(cands.size))
    return Assignment(best, int(best_d), int(cands.size))


def assign_read(read: str, refset: ReferenceSet, config: AssignConfig = AssignConfig()) -> tuple[Optional[str], int]:
    """(reference id, edit distance), or (None, -1) when no candidate is
    within max_edit_fraction of its payload length."""
    a = assign_codes(encode(read), refset, config)
    return (refset.ids[a.ref], a.distance) if a.ref >= 0 else (None, -1)
