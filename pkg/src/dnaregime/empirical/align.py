"""Unit-cost global alignment with a fixed tie-break, banded edit distance,
and the edit-script record built from it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba
import numpy as np

from ..simulate import decode, encode

MATCH, SUB, DEL, INS = 0, 1, 2, 3
OP_NAMES = ("match", "substitution", "deletion", "insertion")
BIG = 1 << 30


@numba.njit(cache=True)
def banded_edit_distance(a, b, band):
    """Levenshtein distance restricted to |i - j| <= band; returns BIG if
    the true distance may exceed the band."""
    n, m = a.size, b.size
    if abs(n - m) > band:
        return BIG
    prev = np.full(m + 1, BIG, np.int64)
    cur = np.full(m + 1, BIG, np.int64)
    for j in range(min(m, band) + 1):
        prev[j] = j
    for i in range(1, n + 1):
        lo = max(1, i - band)
        hi = min(m, i + band)
        for j in range(m + 1):
            cur[j] = BIG
        if i <= band:
            cur[0] = i
        for j in range(lo, hi + 1):
            best = prev[j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        for j in range(m + 1):
            prev[j] = cur[j]
    d = prev[m]
    return d if d <= band else BIG


@numba.njit(cache=True)
def _nw(ref, read):
    n, m = ref.size, read.size
    D = np.empty((n + 1, m + 1), np.int32)
    for i in range(n + 1):
        D[i, 0] = i
    for j in range(m + 1):
        D[0, j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = D[i - 1, j - 1] + (0 if ref[i - 1] == read[j - 1] else 1)
            if D[i - 1, j] + 1 < best:
                best = D[i - 1, j] + 1
            if D[i, j - 1] + 1 < best:
                best = D[i, j - 1] + 1
            D[i, j] = best
    # walk back from the end; taking the diagonal first pushes indels left
    ops = np.empty(n + m, np.int8)
    k = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i, j] == D[i - 1, j - 1] + (0 if ref[i - 1] == read[j - 1] else 1):
            ops[k] = 0 if ref[i - 1] == read[j - 1] else 1
            i -= 1
            j -= 1
        elif i > 0 and D[i, j] == D[i - 1, j] + 1:
            ops[k] = 2
            i -= 1
        else:
            ops[k] = 3
            j -= 1
        k += 1
    return ops[:k][::-1].copy(), D[n, m]


class Event(NamedTuple):
    kind: str
    ref_pos: int  # for insertions: the reference position the symbol follows (-1 = before the start)
    frm: Optional[str]
    to: Optional[str]


@dataclass
class AlignmentRecord:
    read_id: str
    ref_id: str
    ops: np.ndarray  # int8 codes MATCH / SUB / DEL / INS in script order
    symbols: str  # read symbols emitted by SUB and INS ops, in order
    cost: int

    def ref_positions(self) -> np.ndarray:
        """Reference position of each op (insertions: the position they follow)."""
        return np.cumsum(self.ops != INS) - 1

    def counts(self) -> dict:
        c = np.bincount(self.ops, minlength=4)
        return dict(zip(OP_NAMES, (int(v) for v in c)))

    def events(self, ref: str, include_matches: bool = False) -> list[Event]:
        out = []
        pos = self.ref_positions()
        sym = iter(self.symbols)
        for op, p in zip(self.ops.tolist(), pos.tolist()):
            if op == MATCH:
                if include_matches:
                    out.append(Event("match", p, ref[p], ref[p]))
            elif op == SUB:
                out.append(Event("substitution", p, ref[p], next(sym)))
            elif op == DEL:
                out.append(Event("deletion", p, ref[p], None))
            else:
                out.append(Event("insertion", p, None, next(sym)))
        return out

    def replay(self, ref: str) -> str:
        """Apply the script to the reference payload."""
        ops = self.ops
        r = np.frombuffer(ref.encode("ascii"), dtype=np.uint8)
        if np.count_nonzero(ops != INS) != r.size:
            raise ValueError("script does not cover the reference")
        pos = self.ref_positions()
        emit = ops != DEL
        out = np.empty(np.count_nonzero(emit), dtype=np.uint8)
        from_ref = ops[emit] == MATCH
        out[from_ref] = r[pos[emit][from_ref]]
        out[~from_ref] = np.frombuffer(self.symbols.encode("ascii"), dtype=np.uint8)
        return out.tobytes().decode("ascii")

    def check(self, ref: str, read: str) -> list[str]:
        """Violated invariants (empty when the record is sound)."""
        problems = []
        ops = self.ops
        c = np.bincount(ops, minlength=4)
        if c[MATCH] + c[SUB] + c[DEL] != len(ref):
            problems.append("reference length not conserved")
        if c[MATCH] + c[SUB] + c[INS] != len(read):
            problems.append("read length not conserved")
        if c[SUB] + c[DEL] + c[INS] != self.cost:
            problems.append("cost differs from edit count")
        if problems:
            return problems
        r = np.frombuffer(ref.encode("ascii"), dtype=np.uint8)
        pos = np.cumsum(ops != INS) - 1
        emit = ops != DEL
        out = np.empty(int(emit.sum()), dtype=np.uint8)
        kept = ops[emit]
        from_ref = kept == MATCH
        out[from_ref] = r[pos[emit][from_ref]]
        syms = np.frombuffer(self.symbols.encode("ascii"), dtype=np.uint8)
        out[~from_ref] = syms
        if out.tobytes() != read.encode("ascii"):
            problems.append("replay does not reproduce the read")
        is_sub = kept[~from_ref] == SUB
        if np.any(syms[is_sub] == r[pos[ops == SUB]]):
            problems.append("substitution to the same symbol")
        return problems


def align_codes(ref: np.ndarray, read: np.ndarray):
    if ref.size == 0 or read.size == 0:
        raise ValueError("alignment needs non-empty sequences")
    return _nw(ref, read)


def align(read: str, ref: str, read_id: str = "", ref_id: str = "") -> AlignmentRecord:
    """Unit-cost global alignment of ``read`` against the reference payload.

    Among minimal scripts: substitution before deletion before insertion at
    each traceback cell, indels leftmost within runs.
    """
    r = encode(ref)
    q = encode(read)
    ops, cost = align_codes(r, q)
    return AlignmentRecord(read_id, ref_id, ops, _emitted_symbols(ops, q), int(cost))


def _emitted_symbols(ops: np.ndarray, read_codes: np.ndarray) -> str:
    consumed = ops != DEL
    read_ops = ops[consumed]
    return decode(read_codes[read_ops != MATCH])
