"""Error classification and stratified error-rate reports.

Run length and GC content are read off the reference payload.  Every
aligned read contributes its events and the full payload as denominator.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from ..simulate import encode
from .align import DEL, INS, SUB, AlignmentRecord, align_codes, _emitted_symbols
from .io import ReadSet
from .references import AssignConfig, ReferenceSet, assign_codes

KINDS = ("substitution", "insertion", "deletion")
_OP_OF = {"substitution": SUB, "insertion": INS, "deletion": DEL}
RELIABLE_FLOOR = 1000
CSV_COLUMNS = ("stratum", "kind", "rate_percent", "stddev_percent", "denominator", "reliable")


def gc_bin_edges(lo: float = 0.35, hi: float = 0.65, width: float = 0.05) -> list[float]:
    count = int(round((hi - lo) / width))
    return [round(lo + i * width, 10) for i in range(count + 1)]


def gc_bin_index(frac, edges: Sequence[float]) -> np.ndarray:
    """Bin of each GC fraction; the last bin is closed on the right, -1 outside."""
    f = np.asarray(frac, dtype=float)
    idx = np.searchsorted(edges, f, side="right") - 1
    idx = np.where(f == edges[-1], len(edges) - 2, idx)
    return np.where((f < edges[0]) | (f > edges[-1]), -1, idx)


def _bin_label(edges, i) -> str:
    close = "]" if i == len(edges) - 2 else ")"
    return f"[{edges[i]:.2f},{edges[i + 1]:.2f}{close}"


@dataclass(frozen=True)
class AnnotatedEvent:
    kind: str
    ref_pos: int
    frm: Optional[str]
    to: Optional[str]
    run_length: int
    gc: float


def classify_errors(record: AlignmentRecord, refset: ReferenceSet) -> list[AnnotatedEvent]:
    """Annotate each error with the run length at its reference position
    (insertions use the position they follow, or position 0 when they
    precede the payload) and the payload GC fraction."""
    i = refset.position[record.ref_id]
    ref = refset.payloads[i]
    rl = refset.run_lengths[i]
    gc = float(refset.gc_fraction[i])
    return [AnnotatedEvent(e.kind, e.ref_pos, e.frm, e.to, int(rl[max(e.ref_pos, 0)]), gc)
            for e in record.events(ref)]


# -- counting ----------------------------------------------------------------

@dataclass(frozen=True)
class ProfileConfig:
    assign: AssignConfig = AssignConfig()
    max_run: int = 6
    read_trim: tuple = (0, 0)
    floor: int = RELIABLE_FLOOR
    gc_edges: tuple = tuple(gc_bin_edges())


@dataclass
class ProfileCounts:
    """Additive counters; merging chunks in any order gives the same totals."""

    reads_per_ref: np.ndarray
    run_events: np.ndarray  # [ref, r, kind]; r = 0 collects runs longer than max_run
    total_events: np.ndarray  # [ref, kind]
    reads: int = 0
    assigned: int = 0
    violations: int = 0
    assignment: Optional[np.ndarray] = None  # per read, -1 unassigned

    def __add__(self, other: "ProfileCounts") -> "ProfileCounts":
        return ProfileCounts(self.reads_per_ref + other.reads_per_ref, self.run_events + other.run_events,
                             self.total_events + other.total_events, self.reads + other.reads,
                             self.assigned + other.assigned, self.violations + other.violations,
                             None if self.assignment is None else np.concatenate([self.assignment, other.assignment]))


def _empty_counts(n_refs: int, max_run: int, n_reads: int) -> ProfileCounts:
    return ProfileCounts(np.zeros(n_refs, np.int64), np.zeros((n_refs, max_run + 1, 3), np.int64),
                         np.zeros((n_refs, 3), np.int64), assignment=np.full(n_reads, -1, np.int64))


def _count_chunk(refset: ReferenceSet, seqs: Sequence[str], config: ProfileConfig,
                 align_reads: bool = True) -> ProfileCounts:
    R = config.max_run
    out = _empty_counts(len(refset), R, len(seqs))
    a, b = config.read_trim
    for j, s in enumerate(seqs):
        s = s[a:len(s) - b] if (a or b) else s
        out.reads += 1
        if not s:
            continue
        q = encode(s)
        hit = assign_codes(q, refset, config.assign)
        if hit.ref < 0:
            continue
        out.assigned += 1
        out.assignment[j] = hit.ref
        out.reads_per_ref[hit.ref] += 1
        if not align_reads:
            continue
        ref = refset.codes[hit.ref]
        ops, cost = align_codes(ref, q)
        rec = AlignmentRecord("", "", ops, _emitted_symbols(ops, q), int(cost))
        if rec.check(refset.payloads[hit.ref], s):
            out.violations += 1
            continue
        pos = np.maximum(rec.ref_positions(), 0)
        rl = refset.run_lengths[hit.ref][pos]
        rl = np.where(rl > R, 0, rl)
        for k, kind in enumerate(KINDS):
            mask = ops == _OP_OF[kind]
            if mask.any():
                out.run_events[hit.ref, :, k] += np.bincount(rl[mask], minlength=R + 1)
                out.total_events[hit.ref, k] += int(mask.sum())
    return out


_WORKER_REFS: Optional[ReferenceSet] = None


def _init_worker(refset):
    global _WORKER_REFS
    _WORKER_REFS = refset


def _worker(args):
    seqs, config, align_reads = args
    return _count_chunk(_WORKER_REFS, seqs, config, align_reads)


def count_reads(refset: ReferenceSet, reads: ReadSet, config: ProfileConfig = ProfileConfig(),
                threads: int = 1, chunk: int = 5000, align_reads: bool = True) -> ProfileCounts:
    """Assign, align and count every read; chunks are merged in input order."""
    seqs = reads.seqs if isinstance(reads, ReadSet) else list(reads)
    if not seqs:
        return _empty_counts(len(refset), config.max_run, 0)
    parts = [seqs[i:i + chunk] for i in range(0, len(seqs), chunk)]
    if threads <= 1 or len(parts) == 1:
        results = [_count_chunk(refset, p, config, align_reads) for p in parts]
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(refset,)) as pool:
            results = list(pool.map(_worker, [(p, config, align_reads) for p in parts]))
    total = results[0]
    for r in results[1:]:
        total = total + r
    return total


# -- reports -------------------------------------------------------------------

@dataclass
class StratumRate:
    stratum: str
    kind: str
    rate: float
    stddev: float
    stderr: float
    denominator: int
    events: int
    references: int
    reliable: bool


@dataclass
class ErrorProfileReport:
    axis: str
    weighting: str
    floor: int
    rows: list = field(default_factory=list)

    def get(self, stratum: str, kind: str) -> StratumRate:
        for r in self.rows:
            if r.stratum == stratum and r.kind == kind:
                return r
        raise KeyError((stratum, kind))

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            rate = "" if math.isnan(r.rate) else repr(100 * r.rate)
            sd = "" if math.isnan(r.stddev) else repr(100 * r.stddev)
            w.writerow([r.stratum, r.kind, rate, sd, r.denominator, str(r.reliable).lower()])
        return buf.getvalue()

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        return {"axis": self.axis, "weighting": self.weighting, "floor": self.floor,
                "rows": [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows]}


def _stratum_rows(label, events_by_ref, den_by_ref, reads_by_ref, weighting, floor):
    """events_by_ref [ref, kind] and den_by_ref [ref] for one stratum."""
    rows = []
    den = int(den_by_ref.sum())
    used = den_by_ref > 0
    for k, kind in enumerate(KINDS):
        ev = int(events_by_ref[:, k].sum())
        per_ref = events_by_ref[used, k] / den_by_ref[used]
        if weighting == "reads":
            rate = ev / den if den else math.nan
            wts = reads_by_ref[used].astype(float)
        else:
            rate = float(per_ref.mean()) if per_ref.size else math.nan
            wts = np.ones(per_ref.size)
        if per_ref.size and wts.sum() > 0:
            mu = np.average(per_ref, weights=wts)
            sd = float(math.sqrt(np.average((per_ref - mu) ** 2, weights=wts)))
        else:
            sd = math.nan
        se = math.sqrt(rate * (1 - rate) / den) if den and not math.isnan(rate) else math.nan
        rows.append(StratumRate(label, kind, rate, sd, se, den, ev, int(used.sum()), den >= floor))
    return rows


def _check_weighting(weighting):
    if weighting not in ("reads", "references"):
        raise ValueError(f"weighting must be 'reads' or 'references', got {weighting!r}")


def error_rates_by_runlength(counts: ProfileCounts, refset: ReferenceSet, weighting: str = "reads",
                             strata: Optional[Sequence[int]] = None, floor: int = RELIABLE_FLOOR) -> ErrorProfileReport:
    _check_weighting(weighting)
    R = counts.run_events.shape[1] - 1
    strata = list(strata) if strata is not None else list(range(1, R + 1))
    if any(not 1 <= r <= R for r in strata):
        raise ValueError(f"run-length strata must lie in 1..{R}")
    positions = np.zeros((len(refset), R + 1), np.int64)
    for i, rl in enumerate(refset.run_lengths):
        positions[i] = np.bincount(np.where(rl > R, 0, rl), minlength=R + 1)
    report = ErrorProfileReport("run_length", weighting, floor)
    for r in strata:
        den = counts.reads_per_ref * positions[:, r]
        report.rows += _stratum_rows(str(r), counts.run_events[:, r, :], den, counts.reads_per_ref, weighting, floor)
    return report


def error_rates_by_gc(counts: ProfileCounts, refset: ReferenceSet, weighting: str = "reads",
                      bins: Optional[Sequence[float]] = None, floor: int = RELIABLE_FLOOR) -> ErrorProfileReport:
    _check_weighting(weighting)
    edges = list(bins) if bins is not None else gc_bin_edges()
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("GC bin edges must increase")
    which = gc_bin_index(refset.gc_fraction, edges)
    lengths = np.array([c.size for c in refset.codes], dtype=np.int64)
    report = ErrorProfileReport("gc", weighting, floor)
    for b in range(len(edges) - 1):
        sel = which == b
        den = counts.reads_per_ref[sel] * lengths[sel]
        report.rows += _stratum_rows(_bin_label(edges, b), counts.total_events[sel], den,
                                     counts.reads_per_ref[sel], weighting, floor)
    return report


def composition_reports(refset: ReferenceSet, reads_per_ref: np.ndarray,
                        edges: Optional[Sequence[float]] = None, max_run: Optional[int] = None) -> dict:
    """Run-length frequency over references, read-weighted GC histogram and
    relative read abundance per GC bin."""
    from ..simulate import run_histogram
    longest = max((c.size for c in refset.codes), default=0)
    rmax = max_run or longest
    hist = np.zeros(rmax, np.int64)
    by_len: dict = {}
    for i, c in enumerate(refset.codes):
        by_len.setdefault(c.size, []).append(i)
    for length, idx in sorted(by_len.items()):
        h = run_histogram(np.stack([refset.codes[i] for i in idx]), length)
        m = min(rmax, length)
        hist[:m] += h[:m]
    edges = list(edges) if edges is not None else gc_bin_edges(0.0, 1.0, 0.05)
    which = gc_bin_index(refset.gc_fraction, edges)
    reads = np.asarray(reads_per_ref, dtype=np.int64)
    mean_reads = reads.mean() if reads.size else 0.0
    rel = reads / mean_reads if mean_reads > 0 else np.zeros(reads.size)
    gc_hist, coverage = [], []
    for b in range(len(edges) - 1):
        sel = which == b
        gc_hist.append({"bin": _bin_label(edges, b), "references": int(sel.sum()), "reads": int(reads[sel].sum())})
        if sel.any():
            coverage.append({"bin": _bin_label(edges, b), "centre": (edges[b] + edges[b + 1]) / 2,
                             "references": int(sel.sum()), "relative_abundance": float(rel[sel].mean()),
                             "stddev": float(rel[sel].std())})
    exact = {}
    for f, r in zip(refset.gc_fraction.tolist(), reads.tolist()):
        exact[f] = exact.get(f, 0) + r
    return {
        "runlength_histogram": {str(r + 1): int(v) for r, v in enumerate(hist)},
        "gc_histogram": gc_hist,
        "gc_histogram_exact": [{"gc": f, "reads": exact[f]} for f in sorted(exact)],
        "coverage_vs_gc": coverage,
    }
