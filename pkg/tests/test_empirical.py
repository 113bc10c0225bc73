import gzip
import random
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnaregime.channels import GrowthModel
from dnaregime.empirical import (
    AssignConfig,
    ParseError,
    ProfileConfig,
    ReferenceSet,
    align,
    assign_read,
    banded_edit_distance,
    classify_errors,
    composition_reports,
    count_reads,
    error_rates_by_gc,
    error_rates_by_runlength,
    iter_records,
    load_reads,
    load_references,
    write_sequences,
)
from dnaregime.empirical.align import BIG
from dnaregime.empirical.profile import gc_bin_edges, gc_bin_index
from dnaregime.simulate import DepthLaw, ErrorLaws, encode, generate_codewords, synth_dataset


def edit_distance(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def random_edit(rng, s, k):
    s = list(s)
    for _ in range(k):
        op = rng.randrange(3)
        if op == 0 and s:
            i = rng.randrange(len(s))
            s[i] = rng.choice([c for c in "ACGT" if c != s[i]])
        elif op == 1 and len(s) > 1:
            del s[rng.randrange(len(s))]
        else:
            s.insert(rng.randrange(len(s) + 1), rng.choice("ACGT"))
    return "".join(s)


# -- parsers ----------------------------------------------------------------------

def test_fasta_two_records(tmp_path):
    p = tmp_path / "refs.fasta"
    p.write_text(">a desc\nACGT\nAC\n\n>b\nGGGA\n")
    refs = load_references(p)
    assert refs.ids == ["a", "b"] and refs.payloads == ["ACGTAC", "GGGA"]
    assert [r.line for r in iter_records(p)] == [1, 5]


def test_fastq_and_gzip(tmp_path):
    p = tmp_path / "reads.fq.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("@r1 x\nACGT\n+\nIIII\n@r2\nGGCA\n+r2\nIIII\n")
    rs = load_reads(p)
    assert rs.ids == ["r1", "r2"] and rs.seqs == ["ACGT", "GGCA"]


def test_line_format_and_round_trip(tmp_path):
    seqs = [generate_codewords("none", 60, 3, seed=i).strings()[0] for i in range(5)]
    for fmt in ("fasta", "lines", "fastq"):
        p = tmp_path / f"x.{fmt}"
        write_sequences(p, [f"s{i}" for i in range(5)], seqs, fmt)
        assert load_reads(p).seqs == seqs
    with pytest.raises(ValueError):
        write_sequences(tmp_path / "y", ["a"], ["A"], "bam")


def test_many_line_references(tmp_path):
    book = generate_codewords("none", 60, 16383, seed=0)
    p = tmp_path / "refs.txt"
    write_sequences(p, [], book.strings(), "lines")
    refs = load_references(p, k=10)
    assert len(refs) == 16383 and all(len(x) == 60 for x in refs.payloads)


def test_non_acgt_record_skipped(tmp_path):
    p = tmp_path / "r.fasta"
    p.write_text(">a\nACGT\n>b\nACNT\n>c\nGGGG\n")
    refs = load_references(p)
    assert refs.ids == ["a", "c"] and refs.skipped == 1
    rs = load_reads(p)
    assert rs.skipped == 1 and len(rs) == 2


def test_empty_file_warns(tmp_path):
    p = tmp_path / "empty.fastq"
    p.write_text("")
    with pytest.warns(UserWarning):
        rs = load_reads(p)
    assert len(rs) == 0


@pytest.mark.parametrize("text,fmt,line", [
    ("ACGT\n>a\nAC\n", "fasta", 1),
    (">a\nAC\n>\nAC\n", "fasta", 3),
    ("@r1\nACGT\n+\nIII\n", "fastq", 4),
    ("@r1\nACGT\n-\nIIII\n", "fastq", 3),
    ("@r1\nACGT\n+\nIIII\nr2\nAC\n+\nII\n", "fastq", 5),
    ("@r1\nACGT\n", "fastq", 1),
    ("ACGT\n>x\n", "lines", 2),
])
def test_parse_errors_carry_line_numbers(tmp_path, text, fmt, line):
    p = tmp_path / "bad"
    p.write_text(text)
    with pytest.raises(ParseError) as err:
        list(iter_records(p, fmt))
    assert err.value.line == line
    assert f":{line}:" in str(err.value)


def test_reference_errors(tmp_path):
    p = tmp_path / "dup.fasta"
    p.write_text(">a\nACGT\n>a\nGGGG\n")
    with pytest.raises(ParseError):
        load_references(p)
    q = tmp_path / "short.fasta"
    q.write_text(">a\nACGT\n")
    with pytest.raises(ParseError):
        load_references(q, primer_trim=(2, 2))
    with pytest.raises(ValueError):
        list(iter_records(q, "sam"))


def test_primer_trim():
    refs = ReferenceSet.from_sequences(["a"], ["TTTACGTACGGG"], trim=(3, 2))
    assert refs.payloads == ["ACGTACG"]
    assert refs.sequences == ["TTTACGTACGGG"]


# -- alignment ------------------------------------------------------------------

def test_identical_strings_align_without_edits():
    rec = align("ACGTACGT", "ACGTACGT")
    assert rec.cost == 0 and rec.counts()["match"] == 8
    assert rec.events("ACGTACGT") == []


def test_leftmost_deletion_in_run():
    rec = align("AAA", "AAAA")
    (e,) = rec.events("AAAA")
    assert e.kind == "deletion" and e.ref_pos == 0 and e.frm == "A"
    refs = ReferenceSet.from_sequences(["r"], ["CAAAAC"], k=3)
    rec = align("CAAAC", "CAAAAC", ref_id="r")
    (ann,) = classify_errors(rec, refs)
    assert ann.ref_pos == 1 and ann.run_length == 4


def test_leftmost_insertion_in_run():
    rec = align("CAAAAC", "CAAAC")
    (e,) = rec.events("CAAAC")
    # inserted A placed right after the C, i.e. at the start of the run
    assert e.kind == "insertion" and e.ref_pos == 0 and e.to == "A"
    rec = align("AAAA", "AAA")
    (e,) = rec.events("AAA")
    assert e.ref_pos == -1


def test_substitution_preferred_over_indel_pair():
    rec = align("ACTT", "ACGT")
    assert rec.counts() == {"match": 3, "substitution": 1, "deletion": 0, "insertion": 0}
    assert rec.events("ACGT")[0] == ("substitution", 2, "G", "T")


def test_classify_annotations():
    ref = "ACGGGTAC"
    refs = ReferenceSet.from_sequences(["r"], [ref], k=3)
    rec = align("ACGAGTAC", ref, ref_id="r")
    (ann,) = classify_errors(rec, refs)
    assert ann.kind == "substitution" and ann.run_length == 3 and ann.gc == pytest.approx(5 / 8)
    bal = "GC" * 15 + "AT" * 15
    refs2 = ReferenceSet.from_sequences(["b"], [bal], k=5)
    assert refs2.gc_fraction[0] == 0.5


def test_align_rejects_empty():
    with pytest.raises(ValueError):
        align("", "ACGT")


def test_replay_and_conservation_random_pairs():
    rng = random.Random(0)
    for t in range(100_000):
        ref = "".join(rng.choice("ACGT") for _ in range(rng.randint(1, 24)))
        k = rng.randint(0, 5)
        read = random_edit(rng, ref, k) or "A"
        rec = align(read, ref)
        assert rec.check(ref, read) == []
        assert rec.replay(ref) == read
        assert rec.cost <= k or read == "A"
        if t % 100 == 0:
            assert rec.cost == edit_distance(ref, read)


@settings(max_examples=200, deadline=None)
@given(st.text("ACGT", min_size=1, max_size=30), st.text("ACGT", min_size=1, max_size=30))
def test_alignment_is_optimal_and_replays(ref, read):
    rec = align(read, ref)
    assert rec.cost == edit_distance(ref, read)
    assert rec.replay(ref) == read
    assert rec.check(ref, read) == []
    pos = rec.ref_positions()
    assert np.all(np.diff(pos) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.text("ACGT", min_size=1, max_size=30), st.text("ACGT", min_size=1, max_size=30), st.integers(0, 40))
def test_banded_distance(a, b, band):
    d = edit_distance(a, b)
    got = banded_edit_distance(encode(a), encode(b), band)
    if d <= band and abs(len(a) - len(b)) <= band:
        assert got <= band and got >= d
    if got != BIG:
        assert got >= d
    full = banded_edit_distance(encode(a), encode(b), max(len(a), len(b)))
    assert full == d


def test_check_detects_tampering():
    rec = align("ACGT", "ACCT")
    rec.symbols = "A"
    assert "replay does not reproduce the read" in rec.check("ACCT", "ACGT")
    rec2 = align("ACGT", "ACCT")
    rec2.cost = 3
    assert rec2.check("ACCT", "ACGT")


# -- assignment -----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_refs():
    book = generate_codewords("none", 80, 300, seed=2)
    return book, ReferenceSet.from_sequences([f"ref{i}" for i in range(300)], book.strings())


def test_assign_exact_and_random(small_refs):
    book, refs = small_refs
    assert assign_read(refs.payloads[17], refs) == ("ref17", 0)
    rnd = generate_codewords("none", 80, 50, seed=99).strings()
    assert all(assign_read(r, refs)[0] is None for r in rnd)
    assert assign_read("ACGT", refs) == (None, -1)


def test_assign_tie_breaks_by_reference_id():
    payload = generate_codewords("none", 60, 1, seed=4).strings()[0]
    refs = ReferenceSet.from_sequences(["zeta", "alpha"], [payload, payload])
    assert assign_read(payload, refs) == ("alpha", 0)


def test_candidate_ranking_matches_reference_implementation(small_refs):
    _, refs = small_refs
    rng = random.Random(3)
    for i in range(200):
        read = random_edit(rng, refs.payloads[i], rng.randint(0, 8))
        q = encode(read)
        a = refs.index.candidates(q, 5)
        b = refs.index.candidates_reference(q, 5)
        assert a[0].tolist() == b[0].tolist() and a[1].tolist() == b[1].tolist()


def test_assign_config_validation():
    with pytest.raises(ValueError):
        AssignConfig(max_candidates=0)
    with pytest.raises(ValueError):
        AssignConfig(max_edit_fraction=1.5)


# -- counting and reports ---------------------------------------------------------

def _dataset(laws, count=300, depth=4, seed=1):
    book = generate_codewords("none", 110, count, seed=seed)
    ds = synth_dataset(book, DepthLaw("fixed", depth), laws, seed=seed + 1)
    refs = ReferenceSet.from_sequences(ds.ref_ids, ds.references)
    return ds, refs


def test_zero_error_data_reports_zero():
    ds, refs = _dataset(ErrorLaws())
    counts = count_reads(refs, ds.reads)
    assert counts.assigned == counts.reads == len(ds.reads) and counts.violations == 0
    for rep in (error_rates_by_runlength(counts, refs), error_rates_by_gc(counts, refs)):
        for row in rep.rows:
            if row.denominator:
                assert row.rate == 0.0 and row.events == 0


def test_serial_and_parallel_identical():
    laws = ErrorLaws(GrowthModel("linear", 0.004, 0.01), GrowthModel("linear", 0, 0.005),
                     GrowthModel("linear", 0, 0.005))
    ds, refs = _dataset(laws, count=200, depth=5)
    a = count_reads(refs, ds.reads, threads=1, chunk=300)
    b = count_reads(refs, ds.reads, threads=2, chunk=300)
    c = count_reads(refs, ds.reads, threads=1, chunk=10_000)
    for x in (b, c):
        assert np.array_equal(a.run_events, x.run_events)
        assert np.array_equal(a.assignment, x.assignment)
    assert error_rates_by_runlength(a, refs).to_csv() == error_rates_by_runlength(b, refs).to_csv()
    assert error_rates_by_gc(a, refs).to_csv() == error_rates_by_gc(b, refs).to_csv()
    truth = np.asarray(ds.read_refs)
    assert (a.assignment == truth).mean() >= 0.999


def test_report_structure_and_weighting():
    laws = ErrorLaws(substitution=GrowthModel("linear", 0, 0.02))
    ds, refs = _dataset(laws, count=200, depth=3)
    counts = count_reads(refs, ds.reads)
    rep = error_rates_by_runlength(counts, refs)
    assert [r.stratum for r in rep.rows[::3]] == ["1", "2", "3", "4", "5", "6"]
    row = rep.get("1", "substitution")
    assert 0.01 < row.rate < 0.03 and row.reliable
    assert not rep.get("6", "substitution").reliable
    text = rep.to_csv(header_comment="config_sha256=x")
    assert text.splitlines()[1] == "stratum,kind,rate_percent,stddev_percent,denominator,reliable"
    unweighted = error_rates_by_runlength(counts, refs, weighting="references")
    assert unweighted.weighting == "references"
    with pytest.raises(ValueError):
        error_rates_by_runlength(counts, refs, weighting="bases")
    with pytest.raises(ValueError):
        error_rates_by_runlength(counts, refs, strata=[7])
    with pytest.raises(KeyError):
        rep.get("9", "substitution")
    gc = error_rates_by_gc(counts, refs)
    assert gc.rows[0].stratum == "[0.35,0.40)" and gc.rows[-1].stratum == "[0.60,0.65]"
    assert rep.to_dict()["rows"][0]["kind"] == "substitution"


def test_balanced_references_fill_a_single_gc_bin():
    book = generate_codewords("eps=0", 60, 100, seed=0)
    refs = ReferenceSet.from_sequences([f"r{i}" for i in range(100)], book.strings())
    counts = count_reads(refs, book.strings())
    rep = error_rates_by_gc(counts, refs)
    populated = {r.stratum for r in rep.rows if r.denominator > 0}
    assert populated == {"[0.50,0.55)"}


def test_gc_bins():
    edges = gc_bin_edges()
    assert edges == [0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65]
    assert gc_bin_index([0.34, 0.35, 0.5, 0.65, 0.66], edges).tolist() == [-1, 0, 3, 5, -1]


def test_composition_reports():
    book = generate_codewords("none", 110, 2000, seed=3)
    refs = ReferenceSet.from_sequences([f"r{i}" for i in range(2000)], book.strings())
    reads = np.full(2000, 5)
    rep = composition_reports(refs, reads, max_run=8)
    assert sum(int(v) * int(k) for k, v in rep["runlength_histogram"].items()) <= 2000 * 110
    assert all(abs(c["relative_abundance"] - 1.0) < 1e-12 for c in rep["coverage_vs_gc"])
    assert sum(b["reads"] for b in rep["gc_histogram"]) == 10_000
    assert sum(b["reads"] for b in rep["gc_histogram_exact"]) == 10_000


def test_mixed_kind_alignment_is_never_costlier_than_the_ledger():
    # a deletion next to an insertion costs the same as one or two substitutions,
    # so with all three kinds present the minimal script can differ from the truth
    laws = ErrorLaws(GrowthModel("linear", 0, 0.01), GrowthModel("linear", 0, 0.01),
                     GrowthModel("linear", 0, 0.01), insertion_symbol="distinct")
    ds, refs = _dataset(laws, count=300, depth=5, seed=4)
    truth = {"substitution": 0, "insertion": 0, "deletion": 0}
    seen = dict(truth)
    for j, row in enumerate(ds.ledger):
        ref = ds.references[ds.read_refs[j]]
        rec = align(ds.reads[j], ref)
        assert rec.cost <= len(row["events"])
        for e in row["events"]:
            truth[e["kind"]] += 1
        for k, v in rec.counts().items():
            if k != "match":
                seen[k] += v
    assert seen["substitution"] >= truth["substitution"]
    assert seen["insertion"] <= truth["insertion"]
    assert seen["deletion"] <= truth["deletion"]
