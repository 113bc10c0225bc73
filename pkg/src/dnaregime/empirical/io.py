"""Streaming FASTA / FASTQ / one-sequence-per-line readers with gzip support."""

from __future__ import annotations

import gzip
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

FORMATS = ("auto", "fasta", "fastq", "lines")
_VALID = frozenset("ACGT")


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass
class Record:
    id: str
    seq: str
    line: int


@dataclass
class ReadSet:
    ids: list = field(default_factory=list)
    seqs: list = field(default_factory=list)
    skipped: int = 0
    source: str = ""

    def __len__(self):
        return len(self.seqs)


def open_text(path) -> io.TextIOBase:
    """Open plain or gzip-compressed text, decided by the magic bytes."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="ascii", errors="replace")
    return open(path, "r", encoding="ascii", errors="replace")


def detect_format(path) -> str:
    with open_text(path) as fh:
        for line in fh:
            s = line.strip()
            if not s:
                continue
            if s.startswith(">"):
                return "fasta"
            if s.startswith("@"):
                return "fastq"
            return "lines"
    return "lines"


def _iter_fasta(fh, path) -> Iterator[Record]:
    rid, start, chunks = None, 0, []
    for no, line in enumerate(fh, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith(">"):
            if rid is not None:
                yield Record(rid, "".join(chunks), start)
            rid = s[1:].split()[0] if len(s) > 1 else ""
            if not rid:
                raise ParseError(path, no, "FASTA header without an identifier")
            start, chunks = no, []
        else:
            if rid is None:
                raise ParseError(path, no, "sequence data before the first '>' header")
            chunks.append(s)
    if rid is not None:
        yield Record(rid, "".join(chunks), start)


def _iter_fastq(fh, path) -> Iterator[Record]:
    lines = (ln.rstrip("\r\n") for ln in fh)
    no = 0
    while True:
        header = None
        for header in lines:
            no += 1
            if header.strip():
                break
        else:
            return
        if not header.strip():
            return
        start = no
        if not header.startswith("@"):
            raise ParseError(path, no, f"expected '@' header, found {header[:30]!r}")
        try:
            seq = next(lines); plus = next(lines); qual = next(lines)
        except StopIteration:
            raise ParseError(path, start, "truncated FASTQ record (need 4 lines)") from None
        no += 3
        if not plus.startswith("+"):
            raise ParseError(path, no - 1, "expected '+' separator line")
        if len(qual) != len(seq):
            raise ParseError(path, no, f"quality length {len(qual)} differs from sequence length {len(seq)}")
        rid = header[1:].split()[0] if len(header) > 1 else ""
        if not rid:
            raise ParseError(path, start, "FASTQ header without an identifier")
        yield Record(rid, seq.strip(), start)


def _iter_lines(fh, path) -> Iterator[Record]:
    idx = 0
    for no, line in enumerate(fh, 1):
        s = line.strip()
        if not s:
            continue
        if s[0] in ">@":
            raise ParseError(path, no, "header line in a one-sequence-per-line file")
        yield Record(f"seq{idx}", s, no)
        idx += 1


def iter_records(path, fmt: str = "auto") -> Iterator[Record]:
    if fmt not in FORMATS:
        raise ValueError(f"unknown sequence format {fmt!r}; expected one of {FORMATS}")
    if fmt == "auto":
        fmt = detect_format(path)
    parser = {"fasta": _iter_fasta, "fastq": _iter_fastq, "lines": _iter_lines}[fmt]
    with open_text(path) as fh:
        yield from parser(fh, path)


def is_acgt(seq: str) -> bool:
    return bool(seq) and set(seq) <= _VALID


def load_reads(path, fmt: str = "auto") -> ReadSet:
    """Reads with ids; records with symbols other than ACGT are skipped and counted."""
    out = ReadSet(source=str(path))
    for rec in iter_records(path, fmt):
        seq = rec.seq.upper()
        if not is_acgt(seq):
            out.skipped += 1
            continue
        out.ids.append(rec.id)
        out.seqs.append(seq)
    if not out.seqs and not out.skipped:
        warnings.warn(f"{path}: no sequences found", stacklevel=2)
    return out


def write_sequences(path, ids, seqs, fmt: str = "fasta") -> None:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt") as fh:
        if fmt == "fasta":
            for i, s in zip(ids, seqs):
                fh.write(f">{i}\n{s}\n")
        elif fmt == "lines":
            for s in seqs:
                fh.write(s + "\n")
        elif fmt == "fastq":
            for i, s in zip(ids, seqs):
                fh.write(f"@{i}\n{s}\n+\n{'I' * len(s)}\n")
        else:
            raise ValueError(f"unknown output format {fmt!r}")
