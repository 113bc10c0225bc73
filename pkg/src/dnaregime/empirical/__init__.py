"""Ingest references and reads, align them and report stratified error rates."""

from .align import AlignmentRecord, Event, align, banded_edit_distance
from .io import ParseError, ReadSet, iter_records, load_reads, write_sequences
from .profile import (
    ErrorProfileReport,
    ProfileConfig,
    ProfileCounts,
    classify_errors,
    composition_reports,
    count_reads,
    error_rates_by_gc,
    error_rates_by_runlength,
)
from .references import AssignConfig, ReferenceSet, assign_read, load_references
