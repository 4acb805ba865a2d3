"""Segmental fingerspelling recognition on synthetic corpora."""

from ._core import (
    BigramLm,
    DataError,
    Error,
    UsageError,
    edit_distance,
    letter_error_rate,
    log_partition,
    run_plan,
    synth_corpus,
    viterbi,
)

__all__ = [
    "BigramLm",
    "DataError",
    "Error",
    "UsageError",
    "edit_distance",
    "letter_error_rate",
    "log_partition",
    "run_plan",
    "synth_corpus",
    "viterbi",
]
