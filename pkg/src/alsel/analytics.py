"""Batch-composition diagnostics and report emission.

For each selected batch: mean sentence length (words), mean symbol
count, and the number of unique words. A symbol is any character that
is not a Unicode letter, digit or whitespace. Unique words are counted
on case-folded tokens with punctuation stripped at token boundaries
(both normalizations can be switched off).

Reports render as CSV (means at one decimal place), JSON (full
precision) or plot-data TSV of cumulative-sentences vs BLEU-delta
series.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .selection import LengthDistribution

REPORT_FORMATS = ("csv", "json", "plotdata")
REPORT_COLUMNS = ("iteration", "strategy", "mean_len", "mean_symbols", "unique_words", "delta_bleu")


@dataclass(frozen=True)
class BatchStats:
    label: str
    strategy: str
    mean_sentence_length: float
    mean_symbol_count: float
    unique_words: int
    sentence_count: int

    def __post_init__(self):
        if self.sentence_count <= 0:
            raise ValueError("sentence_count must be positive")
        if self.mean_sentence_length < 0 or self.mean_symbol_count < 0:
            raise ValueError("means must be non-negative")


@dataclass(frozen=True)
class DistributionDivergence:
    per_bin_deviation: tuple[float, ...]
    total_variation: float


def _is_symbol(ch: str) -> bool:
    return not (ch.isalpha() or ch.isdigit() or ch.isspace())


def _word_token(token: str, case_fold: bool, strip_tokens: bool) -> str:
    word = token
    if strip_tokens:
        start, end = 0, len(word)
        while start < end and _is_symbol(word[start]):
            start += 1
        while end > start and _is_symbol(word[end - 1]):
            end -= 1
        # a token that is all punctuation still counts as itself
        if start < end:
            word = word[start:end]
    return word.casefold() if case_fold else word


def batch_stats(
    sentences: Sequence[str],
    label: str,
    strategy: str,
    case_fold: bool = True,
    strip_tokens: bool = True,
) -> BatchStats:
    """Length/symbol/vocabulary statistics for one selected batch."""
    if not sentences:
        raise ValueError("batch must be non-empty")
    total_tokens = 0
    total_symbols = 0
    words: set[str] = set()
    for sentence in sentences:
        tokens = sentence.split()
        total_tokens += len(tokens)
        total_symbols += sum(1 for ch in sentence if _is_symbol(ch))
        for token in tokens:
            words.add(_word_token(token, case_fold, strip_tokens))
    n = len(sentences)
    return BatchStats(
        label=label,
        strategy=strategy,
        mean_sentence_length=total_tokens / n,
        mean_symbol_count=total_symbols / n,
        unique_words=len(words),
        sentence_count=n,
    )


def divergence(
    selected_lengths: Sequence[int], reference: LengthDistribution
) -> DistributionDivergence:
    """Per-bin deviation and total variation distance from the reference.

    Selected lengths are binned by the reference edges (overflow clamps
    into the last bin, matching stratified selection).
    """
    if not selected_lengths:
        raise ValueError("selected lengths must be non-empty")
    counts = [0] * reference.num_bins
    for length in selected_lengths:
        counts[reference.bin_index(length)] += 1
    total = len(selected_lengths)
    deviations = tuple(
        abs(counts[b] / total - reference.proportions[b]) for b in range(reference.num_bins)
    )
    return DistributionDivergence(
        per_bin_deviation=deviations, total_variation=0.5 * sum(deviations)
    )


def _bleu_for(bleu: Mapping | None, row: BatchStats) -> float | None:
    if bleu is None:
        return None
    for key in ((row.strategy, row.label), row.label):
        if key in bleu:
            return float(bleu[key])
    return None


def emit_report(
    history: Sequence[BatchStats],
    fmt: str,
    bleu: Mapping | None = None,
) -> str:
    """Render batch statistics (plus optional ingested BLEU deltas) as text.

    ``bleu`` maps iteration labels, or (strategy, label) pairs, to BLEU
    deltas relative to the baseline. Output is deterministic and
    locale-independent.
    """
    if not history:
        raise ValueError("history must be non-empty")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(REPORT_COLUMNS)
        for row in history:
            delta = _bleu_for(bleu, row)
            writer.writerow(
                [
                    row.label,
                    row.strategy,
                    f"{row.mean_sentence_length:.1f}",
                    f"{row.mean_symbol_count:.1f}",
                    row.unique_words,
                    "" if delta is None else f"{delta:.1f}",
                ]
            )
        return buf.getvalue()
    if fmt == "json":
        rows = []
        for row in history:
            delta = _bleu_for(bleu, row)
            rows.append(
                {
                    "iteration": row.label,
                    "strategy": row.strategy,
                    "mean_len": row.mean_sentence_length,
                    "mean_symbols": row.mean_symbol_count,
                    "unique_words": row.unique_words,
                    "delta_bleu": delta,
                    "sentence_count": row.sentence_count,
                }
            )
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    if fmt == "plotdata":
        lines = ["series\tx\ty"]
        cumulative: dict[str, int] = {}
        for row in history:
            cumulative[row.strategy] = cumulative.get(row.strategy, 0) + row.sentence_count
            delta = _bleu_for(bleu, row)
            if delta is not None:
                lines.append(f"{row.strategy}\t{cumulative[row.strategy]}\t{delta!r}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r} (expected csv, json or plotdata)")
