"""Parallel-corpus ingestion, cleaning and deterministic splitting.

Lengths are whitespace-token counts of the raw (pre-subword) text.
Cleaning applies exactly three rules: missing/empty target, more than
``max_words`` tokens on either side, and source identical to target.
Fold assignment and the train/validation/pool split are Fisher-Yates
shuffles on the engine's named PRNG, so the same (corpus, seed) always
produces the same split on any platform.

Pool targets never travel with the pool: ``materialize_split`` moves
them into a sealed oracle mapping that only the annotation step of the
experiment loop is allowed to read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FormatError, InfeasibleError
from .ioutil import jsonl_text, read_jsonl
from .rng import SplitMix64


def token_count(text: str) -> int:
    """Number of whitespace-delimited tokens (Unicode whitespace)."""
    return len(text.split())


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence with an optional reference translation.

    ``target`` is None for pool sentences awaiting translation.
    ``source_len`` always equals the whitespace-token count of ``source``.
    """

    id: int
    source: str
    target: str | None
    source_len: int

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"record id must be non-negative, got {self.id}")
        if self.source_len < 1 or self.source_len != token_count(self.source):
            raise ValueError(
                f"record {self.id}: source_len {self.source_len} does not match "
                f"token count {token_count(self.source)}"
            )


def make_record(rec_id: int, source: str, target: str | None) -> SentenceRecord:
    return SentenceRecord(id=rec_id, source=source, target=target, source_len=token_count(source))


@dataclass(frozen=True)
class ParallelCorpus:
    """Ordered labelled sentences; ids strictly increase in storage order."""

    records: tuple[SentenceRecord, ...]
    provenance: str = ""

    def __post_init__(self):
        prev = -1
        for rec in self.records:
            if rec.target is None:
                raise ValueError(f"record {rec.id}: parallel corpus requires a target")
            if rec.id <= prev:
                raise ValueError(f"record ids must strictly increase (saw {rec.id} after {prev})")
            prev = rec.id

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> list[int]:
        return [rec.id for rec in self.records]


@dataclass(frozen=True)
class MonoPool:
    """Unlabelled pool plus the ids already selected in prior iterations."""

    records: tuple[SentenceRecord, ...]
    consumed_ids: frozenset[int] = frozenset()

    def __post_init__(self):
        ids = set()
        for rec in self.records:
            if rec.target is not None:
                raise ValueError(f"record {rec.id}: pool records must not carry targets")
            ids.add(rec.id)
        if len(ids) != len(self.records):
            raise ValueError("pool record ids must be unique")
        if not self.consumed_ids <= ids:
            raise ValueError("consumed_ids must be a subset of pool record ids")

    def __len__(self) -> int:
        return len(self.records)

    def available(self) -> list[SentenceRecord]:
        """Unconsumed records in storage order."""
        return [rec for rec in self.records if rec.id not in self.consumed_ids]

    def available_count(self) -> int:
        return len(self.records) - len(self.consumed_ids)

    def consume(self, ids: Iterable[int]) -> "MonoPool":
        new_ids = frozenset(ids)
        overlap = new_ids & self.consumed_ids
        if overlap:
            raise ValueError(f"ids already consumed: {sorted(overlap)[:5]}")
        return replace(self, consumed_ids=self.consumed_ids | new_ids)


@dataclass(frozen=True)
class CleanReport:
    input_count: int
    removed_missing_target: int
    removed_overlong: int
    removed_identical: int
    output_count: int

    def __post_init__(self):
        expected = (
            self.input_count
            - self.removed_missing_target
            - self.removed_overlong
            - self.removed_identical
        )
        if self.output_count != expected:
            raise ValueError(
                f"clean report does not balance: {self.output_count} != {expected}"
            )

    def as_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "removed_missing_target": self.removed_missing_target,
            "removed_overlong": self.removed_overlong,
            "removed_identical": self.removed_identical,
            "output_count": self.output_count,
        }


@dataclass(frozen=True)
class FoldSpec:
    """Seeded assignment of every corpus id to one of k folds."""

    k: int
    seed: int
    assignments: Mapping[int, int]

    def fold_ids(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for fold in self.assignments.values():
            sizes[fold] += 1
        return sizes


@dataclass(frozen=True)
class SplitSet:
    """Disjoint train/validation/test/pool partition of a cleaned corpus.

    ``oracle`` holds the withheld pool targets; it is written to a
    separate sealed store so selection code never sees them.
    """

    train: ParallelCorpus
    validation: ParallelCorpus
    test: ParallelCorpus
    pool: MonoPool
    oracle: Mapping[int, str]


# --- ingestion ---------------------------------------------------------


def load_parallel(path: str | Path, fmt: str) -> ParallelCorpus:
    """Load a parallel corpus from a TSV or JSONL file, no cleaning applied.

    TSV rows are ``source<TAB>target``; JSONL rows are objects with
    ``source``, nullable ``target`` and an optional ``id``. Without
    explicit ids, records get ids 0..n-1 in file order. A null or
    missing target is stored as the empty string and removed later by
    ``clean``.
    """
    path = Path(path)
    if fmt == "tsv":
        records = _load_tsv(path)
    elif fmt == "jsonl":
        records = _load_jsonl(path)
    else:
        raise FormatError(f"unknown corpus format {fmt!r} (expected tsv or jsonl)")
    return ParallelCorpus(records=tuple(records), provenance=str(path))


def _load_tsv(path: Path) -> list[SentenceRecord]:
    records = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.rstrip("\n").rstrip("\r").split("\t")
            if len(fields) != 2:
                raise FormatError(
                    f"{path}:{lineno}: expected 2 tab-separated columns, got {len(fields)}"
                )
            source = fields[0].strip()
            target = fields[1].strip()
            if not source:
                raise FormatError(f"{path}:{lineno}: empty source")
            records.append(make_record(len(records), source, target))
    return records


def _load_jsonl(path: Path) -> list[SentenceRecord]:
    records: list[SentenceRecord] = []
    explicit_ids: bool | None = None
    last_id = -1
    if not path.exists():
        raise FormatError(f"cannot read {path}: no such file")
    for lineno, row in read_jsonl(path):
        if not isinstance(row, dict):
            raise FormatError(f"{path}:{lineno}: expected a JSON object")
        if "source" not in row:
            raise FormatError(f"{path}:{lineno}: missing source field")
        source = row["source"]
        if not isinstance(source, str) or not source.strip():
            raise FormatError(f"{path}:{lineno}: source must be a non-empty string")
        target = row.get("target")
        if target is not None and not isinstance(target, str):
            raise FormatError(f"{path}:{lineno}: target must be a string or null")

        has_id = "id" in row
        if explicit_ids is None:
            explicit_ids = has_id
        elif explicit_ids != has_id:
            raise FormatError(f"{path}:{lineno}: id present on some rows but not all")
        if has_id:
            rec_id = row["id"]
            if not isinstance(rec_id, int) or rec_id < 0:
                raise FormatError(f"{path}:{lineno}: id must be a non-negative integer")
            if rec_id == last_id:
                raise FormatError(f"{path}:{lineno}: duplicate id {rec_id}")
            if rec_id < last_id:
                raise FormatError(f"{path}:{lineno}: ids must increase in file order")
            last_id = rec_id
        else:
            rec_id = len(records)
        records.append(make_record(rec_id, source.strip(), "" if target is None else target.strip()))
    return records


# --- cleaning ----------------------------------------------------------


def clean(
    corpus: ParallelCorpus, max_words: int, scope: str = "both"
) -> tuple[ParallelCorpus, CleanReport]:
    """Apply the three cleaning rules, preserving record order and ids.

    A record is removed by the first rule it violates: missing/empty
    target, then more than ``max_words`` tokens (on the sides named by
    ``scope``: both/source/target), then source equal to target after
    trimming. Cleaning the output again removes nothing.
    """
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    if scope not in ("both", "source", "target"):
        raise ValueError(f"unknown length scope {scope!r}")

    kept = []
    missing = overlong = identical = 0
    for rec in corpus:
        target = rec.target or ""
        if not target.strip():
            missing += 1
            continue
        too_long_src = scope in ("both", "source") and rec.source_len > max_words
        too_long_tgt = scope in ("both", "target") and token_count(target) > max_words
        if too_long_src or too_long_tgt:
            overlong += 1
            continue
        if rec.source.strip() == target.strip():
            identical += 1
            continue
        kept.append(rec)

    report = CleanReport(
        input_count=len(corpus),
        removed_missing_target=missing,
        removed_overlong=overlong,
        removed_identical=identical,
        output_count=len(kept),
    )
    return ParallelCorpus(records=tuple(kept), provenance=corpus.provenance), report


# --- splitting ---------------------------------------------------------


def split_folds(corpus: ParallelCorpus, k: int, seed: int) -> FoldSpec:
    """Assign every record to one of k folds by permutation-then-chunk.

    Fold sizes differ by at most one; the first (n mod k) folds take the
    extra record. Deterministic for fixed (corpus, k, seed).
    """
    if k < 1:
        raise InfeasibleError("fold count must be >= 1")
    n = len(corpus)
    if k > n:
        raise InfeasibleError(f"cannot make {k} folds from {n} records")

    ids = corpus.ids()
    SplitMix64(seed).shuffle(ids)
    q, r = divmod(n, k)
    assignments: dict[int, int] = {}
    pos = 0
    for fold in range(k):
        size = q + 1 if fold < r else q
        for rec_id in ids[pos : pos + size]:
            assignments[rec_id] = fold
        pos += size
    return FoldSpec(k=k, seed=seed, assignments=assignments)


def materialize_split(
    corpus: ParallelCorpus,
    spec: FoldSpec,
    test_fold: int,
    train_size: int,
    val_size: int,
    seed: int,
) -> SplitSet:
    """Carve train/validation/test/pool out of a cleaned corpus.

    The test fold is taken verbatim; a seeded shuffle of the remainder
    assigns ``train_size`` records to train, ``val_size`` to validation
    and the rest to the pool. Pool targets are moved into the sealed
    oracle mapping.
    """
    if not (0 <= test_fold < spec.k):
        raise ValueError(f"test_fold {test_fold} out of range for k={spec.k}")
    if train_size < 0 or val_size < 0:
        raise ValueError("train_size and val_size must be non-negative")
    corpus_ids = set(corpus.ids())
    if set(spec.assignments) != corpus_ids:
        raise ValueError("fold spec does not cover exactly the corpus ids")

    test_records = tuple(r for r in corpus if spec.assignments[r.id] == test_fold)
    rest = [r for r in corpus if spec.assignments[r.id] != test_fold]
    needed = train_size + val_size
    if needed > len(rest):
        raise InfeasibleError(
            f"train+validation needs {needed} records but only {len(rest)} are outside the test fold"
        )

    rest_ids = [r.id for r in rest]
    SplitMix64(seed).shuffle(rest_ids)
    train_ids = set(rest_ids[:train_size])
    val_ids = set(rest_ids[train_size : train_size + val_size])

    by_id = {r.id: r for r in rest}
    train_records = tuple(by_id[i] for i in sorted(train_ids))
    val_records = tuple(by_id[i] for i in sorted(val_ids))
    pool_source = [by_id[i] for i in sorted(set(rest_ids) - train_ids - val_ids)]

    oracle = {r.id: r.target for r in pool_source}
    pool_records = tuple(replace(r, target=None) for r in pool_source)

    prov = corpus.provenance
    return SplitSet(
        train=ParallelCorpus(train_records, provenance=f"{prov}#train"),
        validation=ParallelCorpus(val_records, provenance=f"{prov}#validation"),
        test=ParallelCorpus(test_records, provenance=f"{prov}#test"),
        pool=MonoPool(pool_records),
        oracle=oracle,
    )


# --- serialization -----------------------------------------------------


def corpus_jsonl(corpus: ParallelCorpus) -> str:
    return jsonl_text({"id": r.id, "source": r.source, "target": r.target} for r in corpus)


def pool_jsonl(pool: MonoPool) -> str:
    return jsonl_text({"id": r.id, "source": r.source, "target": None} for r in pool.records)


def oracle_jsonl(oracle: Mapping[int, str]) -> str:
    return jsonl_text({"id": i, "target": oracle[i]} for i in sorted(oracle))


def read_corpus_jsonl(path: Path, provenance: str = "") -> ParallelCorpus:
    records = []
    for lineno, row in read_jsonl(path):
        try:
            records.append(make_record(row["id"], row["source"], row["target"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad corpus row ({exc})") from exc
    return ParallelCorpus(tuple(records), provenance=provenance or str(path))


def read_pool_jsonl(path: Path, consumed_ids: Iterable[int] = ()) -> MonoPool:
    records = []
    for lineno, row in read_jsonl(path):
        try:
            records.append(make_record(row["id"], row["source"], None))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad pool row ({exc})") from exc
    return MonoPool(tuple(records), consumed_ids=frozenset(consumed_ids))


def read_oracle_jsonl(path: Path) -> dict[int, str]:
    oracle: dict[int, str] = {}
    for lineno, row in read_jsonl(path):
        if not isinstance(row, dict) or "id" not in row or "target" not in row:
            raise FormatError(f"{path}:{lineno}: bad oracle row")
        oracle[row["id"]] = row["target"]
    return oracle
