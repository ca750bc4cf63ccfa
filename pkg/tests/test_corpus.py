import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alsel.corpus import (
    CleanReport,
    ParallelCorpus,
    clean,
    load_parallel,
    make_record,
    materialize_split,
    split_folds,
)
from alsel.errors import FormatError, InfeasibleError

from conftest import synth_corpus, synth_sentence


# --- ingestion ---------------------------------------------------------


def test_load_tsv_assigns_sequential_ids(tmp_path):
    path = tmp_path / "corpus.tsv"
    path.write_text("hello world\thola mundo\ngood day\tbuen dia\nbye\tadios\n", encoding="utf-8")
    corpus = load_parallel(path, "tsv")
    assert len(corpus) == 3
    assert corpus.ids() == [0, 1, 2]
    assert corpus.records[0].source == "hello world"
    assert corpus.records[0].target == "hola mundo"
    assert corpus.records[0].source_len == 2


def test_load_tsv_rejects_wrong_column_count(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tb\nc\n", encoding="utf-8")
    with pytest.raises(FormatError, match="bad.tsv:2"):
        load_parallel(path, "tsv")


def test_load_jsonl_missing_source_errors_with_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"source": "a b", "target": "x"}\n{"target": "y"}\n', encoding="utf-8"
    )
    with pytest.raises(FormatError, match="corpus.jsonl:2"):
        load_parallel(path, "jsonl")


def test_load_jsonl_null_target_kept_as_empty(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"source": "a b", "target": null}\n', encoding="utf-8")
    corpus = load_parallel(path, "jsonl")
    assert corpus.records[0].target == ""


def test_load_jsonl_duplicate_explicit_id_errors(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"id": 4, "source": "a", "target": "x"}\n{"id": 4, "source": "b", "target": "y"}\n',
        encoding="utf-8",
    )
    with pytest.raises(FormatError, match="duplicate id 4"):
        load_parallel(path, "jsonl")


def test_load_jsonl_honors_explicit_ids(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"id": 5, "source": "a", "target": "x"}\n{"id": 9, "source": "b", "target": "y"}\n',
        encoding="utf-8",
    )
    assert load_parallel(path, "jsonl").ids() == [5, 9]


def test_load_large_tsv_row_count(tmp_path):
    path = tmp_path / "big.tsv"
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(272_544):
            fh.write(f"src {i}\ttgt {i}\n")
    assert len(load_parallel(path, "tsv")) == 272_544


def test_load_missing_file_errors():
    with pytest.raises(FormatError):
        load_parallel("/nonexistent/corpus.tsv", "tsv")


# --- cleaning ----------------------------------------------------------


def test_clean_removes_overlong_at_boundary():
    long_source = " ".join(["w"] * 101)
    ok_source = " ".join(["w"] * 100)
    corpus = ParallelCorpus(
        (make_record(0, long_source, "short target"), make_record(1, ok_source, "short target"))
    )
    cleaned, report = clean(corpus, max_words=100)
    assert report.removed_overlong == 1
    assert cleaned.ids() == [1]


def test_clean_removes_identical_pairs():
    corpus = ParallelCorpus(
        (make_record(0, "same text", "same text"), make_record(1, "same text", "different"))
    )
    cleaned, report = clean(corpus, max_words=100)
    assert report.removed_identical == 1
    assert cleaned.ids() == [1]


def test_clean_removes_missing_and_empty_targets():
    corpus = ParallelCorpus((make_record(0, "a b", ""), make_record(1, "c d", "   ")))
    _, report = clean(corpus, max_words=100)
    assert report.removed_missing_target == 2
    assert report.output_count == 0


def test_clean_keeps_clean_corpus_identical(small_corpus):
    cleaned, report = clean(small_corpus, max_words=100)
    assert cleaned.records == small_corpus.records
    assert (
        report.removed_missing_target
        == report.removed_overlong
        == report.removed_identical
        == 0
    )


def test_clean_scope_restricts_length_rule():
    long_target = " ".join(["t"] * 150)
    corpus = ParallelCorpus((make_record(0, "short source", long_target),))
    _, both = clean(corpus, max_words=100, scope="both")
    _, src_only = clean(corpus, max_words=100, scope="source")
    assert both.removed_overlong == 1
    assert src_only.removed_overlong == 0


def test_clean_retains_duplicate_full_pairs():
    # repeated (source, target) rows are legitimate data; only
    # source==target rows fall under the identical-pair rule
    corpus = ParallelCorpus(
        (make_record(0, "twice told", "dos veces"), make_record(1, "twice told", "dos veces"))
    )
    cleaned, report = clean(corpus, max_words=100)
    assert len(cleaned) == 2
    assert report.removed_identical == 0


def test_clean_report_must_balance():
    with pytest.raises(ValueError):
        CleanReport(
            input_count=10,
            removed_missing_target=1,
            removed_overlong=1,
            removed_identical=1,
            output_count=9,
        )


@st.composite
def corpora_with_violations(draw):
    rng = random.Random(draw(st.integers(0, 10_000)))
    rows = []
    n = draw(st.integers(1, 60))
    for i in range(n):
        kind = rng.choice(["ok", "ok", "ok", "missing", "overlong", "identical"])
        if kind == "missing":
            rows.append(make_record(i, synth_sentence(rng), ""))
        elif kind == "overlong":
            rows.append(make_record(i, " ".join(["w"] * (rng.randint(21, 40))), "tgt ok"))
        elif kind == "identical":
            text = synth_sentence(rng, hi=10)
            rows.append(make_record(i, text, text))
        else:
            rows.append(make_record(i, synth_sentence(rng, hi=15), f"t{i} ok"))
    return ParallelCorpus(tuple(rows))


@settings(max_examples=60, deadline=None)
@given(corpora_with_violations())
def test_clean_conservation_and_idempotence(corpus):
    cleaned, report = clean(corpus, max_words=20)
    assert report.input_count == len(corpus)
    assert report.output_count == len(cleaned)
    assert (
        report.input_count
        - report.removed_missing_target
        - report.removed_overlong
        - report.removed_identical
        == report.output_count
    )
    again, second = clean(cleaned, max_words=20)
    assert again.records == cleaned.records
    assert second.output_count == second.input_count


# --- fold splitting ----------------------------------------------------


def test_split_folds_even_division():
    corpus = synth_corpus(10)
    spec = split_folds(corpus, k=5, seed=11)
    assert spec.fold_sizes() == [2, 2, 2, 2, 2]


def test_split_folds_determinism():
    corpus = synth_corpus(123)
    a = split_folds(corpus, k=5, seed=99)
    b = split_folds(corpus, k=5, seed=99)
    assert a.assignments == b.assignments
    c = split_folds(corpus, k=5, seed=100)
    assert a.assignments != c.assignments


def test_split_folds_rejects_k_above_corpus_size():
    with pytest.raises(InfeasibleError):
        split_folds(synth_corpus(3), k=4, seed=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200), st.integers(1, 12), st.integers(0, 2**32))
def test_split_folds_partition_property(n, k, seed):
    if k > n:
        k = n
    corpus = synth_corpus(n, seed=1)
    spec = split_folds(corpus, k=k, seed=seed)
    assert sorted(spec.assignments) == corpus.ids()
    sizes = spec.fold_sizes()
    assert sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1


# --- materialization ---------------------------------------------------


def test_materialize_split_exhausts_to_empty_pool():
    corpus = synth_corpus(7)
    spec = split_folds(corpus, k=7, seed=1)
    split = materialize_split(corpus, spec, test_fold=0, train_size=5, val_size=1, seed=2)
    assert len(split.test) == 1
    assert len(split.train) == 5
    assert len(split.validation) == 1
    assert len(split.pool) == 0
    assert split.oracle == {}


def test_materialize_split_partition_and_oracle(small_corpus):
    spec = split_folds(small_corpus, k=5, seed=3)
    split = materialize_split(small_corpus, spec, test_fold=2, train_size=20, val_size=5, seed=4)
    parts = [
        set(split.train.ids()),
        set(split.validation.ids()),
        set(split.test.ids()),
        {r.id for r in split.pool.records},
    ]
    union = set()
    for part in parts:
        assert not union & part
        union |= part
    assert union == set(small_corpus.ids())
    # pool targets withheld: only the sealed oracle has them
    originals = {r.id: r.target for r in small_corpus}
    for rec in split.pool.records:
        assert rec.target is None
        assert split.oracle[rec.id] == originals[rec.id]


def test_materialize_split_determinism(small_corpus):
    spec = split_folds(small_corpus, k=5, seed=3)
    a = materialize_split(small_corpus, spec, 0, 20, 5, seed=8)
    b = materialize_split(small_corpus, spec, 0, 20, 5, seed=8)
    assert a.train.ids() == b.train.ids()
    assert a.validation.ids() == b.validation.ids()
    assert [r.id for r in a.pool.records] == [r.id for r in b.pool.records]


def test_materialize_split_infeasible_sizes_report_counts(small_corpus):
    spec = split_folds(small_corpus, k=5, seed=3)
    with pytest.raises(InfeasibleError, match="needs 49 .* 40"):
        materialize_split(small_corpus, spec, 0, train_size=45, val_size=4, seed=0)
