import json
import random

import pytest

from alsel.al_loop import (
    ExperimentDir,
    ExperimentState,
    IterationManifest,
    LoopConfig,
    MemoryOracle,
    run_iteration,
    should_stop,
)
from alsel.corpus import (
    MonoPool,
    ParallelCorpus,
    make_record,
    materialize_split,
    split_folds,
)
from alsel.errors import IntegrityError, StateError
from alsel.rng import derive_seed
from alsel.scorers import MockBackend, score_pool
from alsel.selection import select_top_k

from conftest import synth_corpus


def build_experiment(root, n=60, seed=5, train=30, val=5, k=5, strategy="rttl", budget=6):
    corpus = synth_corpus(n, seed=seed)
    spec = split_folds(corpus, k, derive_seed(seed, "folds"))
    split = materialize_split(corpus, spec, 0, train, val, derive_seed(seed, "split", 0))
    exp = ExperimentDir.initialize(
        root,
        split,
        base_seed=seed,
        split_params={"k": k, "test_fold": 0, "train_size": train, "val_size": val},
    )
    loop = LoopConfig(strategy=strategy, budget=budget, base_seed=seed)
    state = exp.resume(loop=loop, backend=MockBackend())
    return exp, state


def memory_state(labelled_n, pool_n, strategy="random", budget=10, seed=3):
    rng = random.Random(seed)
    labelled = ParallelCorpus(
        tuple(make_record(i, f"s {i}", f"t {i}") for i in range(labelled_n))
    )
    pool_records = tuple(
        make_record(labelled_n + i, " ".join(f"p{rng.randint(0, 9)}" for _ in range(rng.randint(1, 4))), None)
        for i in range(pool_n)
    )
    pool = MonoPool(pool_records)
    oracle = MemoryOracle({r.id: f"gold {r.id}" for r in pool_records})
    config = LoopConfig(strategy=strategy, budget=budget, base_seed=seed)
    return ExperimentState(
        iteration=0,
        labelled=labelled,
        pool=pool,
        config=config,
        oracle=oracle,
        backend=MockBackend(),
    )


# --- run_iteration -------------------------------------------------------


def test_iteration_grows_labelled_and_consumes(tmp_path):
    exp, state = build_experiment(tmp_path / "exp")
    outcome = exp.step(state)
    m = outcome.manifest
    assert m.labelled_before == 30
    assert m.labelled_after == 36
    assert len(m.selected) == 6
    assert outcome.state.pool.available_count() == 13 - 6
    assert outcome.state.iteration == 1
    assert outcome.state.history == (m,)
    # annotated targets came from the sealed oracle
    new_ids = {i for i, _ in m.selected}
    labelled_ids = set(outcome.state.labelled.ids())
    assert new_ids <= labelled_ids
    for rec in outcome.state.labelled:
        assert rec.target is not None


def test_iteration_budget_clamps_to_available():
    state = memory_state(labelled_n=10, pool_n=3, strategy="random", budget=5000)
    outcome = run_iteration(state)
    assert len(outcome.manifest.selected) == 3
    assert outcome.state.pool.available_count() == 0


def test_iteration_20k_from_100k_pool():
    state = memory_state(labelled_n=30_000, pool_n=100_000, strategy="random", budget=20_000)
    outcome = run_iteration(state)
    assert outcome.manifest.labelled_before == 30_000
    assert outcome.manifest.labelled_after == 50_000
    assert outcome.state.pool.available_count() == 80_000


def test_iteration_requires_backend_for_scored_strategies():
    state = memory_state(10, 5, strategy="rttl")
    state = ExperimentState(
        iteration=0,
        labelled=state.labelled,
        pool=state.pool,
        config=state.config,
        oracle=state.oracle,
        backend=None,
    )
    with pytest.raises(StateError, match="backend"):
        run_iteration(state)


def test_iteration_oracle_missing_id_is_hard_error():
    state = memory_state(10, 5, strategy="random", budget=3)
    broken = MemoryOracle({})  # sealed store lost its rows
    state = ExperimentState(
        iteration=0,
        labelled=state.labelled,
        pool=state.pool,
        config=state.config,
        oracle=broken,
        backend=None,
    )
    with pytest.raises(IntegrityError, match="missing id"):
        run_iteration(state)


def test_iteration_errors_when_stopping_met():
    state = memory_state(10, 8, strategy="random", budget=4)
    state = ExperimentState(
        iteration=0,
        labelled=state.labelled,
        pool=state.pool,
        config=LoopConfig(strategy="random", budget=4, base_seed=3, stop={"max_iterations": 1}),
        oracle=state.oracle,
        backend=None,
    )
    first = run_iteration(state)
    with pytest.raises(StateError, match="stopping criterion"):
        run_iteration(first.state)


def test_srttl_iteration_records_fill_report(tmp_path):
    exp, state = build_experiment(tmp_path / "exp", strategy="srttl")
    outcome = exp.step(state)
    assert outcome.manifest.fill_report is not None
    assert sum(row["filled"] for row in outcome.manifest.fill_report) == len(
        outcome.manifest.selected
    )
    data = json.loads(exp.manifest_path(0).read_text())
    assert data["fill_report"] is not None


def test_conservation_across_iterations(tmp_path):
    exp, state = build_experiment(tmp_path / "exp", budget=4)
    base_labelled = len(state.labelled)
    pool_total = len(state.pool.records)
    for _ in range(3):
        outcome = exp.step(state)
        state = outcome.state
        consumed = len(state.pool.consumed_ids)
        assert len(state.labelled) == base_labelled + consumed
        assert state.pool.available_count() + consumed == pool_total
        assert len(state.labelled) == outcome.manifest.labelled_after


# --- should_stop ----------------------------------------------------------


def _fake_manifest(i, batch, labelled_before):
    return IterationManifest(
        iteration=i,
        strategy="random",
        seed=0,
        budget=batch,
        selected=tuple((j, None) for j in range(batch)),
        labelled_before=labelled_before,
        labelled_after=labelled_before + batch,
        score_sha256=None,
        oracle_sha256="0" * 64,
        split_sha256={},
        checkpoint_sha256="0" * 64,
    )


def test_should_stop_total_budget():
    history = []
    labelled = 30_000
    for i in range(5):
        history.append(_fake_manifest(i, 5_000, labelled))
        labelled += 5_000
    state = memory_state(5, 5)
    state = ExperimentState(
        iteration=5,
        labelled=state.labelled,
        pool=state.pool,
        config=state.config,
        oracle=state.oracle,
        history=tuple(history),
    )
    assert should_stop(state, {"total_budget": 25_000}) is True
    assert should_stop(state, {"total_budget": 25_001}) is False


def test_should_stop_max_iterations_and_pool():
    state = memory_state(5, 5)
    one = ExperimentState(
        iteration=1,
        labelled=state.labelled,
        pool=state.pool,
        config=state.config,
        oracle=state.oracle,
        history=(_fake_manifest(0, 2, 5),),
    )
    assert should_stop(one, {"max_iterations": 1}) is True
    assert should_stop(one, {"pool_exhausted": True}) is False
    with pytest.raises(ValueError):
        should_stop(one, {"bogus": 1})


# --- determinism and resumption -------------------------------------------


def run_n(root, n_iters, strategy="rttl", seed=11, budget=4):
    exp, state = build_experiment(root, seed=seed, strategy=strategy, budget=budget)
    for _ in range(n_iters):
        state = exp.step(state).state
    return exp


def test_two_runs_have_identical_manifest_chains(tmp_path):
    a = run_n(tmp_path / "a", 3)
    b = run_n(tmp_path / "b", 3)
    for i in range(3):
        assert a.manifest_path(i).read_bytes() == b.manifest_path(i).read_bytes()
        assert a.score_path(i).read_bytes() == b.score_path(i).read_bytes()


def test_resume_replays_identically(tmp_path):
    continuous = run_n(tmp_path / "cont", 3)

    interrupted = ExperimentDir(tmp_path / "stop")
    exp, state = build_experiment(tmp_path / "stop", seed=11, strategy="rttl", budget=4)
    for _ in range(2):
        state = exp.step(state).state
    # fresh process: reconstruct from disk, then run the third iteration
    resumed = ExperimentDir(tmp_path / "stop")
    loop = LoopConfig(strategy="rttl", budget=4, base_seed=11)
    state2 = resumed.resume(loop=loop, backend=MockBackend())
    assert state2.iteration == 2
    resumed.step(state2)
    assert resumed.manifest_path(2).read_bytes() == continuous.manifest_path(2).read_bytes()


def test_resume_detects_tampered_score_file(tmp_path):
    exp = run_n(tmp_path / "exp", 2)
    path = exp.score_path(1)
    path.write_text(path.read_text().replace("rttl", "ttlr"), encoding="utf-8")
    with pytest.raises(IntegrityError, match="manifest 1"):
        ExperimentDir(tmp_path / "exp").resume()


def test_resume_empty_directory_errors(tmp_path):
    with pytest.raises(StateError):
        ExperimentDir(tmp_path / "empty").resume()


def test_resume_detects_manifest_gap(tmp_path):
    exp = run_n(tmp_path / "exp", 3)
    exp.manifest_path(1).unlink()
    with pytest.raises(IntegrityError, match="gaps"):
        ExperimentDir(tmp_path / "exp").resume()


def test_step_refuses_duplicate_iteration(tmp_path):
    exp, state = build_experiment(tmp_path / "exp")
    exp.step(state)
    with pytest.raises(StateError, match="already exists"):
        exp.step(state)


def test_validation_and_test_checksums_stable(tmp_path):
    exp, state = build_experiment(tmp_path / "exp", budget=3)
    config = exp.load_config()
    for _ in range(3):
        state = exp.step(state).state
    manifests = exp.read_manifests()
    for m in manifests:
        assert m.split_sha256["validation"] == config["checksums"]["validation"]
        assert m.split_sha256["test"] == config["checksums"]["test"]
    from alsel.ioutil import sha256_file

    assert sha256_file(exp.split_path("validation")) == config["checksums"]["validation"]
    assert sha256_file(exp.split_path("test")) == config["checksums"]["test"]


def test_oracle_tamper_detected_at_annotation(tmp_path):
    exp, state = build_experiment(tmp_path / "exp")
    text = exp.oracle_path.read_text(encoding="utf-8")
    exp.oracle_path.write_text(text.replace("t", "u", 1), encoding="utf-8")
    with pytest.raises(IntegrityError, match="checksum mismatch"):
        exp.step(state)


def test_scoring_and_selection_survive_missing_oracle(tmp_path):
    exp, state = build_experiment(tmp_path / "exp")
    exp.oracle_path.unlink()
    fresh = exp.resume(loop=state.config, backend=MockBackend())
    run = score_pool(fresh.pool, MockBackend(), "rttl")
    batch = select_top_k(list(run.candidates), 5)
    assert len(batch.selected_ids) == 5
    with pytest.raises(IntegrityError, match="missing"):
        exp.step(fresh)


def test_manifest_round_trips_through_json(tmp_path):
    exp, state = build_experiment(tmp_path / "exp", strategy="qe")
    manifest = exp.step(state).manifest
    data = json.loads(exp.manifest_path(0).read_text())
    rebuilt = IterationManifest.from_dict(data)
    assert rebuilt.to_dict() == manifest.to_dict()
