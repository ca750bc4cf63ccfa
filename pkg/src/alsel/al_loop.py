"""The iteration cycle: score the pool, select a batch, annotate, grow.

Model training happens outside the engine: each iteration emits a
checkpoint (labelled-set snapshot plus the verbatim training-config
blob) for external training, and scoring runs against a backend that
wraps whatever models resulted. The annotator is simulated by a sealed
store of withheld pool targets; only the annotation step may read it,
which keeps label leakage impossible by construction.

Every iteration appends one manifest. Manifests are canonical JSON and
contain everything needed to audit or replay the run; elapsed time is
logged to a sidecar so manifest chains stay byte-identical across
re-runs with the same configuration.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

from .corpus import (
    MonoPool,
    ParallelCorpus,
    SentenceRecord,
    SplitSet,
    corpus_jsonl,
    oracle_jsonl,
    pool_jsonl,
    read_corpus_jsonl,
    read_oracle_jsonl,
    read_pool_jsonl,
)
from .errors import IntegrityError, StateError
from .ioutil import canonical_json, pretty_json, sha256_file, sha256_text, write_text
from .rng import RNG_ALGORITHM, derive_seed
from .scorers import ScorerBackend, ScoringRun, score_pool
from .selection import (
    SelectionBatch,
    build_length_histogram,
    select_random,
    select_stratified,
    select_top_k,
)

STRATEGIES = ("random", "rttl", "qe", "srttl")
CONFIG_SCHEMA = "alsel-experiment/v1"


class OracleStore(Protocol):
    """Sealed store of withheld pool targets (the simulated annotator)."""

    def checksum(self) -> str: ...

    def targets(self, ids: Sequence[int]) -> dict[int, str]: ...


class MemoryOracle:
    def __init__(self, mapping: Mapping[int, str]):
        self._mapping = dict(mapping)
        self._checksum = sha256_text(oracle_jsonl(self._mapping))

    def checksum(self) -> str:
        return self._checksum

    def targets(self, ids: Sequence[int]) -> dict[int, str]:
        out = {}
        for i in ids:
            if i not in self._mapping:
                raise IntegrityError(f"oracle store missing id {i}: corrupt experiment")
            out[i] = self._mapping[i]
        return out


class FileOracle:
    """Oracle backed by oracle.jsonl; verifies its checksum on every read."""

    def __init__(self, path: Path, expected_sha256: str):
        self.path = Path(path)
        self.expected_sha256 = expected_sha256

    def _verify(self) -> None:
        if not self.path.exists():
            raise IntegrityError(f"oracle store {self.path} is missing")
        actual = sha256_file(self.path)
        if actual != self.expected_sha256:
            raise IntegrityError(
                f"oracle store {self.path} checksum mismatch: {actual} != {self.expected_sha256}"
            )

    def checksum(self) -> str:
        self._verify()
        return self.expected_sha256

    def targets(self, ids: Sequence[int]) -> dict[int, str]:
        self._verify()
        mapping = read_oracle_jsonl(self.path)
        out = {}
        for i in ids:
            if i not in mapping:
                raise IntegrityError(f"oracle store missing id {i}: corrupt experiment")
            out[i] = mapping[i]
        return out


@dataclass(frozen=True)
class LoopConfig:
    strategy: str
    budget: int
    base_seed: int
    batch_size: int = 64
    bin_width: int = 10
    reference: str = "train"
    stop: Mapping[str, Any] | None = None
    training_config: Any = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r} (expected one of {STRATEGIES})")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.reference not in ("train", "test"):
            raise ValueError("reference must be 'train' or 'test'")


@dataclass(frozen=True)
class IterationManifest:
    iteration: int
    strategy: str
    seed: int
    budget: int
    selected: tuple[tuple[int, float | None], ...]
    labelled_before: int
    labelled_after: int
    score_sha256: str | None
    oracle_sha256: str
    split_sha256: Mapping[str, str]
    checkpoint_sha256: str
    rng_algorithm: str = RNG_ALGORITHM
    backend: str | None = None
    score_batches: int | None = None
    request_sha256: str | None = None
    response_sha256: str | None = None
    fill_report: tuple[dict, ...] | None = None
    delta_bleu: float | None = None
    wall_clock_seconds: float | None = None  # sidecar-only, never serialized

    def __post_init__(self):
        if self.labelled_after - self.labelled_before != len(self.selected):
            raise ValueError("manifest sizes do not match the selected batch")

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "strategy": self.strategy,
            "seed": self.seed,
            "budget": self.budget,
            "selected": [{"id": i, "priority": p} for i, p in self.selected],
            "labelled_before": self.labelled_before,
            "labelled_after": self.labelled_after,
            "score_sha256": self.score_sha256,
            "oracle_sha256": self.oracle_sha256,
            "split_sha256": dict(self.split_sha256),
            "checkpoint_sha256": self.checkpoint_sha256,
            "rng_algorithm": self.rng_algorithm,
            "backend": self.backend,
            "score_batches": self.score_batches,
            "request_sha256": self.request_sha256,
            "response_sha256": self.response_sha256,
            "fill_report": list(self.fill_report) if self.fill_report is not None else None,
            "delta_bleu": self.delta_bleu,
        }

    def to_json(self) -> str:
        return pretty_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "IterationManifest":
        return cls(
            iteration=data["iteration"],
            strategy=data["strategy"],
            seed=data["seed"],
            budget=data["budget"],
            selected=tuple((row["id"], row["priority"]) for row in data["selected"]),
            labelled_before=data["labelled_before"],
            labelled_after=data["labelled_after"],
            score_sha256=data["score_sha256"],
            oracle_sha256=data["oracle_sha256"],
            split_sha256=dict(data["split_sha256"]),
            checkpoint_sha256=data["checkpoint_sha256"],
            rng_algorithm=data["rng_algorithm"],
            backend=data.get("backend"),
            score_batches=data.get("score_batches"),
            request_sha256=data.get("request_sha256"),
            response_sha256=data.get("response_sha256"),
            fill_report=tuple(data["fill_report"]) if data.get("fill_report") else None,
            delta_bleu=data.get("delta_bleu"),
        )


@dataclass(frozen=True)
class ExperimentState:
    iteration: int
    labelled: ParallelCorpus
    pool: MonoPool
    config: LoopConfig
    oracle: OracleStore
    history: tuple[IterationManifest, ...] = ()
    backend: ScorerBackend | None = None
    reference_corpus: ParallelCorpus | None = None
    split_sha256: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class IterationOutcome:
    state: ExperimentState
    manifest: IterationManifest
    batch: SelectionBatch
    score_text: str | None
    labelled_text: str


def should_stop(state: ExperimentState, criterion: Mapping[str, Any]) -> bool:
    """Pure stopping predicate over history sizes and pool availability."""
    if "total_budget" in criterion:
        spent = sum(len(m.selected) for m in state.history)
        return spent >= criterion["total_budget"]
    if "max_iterations" in criterion:
        return len(state.history) >= criterion["max_iterations"]
    if "pool_exhausted" in criterion:
        return state.pool.available_count() == 0
    raise ValueError(f"unknown stopping criterion {dict(criterion)!r}")


def _merge_labelled(labelled: ParallelCorpus, new: Sequence[SentenceRecord]) -> ParallelCorpus:
    merged = sorted(list(labelled.records) + list(new), key=lambda r: r.id)
    return ParallelCorpus(tuple(merged), provenance=labelled.provenance)


def run_iteration(state: ExperimentState) -> IterationOutcome:
    """Execute one cycle: score, select, annotate, grow the labelled set.

    Returns the advanced state plus the manifest and the artifacts to
    persist (score file text and the labelled-set snapshot). Prior
    history is never mutated.
    """
    cfg = state.config
    if cfg.stop is not None and should_stop(state, cfg.stop):
        raise StateError("stopping criterion already met")
    available = state.pool.available()
    if not available:
        raise StateError("pool has no unconsumed sentences")

    i = state.iteration
    seed_i = derive_seed(cfg.base_seed, "iteration", i)

    run: ScoringRun | None = None
    if cfg.strategy == "random":
        batch = select_random(state.pool, cfg.budget, seed_i, iteration=i)
        priorities: dict[int, float] = {}
    else:
        if state.backend is None:
            raise StateError(f"strategy {cfg.strategy!r} needs a scoring backend")
        scorer = "qe" if cfg.strategy == "qe" else "rttl"
        run = score_pool(state.pool, state.backend, scorer, cfg.batch_size)
        priorities = {c.id: c.priority for c in run.candidates}
        if cfg.strategy == "srttl":
            reference = state.reference_corpus if cfg.reference == "test" else state.labelled
            if reference is None:
                raise StateError("srttl with reference='test' needs a reference corpus")
            dist = build_length_histogram(reference, cfg.bin_width, source=cfg.reference)
            lengths = {r.id: r.source_len for r in available}
            batch = select_stratified(
                run.candidates, lengths, dist, cfg.budget,
                iteration=i, seed=seed_i, strategy="srttl",
            )
        else:
            batch = select_top_k(run.candidates, cfg.budget, iteration=i, seed=seed_i)

    targets = state.oracle.targets(batch.selected_ids)
    pool_by_id = {r.id: r for r in available}
    new_records = [
        replace(pool_by_id[i_], target=targets[i_]) for i_ in sorted(batch.selected_ids)
    ]
    labelled_after = _merge_labelled(state.labelled, new_records)
    pool_after = state.pool.consume(batch.selected_ids)

    score_text = run.score_jsonl() if run is not None else None
    labelled_text = corpus_jsonl(labelled_after)
    manifest = IterationManifest(
        iteration=i,
        strategy=cfg.strategy,
        seed=seed_i,
        budget=cfg.budget,
        selected=tuple((sel, priorities.get(sel)) for sel in batch.selected_ids),
        labelled_before=len(state.labelled),
        labelled_after=len(labelled_after),
        score_sha256=sha256_text(score_text) if score_text is not None else None,
        oracle_sha256=state.oracle.checksum(),
        split_sha256=dict(state.split_sha256),
        checkpoint_sha256=sha256_text(labelled_text),
        backend=run.backend_descriptor if run is not None else None,
        score_batches=run.batches if run is not None else None,
        request_sha256=run.request_sha256 if run is not None else None,
        response_sha256=run.response_sha256 if run is not None else None,
        fill_report=batch.fill_report,
    )
    new_state = replace(
        state,
        iteration=i + 1,
        labelled=labelled_after,
        pool=pool_after,
        history=state.history + (manifest,),
    )
    return IterationOutcome(
        state=new_state,
        manifest=manifest,
        batch=batch,
        score_text=score_text,
        labelled_text=labelled_text,
    )


# --- experiment directory ----------------------------------------------


class ExperimentDir:
    """Single-writer on-disk layout for one experiment.

    config.json, split/, oracle.jsonl, scores/iter_i.jsonl,
    manifests/iter_i.json, checkpoints/iter_i/ plus a timing sidecar.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def oracle_path(self) -> Path:
        return self.root / "oracle.jsonl"

    def split_path(self, part: str) -> Path:
        return self.root / "split" / f"{part}.jsonl"

    def score_path(self, iteration: int) -> Path:
        return self.root / "scores" / f"iter_{iteration}.jsonl"

    def manifest_path(self, iteration: int) -> Path:
        return self.root / "manifests" / f"iter_{iteration}.json"

    def checkpoint_dir(self, iteration: int) -> Path:
        return self.root / "checkpoints" / f"iter_{iteration}"

    # -- creation --

    @classmethod
    def initialize(
        cls,
        root: str | Path,
        split: SplitSet,
        base_seed: int,
        split_params: Mapping[str, Any],
        training_config: Any = None,
    ) -> "ExperimentDir":
        exp = cls(root)
        if exp.config_path.exists():
            raise StateError(f"experiment already exists at {exp.root}")
        texts = {
            "train": corpus_jsonl(split.train),
            "validation": corpus_jsonl(split.validation),
            "test": corpus_jsonl(split.test),
            "pool": pool_jsonl(split.pool),
        }
        oracle_text = oracle_jsonl(split.oracle)
        for part, text in texts.items():
            write_text(exp.split_path(part), text)
        write_text(exp.oracle_path, oracle_text)
        config = {
            "schema": CONFIG_SCHEMA,
            "base_seed": base_seed,
            "rng_algorithm": RNG_ALGORITHM,
            "split": dict(split_params),
            "checksums": {part: sha256_text(text) for part, text in texts.items()}
            | {"oracle": sha256_text(oracle_text)},
            "training_config": training_config,
        }
        write_text(exp.config_path, pretty_json(config))
        return exp

    def load_config(self) -> dict:
        if not self.config_path.exists():
            raise StateError(f"{self.root} is not an experiment directory (no config.json)")
        config = json.loads(self.config_path.read_text(encoding="utf-8"))
        if config.get("schema") != CONFIG_SCHEMA:
            raise StateError(f"unexpected experiment schema {config.get('schema')!r}")
        return config

    # -- resumption --

    def manifest_count(self) -> int:
        mandir = self.root / "manifests"
        if not mandir.exists():
            return 0
        indices = []
        for path in mandir.glob("iter_*.json"):
            try:
                indices.append(int(path.stem.split("_", 1)[1]))
            except (IndexError, ValueError):
                raise IntegrityError(f"unrecognized manifest file {path.name}")
        if sorted(indices) != list(range(len(indices))):
            raise IntegrityError("manifest chain has gaps or duplicates")
        return len(indices)

    def read_manifests(self) -> list[IterationManifest]:
        manifests = []
        for i in range(self.manifest_count()):
            path = self.manifest_path(i)
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
                manifest = IterationManifest.from_dict(data)
            except (ValueError, KeyError) as exc:
                raise IntegrityError(f"manifest {i} is corrupt: {exc}") from exc
            if manifest.iteration != i:
                raise IntegrityError(f"manifest {i} holds iteration {manifest.iteration}")
            manifests.append(manifest)
        return manifests

    def verify_chain(self, manifests: Sequence[IterationManifest]) -> None:
        """Check score-file and checkpoint checksums for every manifest."""
        for m in manifests:
            if m.score_sha256 is not None:
                path = self.score_path(m.iteration)
                if not path.exists():
                    raise IntegrityError(f"manifest {m.iteration}: score file missing")
                actual = sha256_file(path)
                if actual != m.score_sha256:
                    raise IntegrityError(
                        f"manifest {m.iteration}: score file checksum mismatch"
                    )
            snapshot = self.checkpoint_dir(m.iteration) / "labelled.jsonl"
            if not snapshot.exists():
                raise IntegrityError(f"manifest {m.iteration}: checkpoint snapshot missing")
            if sha256_file(snapshot) != m.checkpoint_sha256:
                raise IntegrityError(f"manifest {m.iteration}: checkpoint checksum mismatch")

    def verify_split(self, config: Mapping) -> None:
        for part in ("train", "validation", "test", "pool"):
            path = self.split_path(part)
            if not path.exists():
                raise IntegrityError(f"split file {path} is missing")
            if sha256_file(path) != config["checksums"][part]:
                raise IntegrityError(f"split file {path} checksum mismatch")

    def resume(
        self,
        loop: LoopConfig | None = None,
        backend: ScorerBackend | None = None,
    ) -> ExperimentState:
        """Reconstruct the experiment state from disk, verifying checksums.

        The sealed oracle store is deliberately not required here: it is
        only read (and verified) when an iteration annotates a batch.
        """
        config = self.load_config()
        self.verify_split(config)
        manifests = self.read_manifests()
        self.verify_chain(manifests)

        consumed: set[int] = set()
        for m in manifests:
            consumed.update(i for i, _ in m.selected)
        pool = read_pool_jsonl(self.split_path("pool"), consumed_ids=consumed)
        if manifests:
            snapshot = self.checkpoint_dir(manifests[-1].iteration) / "labelled.jsonl"
            labelled = read_corpus_jsonl(snapshot)
            if len(labelled) != manifests[-1].labelled_after:
                raise IntegrityError(
                    f"manifest {manifests[-1].iteration}: checkpoint size mismatch"
                )
        else:
            labelled = read_corpus_jsonl(self.split_path("train"))

        if loop is None:
            loop = LoopConfig(
                strategy="random",
                budget=1,
                base_seed=config["base_seed"],
                training_config=config.get("training_config"),
            )
        reference = None
        if loop.reference == "test":
            reference = read_corpus_jsonl(self.split_path("test"))
        return ExperimentState(
            iteration=len(manifests),
            labelled=labelled,
            pool=pool,
            config=loop,
            oracle=FileOracle(self.oracle_path, config["checksums"]["oracle"]),
            history=tuple(manifests),
            backend=backend,
            reference_corpus=reference,
            split_sha256={
                part: config["checksums"][part] for part in ("train", "validation", "test")
            },
        )

    # -- iteration persistence --

    def step(self, state: ExperimentState) -> IterationOutcome:
        """Run one iteration and persist its artifacts."""
        started = time.monotonic()
        outcome = run_iteration(state)
        manifest = outcome.manifest
        i = manifest.iteration
        if self.manifest_path(i).exists():
            raise StateError(f"manifest for iteration {i} already exists")
        if outcome.score_text is not None:
            write_text(self.score_path(i), outcome.score_text)
        write_text(self.checkpoint_dir(i) / "labelled.jsonl", outcome.labelled_text)
        write_text(
            self.checkpoint_dir(i) / "training_config.json",
            pretty_json(state.config.training_config),
        )
        write_text(self.manifest_path(i), manifest.to_json())
        self.verify_split(self.load_config())
        elapsed = time.monotonic() - started
        with open(self.root / "timings.jsonl", "a", encoding="utf-8") as fh:
            fh.write(canonical_json({"iteration": i, "wall_clock_seconds": elapsed}) + "\n")
        return outcome
