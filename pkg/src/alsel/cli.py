"""Command-line interface: preprocess | split | score | select | iterate | report.

Commands communicate only through files in the experiment directory, so
a full experiment is a replayable shell script. Exit codes: 0 success,
1 input/contract error, 2 infeasible configuration, 3 integrity failure.
Re-running a completed step either reproduces byte-identical output or
refuses with "already exists"; nothing is silently overwritten.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

from . import al_loop, analytics, selection
from .al_loop import ExperimentDir, LoopConfig
from .corpus import clean, corpus_jsonl, load_parallel, read_corpus_jsonl
from .errors import AlselError, FormatError, LockError, StateError
from .gateway_client import HttpGatewayBackend
from .ioutil import canonical_json, pretty_json, sha256_file, write_text
from .rng import derive_seed
from .scorers import MockBackend, ModelEndpoint, parse_score_rows, score_pool
from .ioutil import read_jsonl


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise FormatError(message)


def _env_seed() -> int:
    raw = os.environ.get("ALSEL_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise FormatError(f"ALSEL_SEED must be an integer, got {raw!r}")


def _write_new(path: Path, text: str) -> None:
    """Write unless the identical file already exists; never overwrite."""
    if path.exists():
        if path.read_text(encoding="utf-8") == text:
            return
        raise StateError(f"{path} already exists with different content")
    write_text(path, text)


def _emit(out: str | None, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        _write_new(Path(out), text)


def _log_command(expdir: Path, name: str, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    line = canonical_json({"command": name, "config": resolved}) + "\n"
    expdir.mkdir(parents=True, exist_ok=True)
    with open(expdir / "commands.jsonl", "a", encoding="utf-8") as fh:
        fh.write(line)


@contextlib.contextmanager
def _writer_lock(expdir: Path):
    lock = expdir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(f"{expdir} already has a writer (lock file {lock})")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _make_backend(args):
    if getattr(args, "mock", False):
        return MockBackend(key=args.mock_key)
    endpoints = {}
    for direction, url in (
        ("forward", getattr(args, "forward", None)),
        ("reverse", getattr(args, "reverse", None)),
        ("quality", getattr(args, "quality", None)),
    ):
        if url:
            endpoints[direction] = ModelEndpoint(
                base_url=url, direction=direction, max_batch=args.batch_size
            )
    if endpoints:
        return HttpGatewayBackend(endpoints)
    return None


def _loop_config(args, config: dict) -> LoopConfig:
    return LoopConfig(
        strategy=args.strategy,
        budget=args.budget,
        base_seed=config["base_seed"],
        batch_size=args.batch_size,
        bin_width=args.bin_width,
        reference=args.reference,
        training_config=config.get("training_config"),
    )


# --- commands -----------------------------------------------------------


def cmd_preprocess(args) -> int:
    corpus = load_parallel(args.input, args.format)
    cleaned, report = clean(corpus, args.max_words, scope=args.length_scope)
    _write_new(Path(args.output), corpus_jsonl(cleaned))
    if args.report_json:
        _write_new(Path(args.report_json), pretty_json(report.as_dict()))
    sys.stdout.write(pretty_json(report.as_dict()))
    return 0


def cmd_split(args) -> int:
    from .corpus import materialize_split, split_folds

    corpus = load_parallel(args.corpus, args.format)
    seed = args.seed if args.seed is not None else _env_seed()
    fold_seed = derive_seed(seed, "folds")
    shuffle_seed = derive_seed(seed, "split", args.test_fold)
    spec = split_folds(corpus, args.k, fold_seed)
    split = materialize_split(
        corpus, spec, args.test_fold, args.train_size, args.val_size, shuffle_seed
    )
    training_config = None
    if args.training_config:
        training_config = json.loads(Path(args.training_config).read_text(encoding="utf-8"))
    ExperimentDir.initialize(
        args.expdir,
        split,
        base_seed=seed,
        split_params={
            "k": args.k,
            "test_fold": args.test_fold,
            "train_size": args.train_size,
            "val_size": args.val_size,
            "fold_seed": fold_seed,
            "shuffle_seed": shuffle_seed,
            "source": str(args.corpus),
            "source_sha256": sha256_file(Path(args.corpus)),
        },
        training_config=training_config,
    )
    _log_command(Path(args.expdir), "split", args)
    sys.stdout.write(
        pretty_json(
            {
                "train": len(split.train),
                "validation": len(split.validation),
                "test": len(split.test),
                "pool": len(split.pool),
            }
        )
    )
    return 0


def cmd_score(args) -> int:
    exp = ExperimentDir(args.expdir)
    state = exp.resume(backend=None)
    backend = _make_backend(args)
    if backend is None:
        raise FormatError("scoring needs --mock or endpoint URLs")
    run = score_pool(state.pool, backend, args.strategy, args.batch_size)
    _log_command(Path(args.expdir), "score", args)
    _emit(args.out, run.score_jsonl())
    return 0


def cmd_select(args) -> int:
    exp = ExperimentDir(args.expdir)
    state = exp.resume(backend=None)
    iteration = state.iteration
    seed = derive_seed(exp.load_config()["base_seed"], "iteration", iteration)

    if args.strategy == "random":
        batch = selection.select_random(state.pool, args.budget, seed, iteration=iteration)
    else:
        if args.scores:
            rows = [row for _, row in read_jsonl(Path(args.scores))]
            candidates = parse_score_rows(rows)
        else:
            backend = _make_backend(args)
            if backend is None:
                raise FormatError("non-random selection needs --scores or --mock/endpoints")
            scorer = "qe" if args.strategy == "qe" else "rttl"
            candidates = list(
                score_pool(state.pool, backend, scorer, args.batch_size).candidates
            )
        available_ids = {rec.id for rec in state.pool.available()}
        stray = [c.id for c in candidates if c.id not in available_ids]
        if stray:
            raise FormatError(f"scored ids not in the unconsumed pool: {stray[:5]}")
        if args.strategy == "srttl":
            reference = (
                read_corpus_jsonl(exp.split_path("test"))
                if args.reference == "test"
                else state.labelled
            )
            dist = selection.build_length_histogram(
                reference, args.bin_width, source=args.reference
            )
            lengths = {rec.id: rec.source_len for rec in state.pool.available()}
            batch = selection.select_stratified(
                candidates, lengths, dist, args.budget,
                iteration=iteration, seed=seed, strategy="srttl",
            )
        else:
            batch = selection.select_top_k(
                candidates, args.budget, iteration=iteration, seed=seed, strategy=args.strategy
            )
    _log_command(Path(args.expdir), "select", args)
    _emit(args.out, pretty_json(batch.as_dict()))
    return 0


def cmd_iterate(args) -> int:
    exp = ExperimentDir(args.expdir)
    config = exp.load_config()
    with _writer_lock(exp.root):
        loop = _loop_config(args, config)
        backend = _make_backend(args)
        state = exp.resume(loop=loop, backend=backend)
        outcome = exp.step(state)
        _log_command(Path(args.expdir), "iterate", args)
        sys.stdout.write(
            pretty_json(
                {
                    "iteration": outcome.manifest.iteration,
                    "strategy": outcome.manifest.strategy,
                    "selected": len(outcome.manifest.selected),
                    "labelled_after": outcome.manifest.labelled_after,
                    "manifest": str(exp.manifest_path(outcome.manifest.iteration)),
                }
            )
        )
    return 0


def cmd_report(args) -> int:
    exp = ExperimentDir(args.expdir)
    exp.load_config()
    manifests = exp.read_manifests()
    if not manifests:
        raise StateError("experiment has no completed iterations to report on")
    pool = {}
    for _, row in read_jsonl(exp.split_path("pool")):
        pool[row["id"]] = row["source"]

    def label_for(n: int) -> str:
        return f"{n // 1000}k" if n % 1000 == 0 else str(n)

    bleu = None
    if args.bleu:
        raw = json.loads(Path(args.bleu).read_text(encoding="utf-8"))
        bleu = {}
        for key, delta in raw.items():
            index = int(key)
            match = [m for m in manifests if m.iteration == index]
            if match:
                bleu[label_for(match[0].labelled_after)] = float(delta)

    rows = []
    for m in manifests:
        sentences = [pool[i] for i, _ in m.selected]
        rows.append(
            analytics.batch_stats(sentences, label_for(m.labelled_after), m.strategy)
        )
    text = analytics.emit_report(rows, args.format, bleu=bleu)
    _log_command(Path(args.expdir), "report", args)
    _emit(args.out, text)
    return 0


# --- parser -------------------------------------------------------------


def _add_backend_flags(sub, batch_default: int = 64):
    sub.add_argument("--mock", action="store_true", help="use the built-in deterministic mock scorer")
    sub.add_argument("--mock-key", default="alsel-mock-v1", help="key for the mock scorer hash")
    sub.add_argument("--forward", help="forward translation endpoint URL")
    sub.add_argument("--reverse", help="reverse translation endpoint URL")
    sub.add_argument("--quality", help="quality estimation endpoint URL")
    sub.add_argument("--batch-size", type=int, default=batch_default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alsel", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("preprocess", help="clean a raw parallel corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("tsv", "jsonl"), required=True)
    p.add_argument("--max-words", type=int, default=100)
    p.add_argument("--length-scope", choices=("both", "source", "target"), default="both")
    p.add_argument("--output", required=True)
    p.add_argument("--report-json")
    p.set_defaults(func=cmd_preprocess)

    p = commands.add_parser("split", help="fold, split and initialize an experiment directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=("tsv", "jsonl"), default="jsonl")
    p.add_argument("--expdir", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--test-fold", type=int, default=0)
    p.add_argument("--train-size", type=int, required=True)
    p.add_argument("--val-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="defaults to $ALSEL_SEED, then 0")
    p.add_argument("--training-config", help="JSON file recorded verbatim for provenance")
    p.set_defaults(func=cmd_split)

    p = commands.add_parser("score", help="score the unconsumed pool (no state change)")
    p.add_argument("--expdir", required=True)
    p.add_argument("--strategy", choices=("rttl", "qe"), required=True)
    p.add_argument("--out", default="-")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_score)

    p = commands.add_parser("select", help="build a selection batch (no state change)")
    p.add_argument("--expdir", required=True)
    p.add_argument("--strategy", choices=al_loop.STRATEGIES, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--scores", help="score file from `alsel score`")
    p.add_argument("--bin-width", type=int, default=10)
    p.add_argument("--reference", choices=("train", "test"), default="train")
    p.add_argument("--out", default="-")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_select)

    p = commands.add_parser("iterate", help="run one full AL iteration and persist it")
    p.add_argument("--expdir", required=True)
    p.add_argument("--strategy", choices=al_loop.STRATEGIES, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--bin-width", type=int, default=10)
    p.add_argument("--reference", choices=("train", "test"), default="train")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_iterate)

    p = commands.add_parser("report", help="emit batch-composition diagnostics")
    p.add_argument("--expdir", required=True)
    p.add_argument("--format", choices=analytics.REPORT_FORMATS, required=True)
    p.add_argument("--bleu", help="JSON file mapping iteration index to BLEU delta")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except AlselError as exc:
        print(f"alsel: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"alsel: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"alsel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
