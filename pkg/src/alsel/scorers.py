"""Per-sentence selection priorities from model outputs.

Two scorers share one convention: higher priority means select first.
The round-trip scorer turns reverse-model log-probabilities (natural
log) into a length-normalized uncertainty; the quality scorer negates
a reference-free quality estimate so the worst translations rank first.

``score_pool`` walks the unconsumed pool in id order, batch by batch,
against a scoring backend: either the built-in deterministic mock or
an HTTP gateway client. A batch failure aborts the whole operation;
partial score sets are never returned.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .corpus import MonoPool
from .errors import ProtocolError, ScoringError, StateError
from .ioutil import canonical_json, jsonl_text


def rttl_score(reverse_logprobs: Sequence[float], length: int) -> float:
    """Length-normalized negative log-likelihood of the round trip.

    ``reverse_logprobs`` holds one natural-log probability per source
    token under the reverse model; ``length`` must equal its size.
    Returns a non-negative score: the higher, the more uncertain the
    model and the earlier the sentence is selected.
    """
    n = len(reverse_logprobs)
    if n == 0:
        raise ValueError("reverse_logprobs must be non-empty")
    if length != n:
        raise ValueError(f"length {length} does not match {n} log-probabilities")
    total = 0.0
    for lp in reverse_logprobs:
        if not math.isfinite(lp):
            raise ValueError(f"log-probability {lp!r} is not finite")
        if lp > 0:
            raise ValueError(f"log-probability {lp!r} is positive")
        total += lp
    return -total / length


def qe_priority(quality: float) -> float:
    """Negated quality score: ascending quality equals descending priority."""
    if not math.isfinite(quality):
        raise ValueError(f"quality {quality!r} is not finite")
    return -quality


@dataclass(frozen=True)
class CandidateRecord:
    """A pool sentence with its forward hypothesis and model outputs."""

    id: int
    source: str
    hypothesis: str
    reverse_logprobs: tuple[float, ...] | None = None
    quality: float | None = None

    def __post_init__(self):
        if self.reverse_logprobs is not None:
            if any(lp > 0 for lp in self.reverse_logprobs):
                raise ValueError(f"candidate {self.id}: positive reverse log-probability")


@dataclass(frozen=True)
class ScoredCandidate:
    """Unified ranking entry: higher priority is selected earlier."""

    id: int
    priority: float
    strategy_tag: str
    raw: float

    def __post_init__(self):
        if not math.isfinite(self.priority):
            raise ValueError(f"candidate {self.id}: priority must be finite")


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    direction: str  # forward | reverse | quality
    model: str = ""
    timeout: float = 30.0
    max_batch: int = 64

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.direction not in ("forward", "reverse", "quality"):
            raise ValueError(f"unknown endpoint direction {self.direction!r}")


class ScorerBackend(Protocol):
    """Minimal surface a scoring backend must provide.

    Items and results are wire-shaped dicts; see the gateway protocol.
    """

    def descriptor(self) -> str: ...

    def translate(self, items: list[dict]) -> list[dict]: ...

    def logprob(self, items: list[dict]) -> list[dict]: ...

    def quality(self, items: list[dict]) -> list[dict]: ...


_MOCK_PHI_SCALE = 10.0


class MockBackend:
    """Deterministic stand-in for the model gateway.

    Priorities derive from a keyed 64-bit hash of (sentence id,
    strategy), so the full pipeline runs offline and reproduces
    byte-identical results on every platform. Hypotheses are the source
    tokens reversed; every source token gets the same log-probability so
    the round-trip score equals the hash value exactly.
    """

    def __init__(self, key: str = "alsel-mock-v1"):
        self.key = key
        self._key_bytes = key.encode("utf-8")[:64]

    def descriptor(self) -> str:
        return f"mock/v1(key={self.key})"

    def _unit(self, rec_id: int, strategy: str) -> float:
        h = hashlib.blake2b(digest_size=8, key=self._key_bytes)
        h.update(rec_id.to_bytes(8, "little", signed=False))
        h.update(strategy.encode("utf-8"))
        return int.from_bytes(h.digest(), "little") / 2**64

    def translate(self, items: list[dict]) -> list[dict]:
        return [
            {
                "id": item["id"],
                "hypothesis": " ".join(reversed(item["source"].split())),
                "decode_mode": "greedy",
            }
            for item in items
        ]

    def logprob(self, items: list[dict]) -> list[dict]:
        results = []
        for item in items:
            phi = _MOCK_PHI_SCALE * self._unit(item["id"], "rttl")
            results.append(
                {"id": item["id"], "token_logprobs": [-phi] * len(item["source_tokens"])}
            )
        return results

    def quality(self, items: list[dict]) -> list[dict]:
        return [{"id": item["id"], "score": self._unit(item["id"], "qe")} for item in items]


@dataclass(frozen=True)
class ScoringRun:
    """Scores for every unconsumed pool sentence plus transport digests."""

    candidates: tuple[ScoredCandidate, ...]
    hypotheses: dict[int, str]
    batches: int
    request_sha256: str
    response_sha256: str
    backend_descriptor: str

    def score_rows(self) -> list[dict]:
        return [
            {
                "id": c.id,
                "strategy": c.strategy_tag,
                "priority": c.priority,
                "raw": c.raw,
                "hypothesis": self.hypotheses[c.id],
            }
            for c in self.candidates
        ]

    def score_jsonl(self) -> str:
        return jsonl_text(self.score_rows())


def _chunks(seq: list, size: int) -> Iterable[list]:
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def _check_ids(kind: str, batch_index: int, items: list[dict], results: list[dict]) -> None:
    got = [r.get("id") for r in results]
    expected = [i["id"] for i in items]
    if got != expected:
        raise ProtocolError(
            f"{kind} batch {batch_index}: response ids {got[:5]}... do not match request",
            batch_index=batch_index,
        )


def score_pool(
    pool: MonoPool,
    backend: ScorerBackend,
    strategy: str,
    batch_size: int = 64,
) -> ScoringRun:
    """Score every unconsumed pool sentence with the given strategy.

    ``rttl`` needs the forward and reverse models (translate, then
    per-token log-probabilities of the source given the hypothesis);
    ``qe`` needs forward and quality. Fails atomically with the index
    of the first bad batch.
    """
    if strategy not in ("rttl", "qe"):
        raise ValueError(f"unknown scoring strategy {strategy!r}")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    records = pool.available()
    if not records:
        raise StateError("pool has no unconsumed sentences to score")

    req_h = hashlib.sha256()
    resp_h = hashlib.sha256()
    candidates: list[ScoredCandidate] = []
    hypotheses: dict[int, str] = {}
    batches = 0

    for batch_index, chunk in enumerate(_chunks(records, batch_size)):
        batches += 1
        t_items = [{"id": r.id, "source": r.source} for r in chunk]
        try:
            t_results = _call(backend.translate, "translate", batch_index, t_items, req_h, resp_h)
            _check_ids("translate", batch_index, t_items, t_results)
            hyp = {r["id"]: r["hypothesis"] for r in t_results}

            if strategy == "rttl":
                l_items = [
                    {"id": r.id, "source_tokens": r.source.split(), "hypothesis": hyp[r.id]}
                    for r in chunk
                ]
                l_results = _call(backend.logprob, "logprob", batch_index, l_items, req_h, resp_h)
                _check_ids("logprob", batch_index, l_items, l_results)
                for rec, res in zip(chunk, l_results):
                    lps = res.get("token_logprobs")
                    if not isinstance(lps, list) or len(lps) != rec.source_len:
                        raise ProtocolError(
                            f"logprob batch {batch_index}: record {rec.id} expected "
                            f"{rec.source_len} log-probabilities",
                            batch_index=batch_index,
                        )
                    candidate = CandidateRecord(
                        id=rec.id,
                        source=rec.source,
                        hypothesis=hyp[rec.id],
                        reverse_logprobs=tuple(lps),
                    )
                    phi = rttl_score(candidate.reverse_logprobs, rec.source_len)
                    candidates.append(
                        ScoredCandidate(id=rec.id, priority=phi, strategy_tag="rttl", raw=phi)
                    )
                    hypotheses[rec.id] = candidate.hypothesis
            else:
                q_items = [
                    {"id": r.id, "source": r.source, "hypothesis": hyp[r.id]} for r in chunk
                ]
                q_results = _call(backend.quality, "quality", batch_index, q_items, req_h, resp_h)
                _check_ids("quality", batch_index, q_items, q_results)
                for rec, res in zip(chunk, q_results):
                    score = res.get("score")
                    if not isinstance(score, (int, float)):
                        raise ProtocolError(
                            f"quality batch {batch_index}: record {rec.id} has no score",
                            batch_index=batch_index,
                        )
                    candidate = CandidateRecord(
                        id=rec.id,
                        source=rec.source,
                        hypothesis=hyp[rec.id],
                        quality=float(score),
                    )
                    candidates.append(
                        ScoredCandidate(
                            id=rec.id,
                            priority=qe_priority(candidate.quality),
                            strategy_tag="qe",
                            raw=candidate.quality,
                        )
                    )
                    hypotheses[rec.id] = candidate.hypothesis
        except ScoringError:
            raise
        except Exception as exc:
            raise ScoringError(
                f"scoring batch {batch_index} failed: {exc}", batch_index=batch_index
            ) from exc

    return ScoringRun(
        candidates=tuple(candidates),
        hypotheses=hypotheses,
        batches=batches,
        request_sha256=req_h.hexdigest(),
        response_sha256=resp_h.hexdigest(),
        backend_descriptor=backend.descriptor(),
    )


def _call(fn, kind: str, batch_index: int, items: list[dict], req_h, resp_h) -> list[dict]:
    req_h.update(canonical_json({"kind": kind, "items": items}).encode("utf-8"))
    try:
        results = fn(items)
    except ScoringError as exc:
        raise ScoringError(f"{kind} batch {batch_index} failed: {exc}", batch_index=batch_index) from exc
    if not isinstance(results, list) or len(results) != len(items):
        raise ProtocolError(
            f"{kind} batch {batch_index}: expected {len(items)} results", batch_index=batch_index
        )
    resp_h.update(canonical_json({"kind": kind, "results": results}).encode("utf-8"))
    return results


def parse_score_rows(rows: Iterable[dict]) -> list[ScoredCandidate]:
    """Rebuild scored candidates from persisted score-file rows."""
    out = []
    for row in rows:
        out.append(
            ScoredCandidate(
                id=row["id"],
                priority=float(row["priority"]),
                strategy_tag=row["strategy"],
                raw=float(row["raw"]),
            )
        )
    return out
