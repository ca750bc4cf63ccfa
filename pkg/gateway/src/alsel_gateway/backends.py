"""Model backends served by the gateway.

The fake backend is fully deterministic (keyed hashes, greedy decode
marker) so the protocol, fixtures and the engine's client tests run
with no models at all. Real translation models plug in behind the same
three methods; the bundled quality wrapper loads a published QE
checkpoint lazily and the service refuses to start if loading fails.
"""

from __future__ import annotations

import hashlib
import importlib
import os


class BackendUnavailable(RuntimeError):
    """Raised when a real model backend cannot be loaded."""


class FakeDeterministicBackend:
    """Hash-driven stand-in for the three model directions."""

    def __init__(self, key: str = "gateway-fake-v1"):
        self.key = key
        self._key_bytes = key.encode("utf-8")[:64]

    def descriptor(self) -> str:
        return f"fake-deterministic/v1(key={self.key})"

    def decode_mode(self) -> str:
        return "greedy"

    def _unit(self, *parts: str) -> float:
        h = hashlib.blake2b(digest_size=8, key=self._key_bytes)
        for part in parts:
            data = part.encode("utf-8")
            h.update(len(data).to_bytes(4, "little"))
            h.update(data)
        return int.from_bytes(h.digest(), "little") / 2**64

    def translate(self, items: list[dict]) -> list[dict]:
        # character-reversed tokens: stable, content-dependent, clearly fake
        return [
            {
                "id": item["id"],
                "hypothesis": " ".join(tok[::-1] for tok in item["source"].split()),
                "decode_mode": "greedy",
            }
            for item in items
        ]

    def logprob(self, items: list[dict]) -> list[dict]:
        results = []
        for item in items:
            lps = [
                -8.0 * self._unit(str(item["id"]), str(pos), tok)
                for pos, tok in enumerate(item["source_tokens"])
            ]
            results.append({"id": item["id"], "token_logprobs": lps})
        return results

    def quality(self, items: list[dict]) -> list[dict]:
        return [
            {
                "id": item["id"],
                "score": self._unit(str(item["id"]), item["source"], item["hypothesis"]),
            }
            for item in items
        ]


class CometQualityBackend:
    """Quality direction backed by a COMET-style QE checkpoint.

    ``checkpoint`` is a local model path (see ALSEL_QE_CHECKPOINT); the
    wire contract only promises that higher scores mean better
    translations.
    """

    def __init__(self, checkpoint: str):
        try:
            comet = importlib.import_module("comet")
        except ImportError as exc:
            raise BackendUnavailable(f"comet package not installed: {exc}") from exc
        try:
            self._model = comet.load_from_checkpoint(checkpoint)
        except Exception as exc:
            raise BackendUnavailable(f"cannot load QE checkpoint {checkpoint!r}: {exc}") from exc
        self.checkpoint = checkpoint

    def descriptor(self) -> str:
        return f"comet-qe({os.path.basename(self.checkpoint)})"

    def quality(self, items: list[dict]) -> list[dict]:
        data = [{"src": item["source"], "mt": item["hypothesis"]} for item in items]
        prediction = self._model.predict(data, batch_size=len(data), gpus=0)
        scores = prediction.scores if hasattr(prediction, "scores") else prediction[0]
        return [
            {"id": item["id"], "score": float(score)} for item, score in zip(items, scores)
        ]


def load_quality_backend(spec: str | None = None):
    """Resolve a real quality backend from a spec string.

    ``comet:<checkpoint>`` loads a COMET QE checkpoint;
    ``module:attribute`` imports any object exposing
    ``quality(items) -> results``. With no spec, falls back to the
    ALSEL_QE_CHECKPOINT environment variable.
    """
    if spec is None:
        checkpoint = os.environ.get("ALSEL_QE_CHECKPOINT")
        if not checkpoint:
            raise BackendUnavailable("no quality backend configured")
        spec = f"comet:{checkpoint}"
    scheme, _, rest = spec.partition(":")
    if scheme == "comet":
        return CometQualityBackend(rest)
    try:
        module = importlib.import_module(scheme)
        backend = getattr(module, rest)
    except (ImportError, AttributeError) as exc:
        raise BackendUnavailable(f"cannot load quality backend {spec!r}: {exc}") from exc
    return backend() if callable(backend) else backend
