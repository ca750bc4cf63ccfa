"""Client side of the model-gateway wire protocol.

One POST endpoint per request kind (``/translate``, ``/logprob``,
``/quality``), JSON bodies, content-addressed batch ids. Natural-log
probabilities, each <= 0, are enforced at this boundary. Requests are
retried a bounded number of times with exponential backoff; after that
the batch fails and the caller aborts, so runs never silently skip
sentences.
"""

from __future__ import annotations

import json
import math
import time
from typing import Any, Mapping

import httpx

from .errors import ProtocolError, ScoringError
from .ioutil import canonical_json, sha256_text
from .scorers import ModelEndpoint

PROTOCOL = "alsel-gateway/v1"
KINDS = ("translate", "logprob", "quality")

_ITEM_FIELDS = {
    "translate": ("id", "source"),
    "logprob": ("id", "source_tokens", "hypothesis"),
    "quality": ("id", "source", "hypothesis"),
}


def canonical_wire(obj: Any) -> str:
    """The protocol's canonical encoding: compact sorted-key JSON + newline."""
    return canonical_json(obj) + "\n"


def batch_id_for(items: list[dict]) -> str:
    """Content-addressed batch id: SHA-256 of the canonical item list."""
    return sha256_text(canonical_json(items))


def build_request(kind: str, items: list[dict]) -> dict:
    if kind not in KINDS:
        raise ValueError(f"unknown request kind {kind!r}")
    return {"batch_id": batch_id_for(items), "items": items}


def validate_request(kind: str, obj: Any) -> dict:
    """Check a request object against the wire schema; returns it."""
    if kind not in KINDS:
        raise ProtocolError(f"unknown request kind {kind!r}")
    if not isinstance(obj, dict):
        raise ProtocolError(f"{kind} request must be a JSON object")
    if not isinstance(obj.get("batch_id"), str) or not obj["batch_id"]:
        raise ProtocolError(f"{kind} request: missing batch_id")
    items = obj.get("items")
    if not isinstance(items, list) or not items:
        raise ProtocolError(f"{kind} request: items must be a non-empty list")
    seen_ids = set()
    for pos, item in enumerate(items):
        if not isinstance(item, dict):
            raise ProtocolError(f"{kind} request: item {pos} is not an object")
        for field in _ITEM_FIELDS[kind]:
            if field not in item:
                raise ProtocolError(f"{kind} request: item {pos} missing {field!r}")
        if not isinstance(item["id"], int):
            raise ProtocolError(f"{kind} request: item {pos} id must be an integer")
        if item["id"] in seen_ids:
            raise ProtocolError(f"{kind} request: duplicate id {item['id']}")
        seen_ids.add(item["id"])
        if kind == "logprob":
            tokens = item["source_tokens"]
            if not isinstance(tokens, list) or not tokens:
                raise ProtocolError(f"{kind} request: item {pos} source_tokens must be non-empty")
    return obj


def validate_response(kind: str, obj: Any, request: Mapping | None = None) -> dict:
    """Check a response object against the wire schema; returns it.

    With ``request`` given, also enforces that result ids echo the
    request items in order and that log-probability counts match the
    token counts.
    """
    if kind not in KINDS:
        raise ProtocolError(f"unknown response kind {kind!r}")
    if not isinstance(obj, dict):
        raise ProtocolError(f"{kind} response must be a JSON object")
    if "error" in obj:
        err = obj["error"] if isinstance(obj["error"], dict) else {}
        raise ScoringError(
            f"gateway error {err.get('code', 'unknown')}: {err.get('message', '')}"
        )
    if not isinstance(obj.get("batch_id"), str):
        raise ProtocolError(f"{kind} response: missing batch_id")
    if not isinstance(obj.get("model"), str):
        raise ProtocolError(f"{kind} response: missing model descriptor")
    results = obj.get("results")
    if not isinstance(results, list) or not results:
        raise ProtocolError(f"{kind} response: results must be a non-empty list")

    for pos, res in enumerate(results):
        if not isinstance(res, dict) or not isinstance(res.get("id"), int):
            raise ProtocolError(f"{kind} response: result {pos} malformed")
        if kind == "translate":
            if not isinstance(res.get("hypothesis"), str):
                raise ProtocolError(f"{kind} response: result {pos} missing hypothesis")
            if not isinstance(res.get("decode_mode"), str):
                raise ProtocolError(f"{kind} response: result {pos} missing decode_mode")
        elif kind == "logprob":
            lps = res.get("token_logprobs")
            if not isinstance(lps, list) or not lps:
                raise ProtocolError(f"{kind} response: result {pos} missing token_logprobs")
            for lp in lps:
                if not isinstance(lp, (int, float)) or not math.isfinite(lp) or lp > 0:
                    raise ProtocolError(
                        f"{kind} response: result {pos} has invalid log-probability {lp!r}"
                    )
        else:
            score = res.get("score")
            if not isinstance(score, (int, float)) or not math.isfinite(score):
                raise ProtocolError(f"{kind} response: result {pos} has invalid score {score!r}")

    if request is not None:
        items = request["items"]
        if obj["batch_id"] != request["batch_id"]:
            raise ProtocolError(f"{kind} response: batch_id does not echo the request")
        got = [r["id"] for r in results]
        expected = [i["id"] for i in items]
        if got != expected:
            raise ProtocolError(f"{kind} response: result ids do not match request order")
        if kind == "logprob":
            for item, res in zip(items, results):
                if len(res["token_logprobs"]) != len(item["source_tokens"]):
                    raise ProtocolError(
                        f"{kind} response: id {item['id']} log-probability count "
                        f"{len(res['token_logprobs'])} != {len(item['source_tokens'])} tokens"
                    )
    return obj


def parse_message(kind: str, text: str, role: str = "response") -> dict:
    """Parse and validate a wire message from its JSON text."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"{kind} {role}: invalid JSON ({exc.msg})") from exc
    if role == "request":
        return validate_request(kind, obj)
    return validate_response(kind, obj)


class HttpGatewayBackend:
    """Scorer backend speaking the gateway protocol over HTTP.

    ``endpoints`` maps directions (forward/reverse/quality) to
    ``ModelEndpoint``s; rttl scoring needs forward+reverse, qe needs
    forward+quality. ``transport`` is injectable for tests.
    """

    KIND_DIRECTION = {"translate": "forward", "logprob": "reverse", "quality": "quality"}

    def __init__(
        self,
        endpoints: Mapping[str, ModelEndpoint],
        retries: int = 3,
        backoff: float = 0.1,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoints = dict(endpoints)
        self.retries = retries
        self.backoff = backoff
        self._client = httpx.Client(transport=transport)

    def close(self) -> None:
        self._client.close()

    def descriptor(self) -> str:
        parts = [f"{d}={ep.base_url}" for d, ep in sorted(self.endpoints.items())]
        return "http(" + ",".join(parts) + ")"

    def _endpoint(self, kind: str) -> ModelEndpoint:
        direction = self.KIND_DIRECTION[kind]
        ep = self.endpoints.get(direction)
        if ep is None:
            raise ScoringError(f"no {direction} endpoint configured for {kind} requests")
        return ep

    def _post(self, kind: str, items: list[dict]) -> list[dict]:
        ep = self._endpoint(kind)
        request = build_request(kind, items)
        url = ep.base_url.rstrip("/") + "/" + kind
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                reply = self._client.post(url, json=request, timeout=ep.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if reply.status_code >= 500:
                last_error = ScoringError(f"gateway returned {reply.status_code}")
                continue
            obj = parse_message(kind, reply.text)
            return validate_response(kind, obj, request=request)["results"]
        raise ScoringError(f"{kind} request to {url} failed after {self.retries} attempts: {last_error}")

    def translate(self, items: list[dict]) -> list[dict]:
        return self._post("translate", items)

    def logprob(self, items: list[dict]) -> list[dict]:
        return self._post("logprob", items)

    def quality(self, items: list[dict]) -> list[dict]:
        return self._post("quality", items)

    def health(self) -> dict:
        checked = {}
        for direction, ep in sorted(self.endpoints.items()):
            url = ep.base_url.rstrip("/") + "/health"
            try:
                reply = self._client.get(url, timeout=ep.timeout)
                checked[direction] = reply.json()
            except (httpx.HTTPError, json.JSONDecodeError) as exc:
                raise ScoringError(f"health probe of {url} failed: {exc}") from exc
        return checked
