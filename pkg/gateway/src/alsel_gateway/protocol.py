"""Wire protocol schemas for the scoring gateway.

One POST endpoint per request kind (translate, logprob, quality), JSON
bodies with content-addressed batch ids. Responses echo the batch id,
name the serving model, and keep results in request order. Errors are
``{"error": {"code", "message", "batch_id"}}`` with codes
oversized_batch, bad_schema and backend_failure.
"""

from __future__ import annotations

import json
from typing import Any, Literal

from pydantic import BaseModel, Field, field_validator

PROTOCOL = "alsel-gateway/v1"

ERROR_OVERSIZED = "oversized_batch"
ERROR_BAD_SCHEMA = "bad_schema"
ERROR_BACKEND = "backend_failure"


def canonical_wire(obj: Any) -> str:
    """Canonical encoding shared with the engine client: compact sorted JSON."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


class TranslateItem(BaseModel):
    id: int
    source: str


class LogprobItem(BaseModel):
    id: int
    source_tokens: list[str] = Field(min_length=1)
    hypothesis: str


class QualityItem(BaseModel):
    id: int
    source: str
    hypothesis: str


def _unique_ids(items):
    seen = set()
    for item in items:
        if item.id in seen:
            raise ValueError(f"duplicate id {item.id} in batch")
        seen.add(item.id)
    return items


class TranslateRequest(BaseModel):
    batch_id: str = Field(min_length=1)
    items: list[TranslateItem] = Field(min_length=1)

    _ids = field_validator("items")(_unique_ids)


class LogprobRequest(BaseModel):
    batch_id: str = Field(min_length=1)
    items: list[LogprobItem] = Field(min_length=1)

    _ids = field_validator("items")(_unique_ids)


class QualityRequest(BaseModel):
    batch_id: str = Field(min_length=1)
    items: list[QualityItem] = Field(min_length=1)

    _ids = field_validator("items")(_unique_ids)


REQUEST_MODELS = {
    "translate": TranslateRequest,
    "logprob": LogprobRequest,
    "quality": QualityRequest,
}


class TranslateResult(BaseModel):
    id: int
    hypothesis: str
    decode_mode: Literal["greedy", "beam"]


class LogprobResult(BaseModel):
    id: int
    token_logprobs: list[float]

    @field_validator("token_logprobs")
    @classmethod
    def _non_positive(cls, values):
        for v in values:
            if v > 0 or v != v or v in (float("inf"), float("-inf")):
                raise ValueError(f"log-probability {v!r} must be finite and <= 0")
        return values


class QualityResult(BaseModel):
    id: int
    score: float


def error_body(code: str, message: str, batch_id: str | None) -> dict:
    return {"error": {"code": code, "message": message, "batch_id": batch_id}}
