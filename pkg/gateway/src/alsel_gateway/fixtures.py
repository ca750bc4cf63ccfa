"""Golden request/response fixtures for client conformance testing.

Emission runs the real service (in-process) against the fake backend,
so the files are exactly what travels on the wire. Re-emitting always
produces byte-identical fixtures.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from fastapi.testclient import TestClient

from .app import GatewayConfig, create_app
from .protocol import canonical_wire

SAMPLE_SOURCES = [
    (101, "the river runs fast"),
    (102, "rain fell all night"),
    (103, "markets open early, prices move"),
]


def _fixture_requests() -> dict[str, dict]:
    translate_items = [{"id": i, "source": s} for i, s in SAMPLE_SOURCES]
    logprob_items = [
        {"id": i, "source_tokens": s.split(), "hypothesis": " ".join(t[::-1] for t in s.split())}
        for i, s in SAMPLE_SOURCES
    ]
    quality_items = [
        {"id": i, "source": s, "hypothesis": " ".join(t[::-1] for t in s.split())}
        for i, s in SAMPLE_SOURCES
    ]
    requests = {}
    for kind, items in (
        ("translate", translate_items),
        ("logprob", logprob_items),
        ("quality", quality_items),
    ):
        body = json.dumps(items, sort_keys=True, separators=(",", ":")).encode()
        requests[kind] = {"batch_id": hashlib.sha256(body).hexdigest(), "items": items}
    return requests


def emit_fixtures(outdir: str | Path) -> dict[str, str]:
    """Write canonical request/response files; returns name -> sha256."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    client = TestClient(create_app(GatewayConfig()))
    checksums: dict[str, str] = {}

    def write(name: str, obj) -> None:
        text = canonical_wire(obj)
        (outdir / name).write_text(text, encoding="utf-8")
        checksums[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    for kind, request in _fixture_requests().items():
        reply = client.post(f"/{kind}", json=request)
        reply.raise_for_status()
        write(f"{kind}_request.json", request)
        write(f"{kind}_response.json", reply.json())
    write("health.json", client.get("/health").json())
    (outdir / "checksums.json").write_text(
        canonical_wire(checksums), encoding="utf-8"
    )
    return checksums
