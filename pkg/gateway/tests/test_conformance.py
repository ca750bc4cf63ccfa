"""Gateway acceptance: the engine's client and this service agree.

The golden fixtures must parse in the engine's client and round-trip
byte-exactly; random logprob traffic must satisfy the shape/sign
contracts end to end; and, when a real QE backend is available, better
hypotheses must score strictly higher (skipped otherwise).
"""

import json
import random
import socket
import threading
import time
from pathlib import Path

import pytest

from alsel.errors import ProtocolError
from alsel.corpus import MonoPool, make_record
from alsel.gateway_client import (
    HttpGatewayBackend,
    canonical_wire,
    parse_message,
    validate_response,
)
from alsel.scorers import ModelEndpoint, score_pool

from alsel_gateway.app import GatewayConfig, create_app
from alsel_gateway.backends import BackendUnavailable, load_quality_backend
from alsel_gateway.fixtures import emit_fixtures

COMMITTED = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    if COMMITTED.exists():
        return COMMITTED
    out = tmp_path_factory.mktemp("fixtures")
    emit_fixtures(out)
    return out


def test_fixtures_parse_in_engine_client_and_round_trip(fixture_dir):
    for kind in ("translate", "logprob", "quality"):
        request_text = (fixture_dir / f"{kind}_request.json").read_text(encoding="utf-8")
        response_text = (fixture_dir / f"{kind}_response.json").read_text(encoding="utf-8")
        request = parse_message(kind, request_text, role="request")
        response = parse_message(kind, response_text)
        validate_response(kind, response, request=request)
        assert canonical_wire(request) == request_text
        assert canonical_wire(response) == response_text


def test_corrupted_fixture_is_a_protocol_error(fixture_dir):
    text = (fixture_dir / "translate_response.json").read_text(encoding="utf-8")
    with pytest.raises(ProtocolError):
        parse_message("translate", text[: len(text) // 2])
    broken = json.loads(text)
    del broken["results"]
    with pytest.raises(ProtocolError):
        parse_message("translate", json.dumps(broken))


@pytest.fixture(scope="module")
def live_gateway():
    """Real uvicorn server on a loopback port; the engine dials it over HTTP."""
    import uvicorn

    app = create_app(GatewayConfig(max_batch=64))
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            pytest.skip("gateway server did not start (sockets unavailable?)")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def _engine_backend(url):
    return HttpGatewayBackend(
        {
            "forward": ModelEndpoint(url, "forward"),
            "reverse": ModelEndpoint(url, "reverse"),
            "quality": ModelEndpoint(url, "quality"),
        },
        backoff=0.0,
    )


def test_random_logprob_requests_through_engine_client(live_gateway):
    backend = _engine_backend(live_gateway)
    rng = random.Random(23)
    for _ in range(100):
        items = []
        for i in range(rng.randint(1, 10)):
            tokens = [f"t{rng.randint(0, 99)}" for _ in range(rng.randint(1, 25))]
            items.append({"id": i, "source_tokens": tokens, "hypothesis": " ".join(tokens)})
        results = backend.logprob(items)
        assert [r["id"] for r in results] == [i["id"] for i in items]
        for item, result in zip(items, results):
            assert len(result["token_logprobs"]) == len(item["source_tokens"])
            assert all(lp <= 0 for lp in result["token_logprobs"])
    backend.close()


def test_engine_scores_a_pool_against_the_live_gateway(live_gateway):
    rng = random.Random(5)
    pool = MonoPool(
        tuple(
            make_record(i, " ".join(f"w{rng.randint(0, 30)}" for _ in range(rng.randint(1, 9))), None)
            for i in range(150)
        )
    )
    backend = _engine_backend(live_gateway)
    run = score_pool(pool, backend, "rttl", batch_size=32)
    assert len(run.candidates) == 150
    assert run.batches == 5
    assert all(c.priority >= 0 for c in run.candidates)
    again = score_pool(pool, backend, "rttl", batch_size=32)
    assert run.candidates == again.candidates
    qe = score_pool(pool, backend, "qe", batch_size=64)
    assert len(qe.candidates) == 150
    backend.close()


def test_health_probe_through_engine_client(live_gateway):
    backend = _engine_backend(live_gateway)
    health = backend.health()
    assert health["forward"]["status"] == "ok"
    assert health["forward"]["deterministic"] is True
    backend.close()


HELD_OUT_PAIRS = [
    ("el rio baja muy crecido esta manana", "the river is running very high this morning"),
    ("no hay pan en la tienda hoy", "there is no bread in the shop today"),
    ("la reunion empieza a las nueve", "the meeting starts at nine"),
    ("mi hermana vive cerca del mercado", "my sister lives near the market"),
    ("el tren llego tarde otra vez", "the train arrived late again"),
    ("hace mucho frio en la montana", "it is very cold in the mountains"),
    ("los ninos juegan en el patio", "the children are playing in the yard"),
    ("necesitamos mas agua para el campo", "we need more water for the field"),
    ("ella escribio una carta muy larga", "she wrote a very long letter"),
    ("el medico atiende por la tarde", "the doctor sees patients in the afternoon"),
    ("compramos fruta fresca cada semana", "we buy fresh fruit every week"),
    ("la puerta del almacen esta rota", "the warehouse door is broken"),
    ("mi padre trabaja en la fabrica", "my father works at the factory"),
    ("el precio del maiz subio ayer", "the price of maize went up yesterday"),
    ("llueve desde la madrugada", "it has been raining since dawn"),
    ("la escuela cierra en diciembre", "the school closes in december"),
    ("perdimos el autobus de la manana", "we missed the morning bus"),
    ("su casa tiene un techo nuevo", "their house has a new roof"),
    ("el pozo del pueblo se seco", "the village well dried up"),
    ("leyo el libro en dos dias", "she read the book in two days"),
]


def test_quality_ordering_with_real_backend_when_available():
    try:
        backend = load_quality_backend()
    except BackendUnavailable as exc:
        pytest.skip(f"no real QE backend: {exc}")
    rng = random.Random(7)
    items_good, items_bad = [], []
    for i, (source, reference) in enumerate(HELD_OUT_PAIRS):
        words = source.split()
        rng.shuffle(words)
        items_good.append({"id": i, "source": source, "hypothesis": reference})
        items_bad.append({"id": i, "source": source, "hypothesis": " ".join(words)})
    good = backend.quality(items_good)
    bad = backend.quality(items_bad)
    for g, b in zip(good, bad):
        assert g["score"] > b["score"]
