import json
from pathlib import Path

import pytest

from alsel_gateway.fixtures import emit_fixtures

COMMITTED = Path(__file__).resolve().parent.parent / "fixtures"


def test_emission_is_stable_across_runs(tmp_path):
    first = emit_fixtures(tmp_path / "a")
    second = emit_fixtures(tmp_path / "b")
    assert first == second
    for name in first:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_committed_fixtures_match_reemission(tmp_path):
    if not COMMITTED.exists():
        pytest.skip("fixtures not generated yet")
    fresh = emit_fixtures(tmp_path / "out")
    committed = json.loads((COMMITTED / "checksums.json").read_text())
    assert fresh == committed
    for name in fresh:
        assert (tmp_path / "out" / name).read_bytes() == (COMMITTED / name).read_bytes()


def test_fixture_files_are_canonical_json(tmp_path):
    emit_fixtures(tmp_path)
    from alsel_gateway.protocol import canonical_wire

    for path in tmp_path.glob("*.json"):
        text = path.read_text(encoding="utf-8")
        assert canonical_wire(json.loads(text)) == text
