import json

from alsel_gateway.__main__ import main


def test_emit_fixtures_command(tmp_path, capsys):
    assert main(["emit-fixtures", "--outdir", str(tmp_path / "fx")]) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert len(printed) == 7  # three request/response pairs plus health
    checksums = json.loads((tmp_path / "fx" / "checksums.json").read_text())
    for line in printed:
        digest, name = line.split()
        assert checksums[name] == digest


def test_serve_refuses_to_start_on_unloadable_quality_backend(capsys):
    code = main(["serve", "--quality-backend", "comet:/nonexistent/checkpoint.ckpt"])
    assert code == 1
    assert "refusing to start" in capsys.readouterr().err
