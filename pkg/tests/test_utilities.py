from datetime import timedelta
import hashlib
import json
from pathlib import Path

from prtrack.utilities import (
    RunManifest,
    Timer,
    file_sha256,
    manifest_path_for,
    strfdelta,
    write_csv_rows,
    write_json,
)
import pytest


@pytest.mark.parametrize(
    "seconds, output",
    (
        (0.0, "0h 0m 0.0s"),
        (1.1, "0h 0m 1.1s"),
        (100.24, "0h 1m 40.2s"),
        (1000.26, "0h 16m 40.3s"),
    ),
)
def test_strfdelta(seconds, output):
    """Test that strfdelta works as expected."""
    delta = timedelta(seconds=seconds)
    assert strfdelta(delta) == output


def test_strfdelta_days():
    """Test that strfdelta works as expected with a day field."""
    delta = timedelta(days=1, hours=2, seconds=5)
    assert strfdelta(delta, "{D}d {H}h {M}m {S:.0f}s") == "1d 2h 0m 5s"


def test_timer():
    """Test that Timer works as expected."""
    timer = Timer()
    assert timer.duration is None
    assert timer.seconds is None
    with timer:
        assert timer.duration is not None
    assert timer.end_time >= timer.start_time
    assert timer.duration == timer.end_time - timer.start_time


def test_file_sha256(tmp_path):
    """Test that file_sha256 works as expected."""
    path = tmp_path.joinpath("data.bin")
    path.write_bytes(b"prtrack")
    assert file_sha256(path) == hashlib.sha256(b"prtrack").hexdigest()


def test_write_csv_rows(tmp_path):
    """Test that floats are written with repr and the header is fixed."""
    path = write_csv_rows(
        tmp_path.joinpath("out", "rows.csv"),
        ("epsilon", "branch", "R"),
        [{"epsilon": 0.1, "branch": "half", "R": None}],
    )
    assert path.read_text() == "epsilon,branch,R\n0.1,half,\n"


def test_write_json(tmp_path):
    """Test that JSON is written sorted with a trailing newline."""
    path = write_json(tmp_path.joinpath("doc.json"), {"b": 1, "a": [1, 2]})
    text = path.read_text()
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1, 2], "b": 1}


def test_manifest_path_for():
    """Test that manifest_path_for works as expected."""
    assert manifest_path_for("results/sweep.csv") == Path("results/sweep.csv.manifest.json")


def test_manifest_round_trip(tmp_path):
    """Test that a manifest detects changed and missing outputs."""
    first = tmp_path.joinpath("a.csv")
    second = tmp_path.joinpath("b.csv")
    first.write_text("x\n")
    second.write_text("y\n")
    manifest = RunManifest(
        command="sweep",
        argv=["sweep", "--k", "2"],
        parameters={"k": 2},
        seed=42,
        version="0.1.0",
    )
    manifest.record_output(first)
    manifest.record_output(second)
    path = manifest.write(manifest_path_for(first))
    loaded = RunManifest.load(path)
    assert loaded == manifest
    assert loaded.mismatches() == []

    first.write_text("changed\n")
    second.unlink()
    assert loaded.mismatches() == sorted([str(first), str(second)])


def test_manifest_load_errors(tmp_path):
    """Test that missing and malformed manifests are rejected."""
    with pytest.raises(FileNotFoundError):
        RunManifest.load(tmp_path.joinpath("missing.json"))
    bogus = write_json(tmp_path.joinpath("bogus.json"), {"colour": "blue"})
    with pytest.raises(ValueError):
        RunManifest.load(bogus)
