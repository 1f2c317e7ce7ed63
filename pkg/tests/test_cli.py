import csv
import json

import pytest

from lutherie import cli
from lutherie.acoustics import pluck_partials, synthesize_tone, write_wav
from lutherie.geometry import standard_string_set
from lutherie.mesh import MeshReport, validate_mesh
from lutherie.stl import load_stl

MEASURED = (325, 243, 193, 289, 214, 164)


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv(cli.CONFIG_ENV, raising=False)


@pytest.fixture(scope="module")
def measured_wavs(tmp_path_factory):
    d = tmp_path_factory.mktemp("wavs")
    paths = []
    for i, f in enumerate(MEASURED, 1):
        p = d / f"string_{i}.wav"
        p.write_bytes(write_wav(synthesize_tone(f, 1.0, partials=pluck_partials())))
        paths.append(p)
    return paths


@pytest.fixture(scope="module")
def table_wavs(tmp_path_factory):
    d = tmp_path_factory.mktemp("table")
    paths = []
    for r in standard_string_set():
        p = d / f"string_{r.index}.wav"
        p.write_bytes(write_wav(synthesize_tone(r.frequency, 1.0, partials=pluck_partials())))
        paths.append(p)
    return paths


def write_cfg(tmp_path, text):
    p = tmp_path / "kit.cfg"
    p.write_text(text)
    return p


# -- frets ------------------------------------------------------------------


def test_frets_default(tmp_path, capsys):
    assert run("frets", "--out", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "frets.csv").open()))
    assert rows[0][0] == "fret"
    assert len(rows) - 1 == 19 + 1
    assert rows[13][:2] == ["12", "325.00"]
    assert "325.00" in capsys.readouterr().out


def test_frets_invalid_count(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "guitar.fret_count = 0\n")
    assert run("frets", "--config", cfg, "--out", tmp_path) == 2
    assert "line 1" in capsys.readouterr().err
    assert not (tmp_path / "frets.csv").exists()


def test_env_config_fallback(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, "guitar.fret_count = 12\n")
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    assert run("frets", "--out", tmp_path / "o") == 0
    assert len((tmp_path / "o" / "frets.csv").read_text().splitlines()) == 14


def test_output_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_cfg(tmp_path, "output_dir = built\n")
    assert run("frets", "--config", cfg) == 0
    assert (tmp_path / "built" / "frets.csv").exists()


def test_refuses_overwrite(tmp_path):
    assert run("frets", "--out", tmp_path) == 0
    before = (tmp_path / "frets.csv").read_bytes()
    cfg = write_cfg(tmp_path, "guitar.fret_count = 12\n")
    assert run("frets", "--out", tmp_path, "--config", cfg) == 2
    assert (tmp_path / "frets.csv").read_bytes() == before
    assert run("frets", "--out", tmp_path, "--config", cfg, "--force") == 0
    assert (tmp_path / "frets.csv").read_bytes() != before


# -- plan -------------------------------------------------------------------


def test_plan_default(tmp_path, capsys):
    assert run("plan", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "back_plate: 6 pieces" in out and "top_plate: 5 pieces" in out
    doc = json.loads((tmp_path / "plan.json").read_text())
    cli.check_schema(doc, "plan")
    counts = {p["label"]: len(p["pieces"]) for p in doc["parts"]}
    assert counts["back_plate"] == 6 and counts["top_plate"] == 5


def test_plan_big_plate(tmp_path):
    cfg = write_cfg(tmp_path, "plate.width = 1000\nplate.depth = 1000\n")
    assert run("plan", "--config", cfg, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "plan.json").read_text())
    assert all(len(p["pieces"]) == 1 for p in doc["parts"])


def test_plan_tiny_plate(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "plate.width = 10\nplate.depth = 10\n")
    assert run("plan", "--config", cfg, "--out", tmp_path) == 3
    assert "back_plate" in capsys.readouterr().err
    assert not (tmp_path / "plan.json").exists()


def test_plan_deterministic(tmp_path):
    assert run("plan", "--out", tmp_path / "a") == 0
    assert run("plan", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "plan.json").read_bytes() == (tmp_path / "b" / "plan.json").read_bytes()


# -- emit -------------------------------------------------------------------


def test_emit_default(tmp_path):
    assert run("plan", "--out", tmp_path) == 0
    assert run("emit", "--plan", tmp_path / "plan.json", "--out", tmp_path / "stl") == 0
    files = sorted((tmp_path / "stl").glob("*.stl"))
    names = [f.stem for f in files]
    assert len([n for n in names if n.startswith("back_plate_")]) == 6
    assert len([n for n in names if n.startswith("top_plate_")]) == 5
    assert len(files) == 17
    for f in files:
        assert validate_mesh(load_stl(f)).valid, f.name
    report = json.loads((tmp_path / "stl" / "emit_report.json").read_text())
    cli.check_schema(report, "emit_report")
    assert report["exit_status"] == 0
    assert all(v["valid"] for v in report["validation"])
    assert all(p["relative_error"] < 1e-3 for p in report["parts"])
    assert not list((tmp_path / "stl").glob("*.tmp"))


def test_emit_deterministic(tmp_path):
    assert run("emit", "--out", tmp_path / "a") == 0
    assert run("emit", "--out", tmp_path / "b") == 0
    for f in sorted((tmp_path / "a").glob("*.stl")):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_emit_empty_plan(tmp_path):
    plan = tmp_path / "empty.json"
    plan.write_text(json.dumps({"format": "lutherie-plan/1",
                                "plate": {"width": 254.0, "depth": 241.3}, "parts": []}))
    assert run("emit", "--plan", plan, "--out", tmp_path / "o") == 0
    assert list((tmp_path / "o").glob("*.stl")) == []


def test_emit_malformed_plan(tmp_path):
    plan = tmp_path / "bad.json"
    plan.write_text('{"format": "something-else"}')
    assert run("emit", "--plan", plan, "--out", tmp_path) == 2


def test_emit_unwritable_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert run("emit", "--out", blocker / "sub") == 4
    assert str(blocker / "sub") in capsys.readouterr().err


def test_emit_validation_failure_leaves_no_file(tmp_path, monkeypatch):
    real = cli.validate_mesh
    calls = {"n": 0}

    def flaky(mesh):
        rep = real(mesh)
        calls["n"] += 1
        if calls["n"] == 2:  # the re-read of the first file
            return MeshReport(rep.name, watertight=False, winding_consistent=True,
                              boundary_edges=[(0, 1)])
        return rep

    monkeypatch.setattr(cli, "validate_mesh", flaky)
    assert run("emit", "--out", tmp_path) == 4
    assert list(tmp_path.glob("*.stl")) == []
    assert not (tmp_path / "emit_report.json").exists()


# -- analyze ----------------------------------------------------------------


def test_analyze_measured_fixtures(tmp_path, measured_wavs, capsys):
    assert run("analyze", *measured_wavs, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "analysis.json").read_text())
    cli.check_schema(doc, "analysis")
    flags = [s["octave_flag"] for s in doc["strings"]]
    assert flags == [False, False, False, True, True, True]
    assert [s["measured_note"] for s in doc["strings"]] == ["E4", "B3", "G3", "D4", "A3", "E3"]
    assert doc["summary"]["mean_abs_delta_hz_strings_1_3"] == pytest.approx(3.86, abs=0.01)
    assert "x1.968" in capsys.readouterr().out


def test_analyze_strict(tmp_path, measured_wavs):
    assert run("analyze", *measured_wavs, "--out", tmp_path, "--strict") == 5


def test_analyze_table_fixtures(tmp_path, table_wavs):
    assert run("analyze", *table_wavs, "--out", tmp_path, "--strict") == 0
    doc = json.loads((tmp_path / "analysis.json").read_text())
    assert all(s["delta_hz"] == 0 for s in doc["strings"])
    assert doc["summary"]["octave_flag_count"] == 0


def test_analyze_five_files(tmp_path, measured_wavs):
    assert run("analyze", *measured_wavs[:5], "--out", tmp_path) == 2


def test_analyze_bad_wav(tmp_path, measured_wavs):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF0000WAVEjunk")
    assert run("analyze", *measured_wavs[:5], bad, "--out", tmp_path) == 2


def test_analyze_spectrum_csv(tmp_path, measured_wavs):
    assert run("analyze", *measured_wavs, "--out", tmp_path, "--spectrum-csv", tmp_path / "csv") == 0
    rows = (tmp_path / "csv" / "string_1_spectrum.csv").read_text().splitlines()
    assert rows[0] == "frequency_hz,magnitude"
    assert float(rows[-1].split(",")[0]) <= 2000.0


def test_analyze_deterministic(tmp_path, measured_wavs):
    assert run("analyze", *measured_wavs, "--out", tmp_path / "a") == 0
    assert run("analyze", *measured_wavs, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "analysis.json").read_bytes() == \
        (tmp_path / "b" / "analysis.json").read_bytes()


def test_usage_errors():
    assert run() == 2
    assert run("carve") == 2
    assert run("--version") == 0


def test_exit_codes_disjoint():
    codes = [cli.EXIT_OK, cli.EXIT_USAGE, cli.EXIT_INFEASIBLE, cli.EXIT_EMIT, cli.EXIT_STRICT]
    assert codes == [0, 2, 3, 4, 5]
