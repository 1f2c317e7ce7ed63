from pathlib import Path

import pytest

from lutherie.config import default_config, load_config, parse_config
from lutherie.errors import ConfigError
from lutherie.geometry import GuitarSpec
from lutherie.partition import JointPolicy


def test_defaults():
    cfg = parse_config("")
    assert cfg.guitar == GuitarSpec()
    assert cfg.joint == JointPolicy()
    assert cfg.overrides["tuning_head"].clearance == pytest.approx(0.4064)
    assert cfg.overrides == default_config().overrides


def test_units_and_lists():
    cfg = parse_config(
        "# comment\n"
        "guitar.scale_length = 25.6in   # trailing comment\n"
        "guitar.fret_count = 20\n"
        "guitar.brace_positions = 190mm, 16.5 in\n"
        "plate.width = 300\n"
        "joint.clearance = 0.006in\n"
        "output_dir = out/kit\n"
    )
    assert cfg.guitar.scale_length == pytest.approx(650.24)
    assert cfg.guitar.fret_count == 20
    assert cfg.guitar.brace_positions == pytest.approx((190, 419.1))
    assert cfg.plate.width == 300 and cfg.plate.depth == 241.3
    assert cfg.joint.clearance == pytest.approx(0.1524)
    assert cfg.output_dir == Path("out/kit")


def test_override_follows_base_clearance():
    cfg = parse_config("joint.clearance = 0.2\n")
    assert cfg.overrides["tuning_head"].clearance == pytest.approx(0.454)


def test_explicit_part_override():
    cfg = parse_config("joint.fretboard.fillet = 2\njoint.tuning_head.clearance = 0.5\n")
    assert cfg.overrides["fretboard"].entry_fillet_radius == 2
    assert cfg.overrides["tuning_head"].clearance == 0.5


def test_fit_class():
    assert parse_config("joint.fit = loose").joint.clearance == 0.508


@pytest.mark.parametrize("text, line, column", [
    ("guitar.colour = red", 1, 1),
    ("\n\n   plate.height = 3", 3, 4),
    ("guitar.scale_length = 65cm", 1, 23),
    ("guitar.fret_count = 19.5", 1, 21),
    ("guitar.brace_positions = 200, abc", 1, 31),
    ("plate.width = 1\nplate.width = 2", 2, 1),
    ("just words", 1, 1),
    ("guitar.scale_length =", 1, 22),
    ("joint.fit = snug", 1, 13),
    ("guitar.fret_count = 0", 1, 1),
])
def test_errors_carry_position(text, line, column):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert (err.value.line, err.value.column) == (line, column)
    assert str(err.value).startswith(f"line {line}, column {column}:")


def test_invariant_errors_surface():
    with pytest.raises(ConfigError, match="waist"):
        parse_config("guitar.waist_width = 300")
    with pytest.raises(ConfigError):
        parse_config("plate.width = 0")


def test_load(tmp_path):
    p = tmp_path / "kit.cfg"
    p.write_text("guitar.fret_count = 18\n")
    assert load_config(p).guitar.fret_count == 18
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
