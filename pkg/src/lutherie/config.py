"""Flat ``key = value`` project files.

Example::

    # lengths take mm or in; bare numbers are mm
    guitar.scale_length = 25.59in
    guitar.brace_positions = 200, 420
    plate.width = 254
    joint.clearance = 0.006in
    joint.tuning_head.clearance = 0.4064
    output_dir = build

Unknown keys, duplicates and malformed values are rejected with the line and
column of the offending text.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ValidationError
from .geometry import MM_PER_INCH, PART_LABELS, GuitarSpec
from .partition import BuildPlate, FitClass, JointOverride, JointPolicy, joint_overrides_for

_NUMBER = re.compile(r"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(mm|in)?")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_INT_FIELDS = {"fret_count", "string_count"}
_GUITAR_FIELDS = {f.name for f in dataclasses.fields(GuitarSpec)}
_OVERRIDE_FIELDS = {"clearance": "clearance", "fillet": "entry_fillet_radius",
                    "base_clearance": "base_clearance"}


@dataclass
class ProjectConfig:
    guitar: GuitarSpec = field(default_factory=GuitarSpec)
    plate: BuildPlate = field(default_factory=BuildPlate)
    joint: JointPolicy = field(default_factory=JointPolicy)
    overrides: dict[str, JointOverride] = field(default_factory=dict)
    chord_tolerance: float = 1.0
    output_dir: Path | None = None
    source: Path | None = None


def _length(text: str, line: int, col: int) -> float:
    m = _NUMBER.fullmatch(text)
    if m is None:
        raise ConfigError(f"expected a length like '650mm' or '25.6in', got {text!r}", line, col)
    value = float(m.group(1))
    return value * MM_PER_INCH if m.group(2) == "in" else value


def _integer(text: str, line: int, col: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}", line, col) from None


def _lengths(text: str, line: int, col: int) -> tuple[float, ...]:
    out = []
    offset = 0
    for part in text.split(","):
        lead = len(part) - len(part.lstrip())
        item = part.strip()
        if item:
            out.append(_length(item, line, col + offset + lead))
        offset += len(part) + 1
    return tuple(out)


def parse_config(text: str, source: Path | None = None) -> ProjectConfig:
    guitar: dict = {}
    plate: dict = {}
    joint: dict = {}
    overrides: dict[str, dict] = {}
    cfg = ProjectConfig(source=source)
    seen: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        value = value_part.strip()
        val_col = len(key_part) + 1 + (len(value_part) - len(value_part.lstrip())) + 1
        if not _KEY.fullmatch(key):
            raise ConfigError(f"malformed key {key!r}", lineno, key_col)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})",
                              lineno, key_col)
        seen[key] = lineno
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno, val_col)
        parts = key.split(".")

        if parts[0] == "guitar" and len(parts) == 2 and parts[1] in _GUITAR_FIELDS:
            name = parts[1]
            if name in _INT_FIELDS:
                guitar[name] = _integer(value, lineno, val_col)
            elif name == "brace_positions":
                guitar[name] = _lengths(value, lineno, val_col)
            else:
                guitar[name] = _length(value, lineno, val_col)
        elif key == "guitar.chord_tolerance":
            cfg.chord_tolerance = _length(value, lineno, val_col)
            if cfg.chord_tolerance <= 0:
                raise ConfigError("chord_tolerance must be > 0", lineno, val_col)
        elif parts[0] == "plate" and len(parts) == 2 and parts[1] in ("width", "depth"):
            plate[parts[1]] = _length(value, lineno, val_col)
        elif key == "joint.fit":
            try:
                fit = FitClass(value)
            except ValueError:
                choices = ", ".join(f.value for f in FitClass)
                raise ConfigError(f"unknown fit {value!r}; choose {choices}", lineno, val_col) from None
            joint.setdefault("clearance", fit.clearance)
            joint["fit"] = fit.value
        elif key in ("joint.clearance", "joint.fillet"):
            joint["clearance" if parts[1] == "clearance" else "entry_fillet_radius"] = \
                _length(value, lineno, val_col)
        elif (parts[0] == "joint" and len(parts) == 3 and parts[1] in PART_LABELS
              and parts[2] in _OVERRIDE_FIELDS):
            overrides.setdefault(parts[1], {})[_OVERRIDE_FIELDS[parts[2]]] = \
                _length(value, lineno, val_col)
        elif key == "output_dir":
            cfg.output_dir = Path(value)
        else:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col)

    try:
        cfg.guitar = GuitarSpec(**guitar)
        cfg.plate = BuildPlate(**plate)
        if joint.get("clearance", 0.0) < 0 or joint.get("entry_fillet_radius", 0.0) < 0:
            raise ValidationError("joint clearance and fillet must be >= 0")
        cfg.joint = JointPolicy(**joint)
    except ValidationError as exc:
        message = str(exc)
        named = [k for k in seen if message.startswith(k.split(".")[-1] + " ")]
        line = seen[named[0]] if named else None
        raise ConfigError(message, line, 1 if line else None) from None
    cfg.overrides = _merge_overrides(overrides, cfg.joint.clearance)
    return cfg


def _merge_overrides(given: dict[str, dict], base_clearance: float) -> dict[str, JointOverride]:
    """Config entries replace the built-in per-part defaults field by field."""
    out = {}
    for label in PART_LABELS:
        default = dataclasses.asdict(joint_overrides_for(label, base_clearance))
        default.update(given.get(label, {}))
        out[label] = JointOverride(**default)
    return out


def load_config(path: str | Path) -> ProjectConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not UTF-8 text") from None
    return parse_config(text, source=path)


def default_config() -> ProjectConfig:
    cfg = ProjectConfig()
    cfg.overrides = _merge_overrides({}, cfg.joint.clearance)
    return cfg
