"""``lutherie`` command line.

Exit codes: 0 success, 2 usage or config error, 3 a part cannot be
partitioned, 4 emission or validation failure, 5 octave flags under
``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .acoustics import (
    ANALYSIS_FFT_SIZE,
    analyze_string,
    read_wav,
    spectrum_rows,
    summarize,
    windowed_spectrum,
)
from .config import ProjectConfig, default_config, load_config
from .errors import (
    ConfigError,
    FormatError,
    GeometryError,
    InfeasiblePartitionError,
    NoSignalError,
    ValidationError,
)
from .geometry import fret_positions, standard_string_set
from .mesh import extrude, joint_volume, piece_mesh, validate_mesh
from .partition import (
    plan_guitar,
    project_plan_from_dict,
    project_plan_to_dict,
    validate_project,
)
from .stl import facet_normals, read_stl, save_stl, stored_normals

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_EMIT = 4
EXIT_STRICT = 5

CONFIG_ENV = "LUTHERIE_CONFIG"
SPECTRUM_CSV_MAX_HZ = 2000.0
ADDITIVITY_TOLERANCE = 1e-3


class CommandError(Exception):
    def __init__(self, message: str, status: int):
        self.status = status
        super().__init__(message)


@dataclass
class RunReport:
    command: str
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    validation: list[dict] = field(default_factory=list)
    parts: list[dict] = field(default_factory=list)
    exit_status: int = EXIT_OK

    def to_dict(self) -> dict:
        return {"format": "lutherie-report/1", "command": self.command,
                "inputs": list(self.inputs), "outputs": list(self.outputs),
                "validation": list(self.validation), "parts": list(self.parts),
                "exit_status": self.exit_status}


def load_schema(name: str) -> dict:
    text = resources.files("lutherie").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def check_schema(doc: dict, name: str) -> None:
    jsonschema.validate(doc, load_schema(name))


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _config(args) -> ProjectConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    return load_config(path) if path else default_config()


def _out_dir(args, cfg: ProjectConfig) -> Path:
    if args.out:
        return Path(args.out)
    return cfg.output_dir if cfg.output_dir is not None else Path(".")


def _claim(paths: list[Path], force: bool) -> None:
    """Refuse to replace existing files unless forced."""
    taken = [str(p) for p in paths if p.exists()]
    if taken and not force:
        raise CommandError(f"refusing to overwrite {', '.join(taken)} (use --force)", EXIT_USAGE)


def _prepare(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {out}: {exc.strerror}", EXIT_EMIT)


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        if tmp.exists():
            tmp.unlink()
        raise CommandError(f"cannot write {path}: {exc.strerror}", EXIT_EMIT)


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_frets(args) -> RunReport:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    target = out / "frets.csv"
    _claim([target], args.force)
    positions = fret_positions(cfg.guitar)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fret", "distance_from_nut_mm", "spacing_mm"])
    print(f"{'fret':>4}  {'from nut':>10}  {'spacing':>8}")
    for n, x in enumerate(positions):
        gap = x - positions[n - 1] if n else 0.0
        writer.writerow([n, f"{x:.2f}", f"{gap:.2f}"])
        print(f"{n:>4}  {x:>10.2f}  {gap:>8.2f}")
    _prepare(out)
    _write_text(target, buf.getvalue())
    return RunReport("frets", _inputs(args), [str(target)])


def _plans(cfg: ProjectConfig):
    try:
        return plan_guitar(cfg.guitar, cfg.plate, cfg.joint, cfg.overrides, cfg.chord_tolerance)
    except InfeasiblePartitionError as exc:
        raise CommandError(f"infeasible: {exc}", EXIT_INFEASIBLE)


def cmd_plan(args) -> RunReport:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    target = out / "plan.json"
    _claim([target], args.force)
    plans = _plans(cfg)
    reports = validate_project(plans)
    doc = project_plan_to_dict(plans, cfg.plate)
    check_schema(doc, "plan")
    for plan, rep in zip(plans, reports):
        glued = " (glued)" if plan.policy.adhesive_only else ""
        status = "ok" if rep.valid else "INVALID"
        count = len(plan.pieces)
        print(f"{plan.label}: {count} piece{'' if count == 1 else 's'}{glued} [{status}]")
        for f in rep.failures:
            print(f"  {f}")
    _prepare(out)
    _write_text(target, _dump(doc))
    run = RunReport("plan", _inputs(args), [str(target)],
                    validation=[r.to_dict() for r in reports])
    if not all(r.valid for r in reports):
        run.exit_status = EXIT_EMIT
    return run


def _read_plan(path: str):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        check_schema(doc, "plan")
        return project_plan_from_dict(doc)
    except OSError as exc:
        raise CommandError(f"cannot read plan {path}: {exc.strerror}", EXIT_USAGE)
    except (json.JSONDecodeError, jsonschema.ValidationError, KeyError, TypeError,
            ValueError) as exc:
        raise CommandError(f"malformed plan {path}: {exc}", EXIT_USAGE)


def _check_file(path: Path) -> tuple[dict, float]:
    """Re-read an emitted file and validate what is actually on disk."""
    data = path.read_bytes()
    mesh = read_stl(data)
    rep = validate_mesh(mesh)
    errors = []
    if not rep.watertight:
        errors.append(f"{len(rep.boundary_edges)} boundary and "
                      f"{len(rep.nonmanifold_edges)} non-manifold edges")
    if not rep.winding_consistent:
        errors.append("inconsistent winding")
    if rep.degenerate_triangles:
        errors.append(f"{len(rep.degenerate_triangles)} degenerate triangles")
    stored = stored_normals(data)
    expected = facet_normals(mesh.soup())
    if len(stored) and (np.abs(np.linalg.norm(stored, axis=1) - 1.0).max() > 1e-5
                        or np.einsum("ij,ij->i", stored, expected).min() <= 0):
        errors.append("stored normals disagree with winding")
    return {"file": path.name, "valid": rep.valid and not errors,
            "watertight": rep.watertight, "winding_consistent": rep.winding_consistent,
            "degenerate_triangles": len(rep.degenerate_triangles),
            "triangles": int(len(mesh.triangles)), "volume": round(rep.volume, 6),
            "euler_characteristic": rep.euler_characteristic, "genus": rep.genus,
            "errors": errors}, rep.volume


def cmd_emit(args) -> RunReport:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    plans = _read_plan(args.plan) if args.plan else _plans(cfg)
    names = [out / f"{p.name}.stl" for plan in plans for p in plan.pieces]
    report_path = out / "emit_report.json"
    _claim(names + [report_path], args.force)
    _prepare(out)

    run = RunReport("emit", _inputs(args) + ([args.plan] if args.plan else []))
    for plan in plans:
        thickness = plan.thickness or cfg.guitar.thickness_for(plan.label)
        total = 0.0
        net = 0.0
        for piece in plan.pieces:
            path = out / f"{piece.name}.stl"
            try:
                mesh = piece_mesh(piece, thickness)
            except (GeometryError, ValidationError) as exc:
                raise CommandError(f"{piece.name}: {exc}", EXIT_EMIT)
            if not validate_mesh(mesh).valid:
                raise CommandError(f"{piece.name}: mesh failed validation before writing",
                                   EXIT_EMIT)
            try:
                save_stl(mesh, path, label=piece.name)
            except OSError as exc:
                raise CommandError(f"cannot write {path}: {exc.strerror}", EXIT_EMIT)
            entry, volume = _check_file(path)
            run.outputs.append(str(path))
            run.validation.append(entry)
            if not entry["valid"]:
                path.unlink()
                run.outputs.pop()
                raise CommandError(f"{path}: {'; '.join(entry['errors'])}", EXIT_EMIT)
            total += volume
            net += sum(joint_volume(j.spec, j.role) for j in piece.joints)
        parent = extrude(plan.parent, thickness).volume
        rel = abs(total - (parent + net)) / parent
        run.parts.append({"label": plan.label, "parent_volume": round(parent, 6),
                          "net_joint_volume": round(net, 6), "piece_volume": round(total, 6),
                          "relative_error": rel})
        print(f"{plan.label}: {len(plan.pieces)} files, volume error {rel:.1e}")
        if rel > ADDITIVITY_TOLERANCE:
            raise CommandError(f"{plan.label}: piece volumes do not add up ({rel:.2e})",
                               EXIT_EMIT)

    doc = run.to_dict()
    check_schema(doc, "emit_report")
    _write_text(report_path, _dump(doc))
    run.outputs.append(str(report_path))
    print(f"wrote {len(names)} STL files to {out}")
    return run


def cmd_analyze(args) -> RunReport:
    if len(args.wavs) != 6:
        raise CommandError(f"analyze needs 6 WAV files (string 1 to 6), got {len(args.wavs)}",
                           EXIT_USAGE)
    cfg = _config(args)
    out = _out_dir(args, cfg)
    target = out / "analysis.json"
    csv_dir = Path(args.spectrum_csv) if args.spectrum_csv else None
    csv_paths = [csv_dir / f"string_{i}_spectrum.csv" for i in range(1, 7)] if csv_dir else []
    _claim([target] + csv_paths, args.force)

    refs = standard_string_set()
    reports = []
    spectra = []
    for path, ref in zip(args.wavs, refs):
        try:
            buf = read_wav(Path(path).read_bytes())
        except OSError as exc:
            raise CommandError(f"cannot read {path}: {exc.strerror}", EXIT_USAGE)
        except FormatError as exc:
            raise CommandError(f"{path}: {exc}", EXIT_USAGE)
        try:
            reports.append(analyze_string(buf, ref))
        except NoSignalError as exc:
            raise CommandError(f"{path}: {exc}", EXIT_EMIT)
        if csv_dir:
            spectra.append(windowed_spectrum(buf, "hann", ANALYSIS_FFT_SIZE))
    result = summarize(reports)
    doc = {"format": "lutherie-analysis/1", "inputs": [Path(p).name for p in args.wavs],
           **result.to_dict()}
    check_schema(doc, "analysis")

    print(f"{'str':>3}  {'ref':>4} {'ref Hz':>8}  {'meas Hz':>8} {'note':>4}  "
          f"{'delta':>8}  {'cents':>7}  octave")
    for r in result.strings:
        flag = f"x{r.octave_ratio:.3f}" if r.octave_flag else ""
        print(f"{r.string_index:>3}  {r.reference.note_name:>4} {r.reference.frequency:>8.2f}  "
              f"{r.measured:>8.2f} {r.note or '?':>4}  {r.delta_hz:>+8.2f}  {r.cents:>+7.1f}  {flag}")
    print(f"mean |delta| strings 1-3: {result.mean_abs_delta_1_3:.2f} Hz; "
          f"octave flags: {result.octave_flag_count}")

    _prepare(out)
    _write_text(target, _dump(doc))
    outputs = [str(target)]
    if csv_dir:
        _prepare(csv_dir)
        for path, spec in zip(csv_paths, spectra):
            lines = ["frequency_hz,magnitude"]
            lines += [f"{f:.4f},{m:.6e}" for f, m in spectrum_rows(spec, SPECTRUM_CSV_MAX_HZ)]
            _write_text(path, "\n".join(lines) + "\n")
            outputs.append(str(path))
    run = RunReport("analyze", _inputs(args) + list(args.wavs), outputs)
    if args.strict and result.octave_flag_count:
        print(f"strict: octave flags on strings {result.flagged_strings}", file=sys.stderr)
        run.exit_status = EXIT_STRICT
    return run


def _inputs(args) -> list[str]:
    path = args.config or os.environ.get(CONFIG_ENV)
    return [str(path)] if path else []


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"project file (default: ${CONFIG_ENV})")
    common.add_argument("--out", help="output directory (default: config output_dir or .)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    parser = argparse.ArgumentParser(prog="lutherie",
                                     description="Printable guitar kit toolchain.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("frets", parents=[common], help="fret positions table and frets.csv")
    p.set_defaults(func=cmd_frets)

    p = sub.add_parser("plan", parents=[common], help="partition all parts into plan.json")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("emit", parents=[common], help="write one STL per piece")
    p.add_argument("--plan", help="plan.json to emit (default: plan from the config)")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("analyze", parents=[common], help="compare six string recordings")
    p.add_argument("wavs", nargs="*", metavar="WAV", help="recordings, string 1 to 6")
    p.add_argument("--reference", choices=["standard"], default="standard")
    p.add_argument("--strict", action="store_true", help="exit 5 when octave flags are raised")
    p.add_argument("--spectrum-csv", metavar="DIR", help="also write spectrum CSVs to DIR")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = args.func(args)
    except CommandError as exc:
        print(f"lutherie: error: {exc}", file=sys.stderr)
        return exc.status
    except ConfigError as exc:
        print(f"lutherie: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"lutherie: invalid value: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run.exit_status


if __name__ == "__main__":
    sys.exit(main())
