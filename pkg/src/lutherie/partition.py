"""Split oversized part outlines into plate-sized pieces joined by press fits.

Cuts are straight guillotine lines perpendicular to x or y. User hints are
tried first (in order, and only on pieces that still do not fit); any piece
left oversized is then bisected at equal area. Every cut shared by two pieces
carries a male/female box joint unless the part is glued.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import shapely.affinity
from scipy.optimize import brentq
from shapely.geometry import Polygon, box
from shapely.geometry.polygon import orient

from .errors import GeometryError, InfeasiblePartitionError, ValidationError
from .geometry import (
    PART_LABELS,
    REINFORCEMENT_BASE_CLEARANCE,
    GuitarSpec,
    Outline,
    build_outlines,
    signed_area,
)

# Measured press-fit choice: 0.006 in total clearance, 0.03 in entry fillet,
# 1 in cube heads.
DEFAULT_CLEARANCE = 0.1524
DEFAULT_FILLET = 0.762
DEFAULT_HEAD = 25.4
TUNING_HEAD_EXTRA_CLEARANCE = 0.254
FRETBOARD_FILLET = 1.27
DEFAULT_WALL = 0.5
DEFAULT_OVERHANG = 5.0
MIN_JOINT_SIZE = 2.0

_SNAP = 1e-7
_DIRECTIONS = ("+x", "-x", "+y", "-y")


class FitClass(Enum):
    PRESS = "press"
    TIGHT = "tight"
    NORMAL = "normal"
    LOOSE = "loose"

    @property
    def clearance(self) -> float:
        return _FIT_CLEARANCE_MM[self]


# Clearance gap per fit class, mm (Press is line-to-line).
_FIT_CLEARANCE_MM = {
    FitClass.PRESS: 0.0,
    FitClass.TIGHT: 0.127,
    FitClass.NORMAL: 0.254,
    FitClass.LOOSE: 0.508,
}


def tolerance_clearance(fit: FitClass) -> float:
    return _FIT_CLEARANCE_MM[FitClass(fit)]


@dataclass(frozen=True)
class BuildPlate:
    """Printable area in mm; the default is a 10 x 9.5 in bed."""

    width: float = 254.0
    depth: float = 241.3

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0):
            raise ValidationError(f"build plate dimensions must be > 0, got {self.width} x {self.depth}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.depth)

    def fits(self, w: float, h: float, eps: float = 1e-9) -> bool:
        """True if a w x h box fits in either axis-aligned orientation."""
        return ((w <= self.width + eps and h <= self.depth + eps)
                or (h <= self.width + eps and w <= self.depth + eps))


# ---------------------------------------------------------------------------
# Joints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointLocation:
    """Centre of the joint's mouth on the cut face.

    ``direction`` is the insertion direction: the way the male head travels
    into the female cavity. It is the outward normal of the male face and
    the inward normal of the female face.
    """

    x: float
    y: float
    z: float
    direction: str

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValidationError(f"direction must be one of {_DIRECTIONS}, got {self.direction!r}")


@dataclass(frozen=True)
class JointSpec:
    male_width: float
    male_height: float
    male_depth: float
    clearance: float = DEFAULT_CLEARANCE
    entry_fillet_radius: float = DEFAULT_FILLET
    location: JointLocation = JointLocation(0.0, 0.0, 0.0, "+x")

    def __post_init__(self):
        dims = (self.male_width, self.male_height, self.male_depth)
        if not all(math.isfinite(d) and d > 0 for d in dims):
            raise ValidationError(f"male dimensions must be > 0, got {dims}")
        if not (math.isfinite(self.clearance) and self.clearance >= 0):
            raise ValidationError(f"clearance must be >= 0, got {self.clearance}")
        if not (math.isfinite(self.entry_fillet_radius) and self.entry_fillet_radius >= 0):
            raise ValidationError(f"entry_fillet_radius must be >= 0, got {self.entry_fillet_radius}")
        if self.entry_fillet_radius >= min(dims) / 2:
            raise GeometryError(
                f"entry fillet {self.entry_fillet_radius} mm must be smaller than half the "
                f"smallest male dimension ({min(dims) / 2} mm)"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "JointSpec":
        d = dict(d)
        d["location"] = JointLocation(**d["location"])
        return cls(**d)


@dataclass(frozen=True)
class BoxExtents:
    """Exact (rational) box dimensions: width and height across the
    insertion axis, depth along it."""

    width: Fraction
    height: Fraction
    depth: Fraction


@dataclass(frozen=True)
class CavityExtents(BoxExtents):
    entry_fillet_radius: Fraction = Fraction(0)

    @property
    def mouth_width(self) -> Fraction:
        return self.width + 2 * self.entry_fillet_radius

    @property
    def mouth_height(self) -> Fraction:
        return self.height + 2 * self.entry_fillet_radius


def synthesize_joint(j: JointSpec) -> tuple[BoxExtents, CavityExtents]:
    """Male head and female cavity extents for one joint.

    The cavity is the male cross-section grown by the total clearance on
    both mating axes, equally deep, with its entry edges eased by the fillet.
    Arithmetic is exact on the binary values of the inputs, so
    ``female.width - male.width == Fraction(j.clearance)`` always holds.
    """
    r = Fraction(j.entry_fillet_radius)
    dims = [Fraction(j.male_width), Fraction(j.male_height), Fraction(j.male_depth)]
    if r >= min(dims) / 2:
        raise GeometryError("entry fillet must be smaller than half of every male dimension")
    c = Fraction(j.clearance)
    male = BoxExtents(*dims)
    female = CavityExtents(dims[0] + c, dims[1] + c, dims[2], r)
    return male, female


@dataclass(frozen=True)
class JointOverride:
    clearance: float | None = None
    entry_fillet_radius: float | None = None
    base_clearance: float | None = None

    @property
    def empty(self) -> bool:
        return self.clearance is None and self.entry_fillet_radius is None and self.base_clearance is None


def joint_overrides_for(part_label: str, base_clearance: float = DEFAULT_CLEARANCE) -> JointOverride:
    """Per-part departures from the default joint policy.

    The tuning-head tenon cracked the neck at the default clearance and
    gets 0.01 in more; the fretboard heads need 0.05 in fillets; the
    reinforcement block gets 0.01 in at its base.
    """
    if part_label not in PART_LABELS:
        raise ValidationError(f"unknown part label {part_label!r}")
    if part_label == "tuning_head":
        return JointOverride(clearance=base_clearance + TUNING_HEAD_EXTRA_CLEARANCE)
    if part_label == "fretboard":
        return JointOverride(entry_fillet_radius=FRETBOARD_FILLET)
    if part_label == "reinforcement":
        return JointOverride(base_clearance=REINFORCEMENT_BASE_CLEARANCE)
    return JointOverride()


@dataclass(frozen=True)
class JointPolicy:
    clearance: float = DEFAULT_CLEARANCE
    entry_fillet_radius: float = DEFAULT_FILLET
    male_width: float = DEFAULT_HEAD
    male_height: float = DEFAULT_HEAD
    male_depth: float = DEFAULT_HEAD
    adhesive_only: bool = False
    overhang: float = 0.0
    wall: float = DEFAULT_WALL
    fit: str | None = None
    overrides: dict = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_fit(cls, fit: FitClass, **kw) -> "JointPolicy":
        return cls(clearance=fit.clearance, fit=fit.value, **kw)

    def with_override(self, ov: JointOverride) -> "JointPolicy":
        changes = {}
        if ov.clearance is not None:
            changes["clearance"] = ov.clearance
        if ov.entry_fillet_radius is not None:
            changes["entry_fillet_radius"] = ov.entry_fillet_radius
        applied = {k: v for k, v in asdict(ov).items() if v is not None}
        return replace(self, overrides={**self.overrides, **applied}, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "JointPolicy":
        return cls(**d)


# ---------------------------------------------------------------------------
# Plan types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutHint:
    """A guillotine line ``axis = at``; ``axis='x'`` is a vertical line.

    With ``span`` set, the hint only cuts pieces whose extent along the
    line lies inside ``span``.
    """

    axis: str
    at: float
    span: tuple[float, float] | None = None

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValidationError(f"cut axis must be 'x' or 'y', got {self.axis!r}")


@dataclass(frozen=True)
class MateSpec:
    """A joint on an outer edge that mates with another part.

    ``edge`` is one of min_x/max_x/min_y/max_y of the part's outline.
    """

    joint_id: str
    edge: str
    role: str
    joint: JointSpec


@dataclass(frozen=True)
class PieceJoint:
    joint_id: str
    role: str
    spec: JointSpec
    cut_line: int | None = None

    def to_dict(self) -> dict:
        return {"id": self.joint_id, "role": self.role, "cut_line": self.cut_line,
                "spec": self.spec.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PieceJoint":
        return cls(d["id"], d["role"], JointSpec.from_dict(d["spec"]), d.get("cut_line"))


@dataclass(frozen=True)
class Piece:
    outline: Outline
    joints: tuple[PieceJoint, ...]
    parent_label: str
    sequence: int

    @property
    def name(self) -> str:
        return f"{self.parent_label}_{self.sequence}"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sequence": self.sequence,
            "parent_label": self.parent_label,
            "outline": self.outline.to_dict(),
            "area": self.outline.area,
            "joints": [j.to_dict() for j in self.joints],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Piece":
        return cls(Outline.from_dict(d["outline"]),
                   tuple(PieceJoint.from_dict(j) for j in d["joints"]),
                   d["parent_label"], d["sequence"])


@dataclass(frozen=True)
class CutLine:
    id: int
    axis: str
    at: float
    start: tuple[float, float]
    end: tuple[float, float]
    adhesive_only: bool = False
    overhang: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "axis": self.axis, "at": self.at, "start": list(self.start),
                "end": list(self.end), "adhesive_only": self.adhesive_only,
                "overhang": self.overhang, "note": self.note}

    @classmethod
    def from_dict(cls, d: dict) -> "CutLine":
        return cls(d["id"], d["axis"], d["at"], tuple(d["start"]), tuple(d["end"]),
                   d["adhesive_only"], d.get("overhang", 0.0), d.get("note", ""))


@dataclass(frozen=True)
class PartitionPlan:
    label: str
    parent: Outline
    thickness: float
    pieces: tuple[Piece, ...]
    cut_lines: tuple[CutLine, ...]
    plate: BuildPlate
    policy: JointPolicy
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def joints(self) -> list[dict]:
        """One record per joint id with its male and female piece."""
        by_id: dict[str, dict] = {}
        for piece in self.pieces:
            for j in piece.joints:
                rec = by_id.setdefault(j.joint_id, {"id": j.joint_id, "cut_line": j.cut_line,
                                                    "male": None, "female": None})
                rec[j.role] = piece.name
        return [by_id[k] for k in sorted(by_id, key=_joint_sort_key)]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "thickness": self.thickness,
            "parent": self.parent.to_dict(),
            "parent_area": self.parent.area,
            "plate": asdict(self.plate),
            "policy": self.policy.to_dict(),
            "pieces": [p.to_dict() for p in self.pieces],
            "cut_lines": [c.to_dict() for c in self.cut_lines],
            "joints": self.joints(),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionPlan":
        return cls(
            label=d["label"],
            parent=Outline.from_dict(d["parent"]),
            thickness=d["thickness"],
            pieces=tuple(Piece.from_dict(p) for p in d["pieces"]),
            cut_lines=tuple(CutLine.from_dict(c) for c in d["cut_lines"]),
            plate=BuildPlate(**d["plate"]),
            policy=JointPolicy.from_dict(d["policy"]),
            metadata=dict(d.get("metadata", {})),
        )


def _joint_sort_key(joint_id: str):
    head, _, num = joint_id.rpartition("-")
    return (head, int(num)) if num.isdigit() else (joint_id, 0)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


def _fits(poly: Polygon, plate: BuildPlate) -> bool:
    x0, y0, x1, y1 = poly.bounds
    return plate.fits(x1 - x0, y1 - y0)


def _polygons(geom) -> list[Polygon]:
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    return [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon" and g.area > 1e-9]


def _split(poly: Polygon, axis: str, at: float) -> list[Polygon]:
    x0, y0, x1, y1 = poly.bounds
    pad = 1.0
    if axis == "x":
        lo, hi = box(x0 - pad, y0 - pad, at, y1 + pad), box(at, y0 - pad, x1 + pad, y1 + pad)
    else:
        lo, hi = box(x0 - pad, y0 - pad, x1 + pad, at), box(x0 - pad, at, x1 + pad, y1 + pad)
    return _polygons(poly.intersection(lo)) + _polygons(poly.intersection(hi))


def _crosses(poly: Polygon, axis: str, at: float) -> bool:
    x0, y0, x1, y1 = poly.bounds
    lo, hi = (x0, x1) if axis == "x" else (y0, y1)
    return lo + 1e-6 < at < hi - 1e-6


def _extent_along(poly: Polygon, axis: str) -> tuple[float, float]:
    x0, y0, x1, y1 = poly.bounds
    return (y0, y1) if axis == "x" else (x0, x1)


def _segment(poly: Polygon, axis: str, at: float) -> tuple[tuple[float, float], tuple[float, float]]:
    a, b = _extent_along(poly, axis)
    return ((at, a), (at, b)) if axis == "x" else ((a, at), (b, at))


def _equal_area_cut(poly: Polygon) -> tuple[str, float]:
    x0, y0, x1, y1 = poly.bounds
    axis = "x" if (x1 - x0) >= (y1 - y0) else "y"
    lo, hi = (x0, x1) if axis == "x" else (y0, y1)
    half = poly.area / 2.0

    def excess(c):
        clip = box(x0 - 1, y0 - 1, c, y1 + 1) if axis == "x" else box(x0 - 1, y0 - 1, x1 + 1, c)
        return poly.intersection(clip).area - half

    c = brentq(excess, lo, hi, xtol=1e-6)
    c = round(c, 3)
    if not lo < c < hi:
        c = 0.5 * (lo + hi)
    return axis, c


def _snap_coords(coords, xs: Sequence[float], ys: Sequence[float]) -> list[tuple[float, float]]:
    out = []
    for x, y in coords:
        for t in xs:
            if abs(x - t) <= _SNAP:
                x = t
        for t in ys:
            if abs(y - t) <= _SNAP:
                y = t
        out.append((float(x), float(y)))
    return out


def _drop_collinear(ring: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Remove duplicate points and middle vertices of axis-aligned runs."""
    pts = []
    for p in ring:
        if not pts or math.dist(p, pts[-1]) > 1e-6:
            pts.append(p)
    while len(pts) > 1 and math.dist(pts[0], pts[-1]) <= 1e-6:
        pts.pop()
    changed = True
    while changed and len(pts) > 3:
        changed = False
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            if (a[0] == b[0] == c[0]) or (a[1] == b[1] == c[1]):
                del pts[i]
                changed = True
                break
    return pts


def _to_outline(poly: Polygon, label: str, xs, ys) -> Outline:
    poly = orient(poly, 1.0)
    ext = _drop_collinear(_snap_coords(list(poly.exterior.coords)[:-1], xs, ys))
    holes = [_drop_collinear(_snap_coords(list(r.coords)[:-1], xs, ys)) for r in poly.interiors]
    k = min(range(len(ext)), key=lambda i: (ext[i][1], ext[i][0]))
    ext = ext[k:] + ext[:k]
    return Outline(tuple(ext), label, holes=tuple(tuple(h) for h in holes))


def _edge_intervals(outline: Outline, axis: str, at: float) -> list[tuple[float, float]]:
    """Intervals (along the line) of exterior edges lying exactly on ``axis = at``."""
    k, other = (0, 1) if axis == "x" else (1, 0)
    ring = outline.exterior
    out = []
    for i in range(len(ring)):
        p, q = ring[i], ring[(i + 1) % len(ring)]
        if p[k] == at and q[k] == at:
            out.append((min(p[other], q[other]), max(p[other], q[other])))
    return out


def _joint_dims(policy: JointPolicy, thickness: float | None, clearance: float, fillet: float):
    height = policy.male_height
    if thickness is not None:
        height = min(height, thickness - 2 * fillet - clearance - 2 * policy.wall)
    return policy.male_width, height, policy.male_depth


def _cavity_footprint(axis: str, at: float, along: float, spec: JointSpec, wall: float) -> Polygon:
    half = (spec.male_width + spec.clearance) / 2 + spec.entry_fillet_radius + wall
    d = spec.male_depth + wall
    if axis == "x":
        return box(at, along - half, at + d, along + half)
    return box(along - half, at, along + half, at + d)


def _place_cut_joint(axis, at, interval, female: Polygon, policy: JointPolicy,
                     thickness: float | None) -> JointSpec | None:
    lo, hi = interval
    length = hi - lo
    clearance, fillet = policy.clearance, policy.entry_fillet_radius
    w0, h, d0 = _joint_dims(policy, thickness, clearance, fillet)
    z = thickness / 2 if thickness is not None else 0.0
    direction = "+x" if axis == "x" else "+y"
    for w in (min(w0, 0.6 * length), min(w0, 0.3 * length)):
        for d in (d0, d0 / 2):
            if min(w, h, d) < max(MIN_JOINT_SIZE, 2 * fillet + 1e-6):
                continue
            for frac in (0.5, 0.35, 0.65, 0.25, 0.75):
                along = round(lo + frac * length, 6)
                x, y = (at, along) if axis == "x" else (along, at)
                spec = JointSpec(w, h, d, clearance, fillet, JointLocation(x, y, z, direction))
                mouth_half = (w + clearance) / 2 + fillet + policy.wall
                if along - mouth_half < lo or along + mouth_half > hi:
                    continue
                if female.contains(_cavity_footprint(axis, at, along, spec, policy.wall)):
                    return spec
    return None


def _place_mate(outline: Outline, mate: MateSpec, thickness: float | None) -> JointSpec | None:
    x0, y0, x1, y1 = outline.bounds
    axis, at, outward = {
        "min_x": ("x", x0, "-x"), "max_x": ("x", x1, "+x"),
        "min_y": ("y", y0, "-y"), "max_y": ("y", y1, "+y"),
    }[mate.edge]
    intervals = _edge_intervals(outline, axis, at)
    if not intervals:
        return None
    lo, hi = max(intervals, key=lambda iv: iv[1] - iv[0])
    along = 0.5 * (lo + hi)
    inward = {"+x": "-x", "-x": "+x", "+y": "-y", "-y": "+y"}[outward]
    direction = outward if mate.role == "male" else inward
    z = thickness / 2 if thickness is not None else mate.joint.location.z
    x, y = (at, along) if axis == "x" else (along, at)
    return replace(mate.joint, location=JointLocation(x, y, z, direction))


def plan_partition(
    outline: Outline,
    plate: BuildPlate,
    policy: JointPolicy | None = None,
    hints: Iterable[CutHint] = (),
    thickness: float | None = None,
    mates: Sequence[MateSpec] = (),
    max_pieces: int = 64,
) -> PartitionPlan:
    """Decompose ``outline`` into pieces that fit ``plate``.

    An outline that already fits (allowing a 90 degree turn) comes back as
    a single piece with no cuts. Otherwise each hint, in order, cuts every
    piece it crosses that is still oversized; leftover oversized pieces are
    bisected at equal area across their longer side, largest first.

    Raises InfeasiblePartitionError when a joint head cannot fit on the
    plate at all or more than ``max_pieces`` pieces would be needed.
    """
    policy = policy or JointPolicy()
    if not outline.is_simple():
        raise GeometryError(f"{outline.label}: outline is self-intersecting")
    parent = Polygon(outline.exterior, outline.holes)
    label = outline.label

    cut_records: list[tuple[str, float, tuple, tuple]] = []
    pieces = [parent]
    if not _fits(parent, plate):
        if not policy.adhesive_only:
            head = max(policy.male_width + policy.clearance + 2 * policy.entry_fillet_radius,
                       policy.male_depth)
            if head > plate.diagonal:
                raise InfeasiblePartitionError(
                    f"{label}: joint head {head:.3f} mm exceeds plate diagonal "
                    f"{plate.diagonal:.3f} mm", dimension=head)
        for hint in hints:
            nxt = []
            for poly in pieces:
                if _fits(poly, plate) or not _crosses(poly, hint.axis, hint.at):
                    nxt.append(poly)
                    continue
                if hint.span is not None:
                    a, b = _extent_along(poly, hint.axis)
                    if a < hint.span[0] - 1e-6 or b > hint.span[1] + 1e-6:
                        nxt.append(poly)
                        continue
                cut_records.append((hint.axis, float(hint.at), *_segment(poly, hint.axis, hint.at)))
                nxt.extend(_split(poly, hint.axis, hint.at))
            pieces = nxt
        while True:
            over = [p for p in pieces if not _fits(p, plate)]
            if not over:
                break
            if len(pieces) >= max_pieces:
                x0, y0, x1, y1 = over[0].bounds
                raise InfeasiblePartitionError(
                    f"{label}: more than {max_pieces} pieces needed for a "
                    f"{plate.width} x {plate.depth} mm plate (piece still {x1 - x0:.1f} x "
                    f"{y1 - y0:.1f} mm)", dimension=max(x1 - x0, y1 - y0))
            target = max(over, key=lambda p: (round(p.area, 6), -p.bounds[0]))
            axis, at = _equal_area_cut(target)
            cut_records.append((axis, at, *_segment(target, axis, at)))
            pieces.remove(target)
            pieces.extend(_split(target, axis, at))

    xs = sorted({c[1] for c in cut_records if c[0] == "x"})
    ys = sorted({c[1] for c in cut_records if c[0] == "y"})
    outlines = [_to_outline(p, label, xs, ys) for p in pieces]
    outlines.sort(key=lambda o: (round(o.bounds[1], 6), round(o.bounds[0], 6), round(o.area, 6)))
    polys = [Polygon(o.exterior, o.holes) for o in outlines]

    cut_lines: list[CutLine] = []
    joints: dict[int, list[PieceJoint]] = {i: [] for i in range(len(outlines))}
    counter = 0
    for cid, (axis, at, start, end) in enumerate(cut_records):
        k = 0 if axis == "x" else 1
        lo_line = min(start[1 - k], end[1 - k])
        hi_line = max(start[1 - k], end[1 - k])
        sides = []
        for i, o in enumerate(outlines):
            ivs = [(max(a, lo_line), min(b, hi_line)) for a, b in _edge_intervals(o, axis, at)]
            ivs = [iv for iv in ivs if iv[1] - iv[0] > 1e-6]
            if ivs:
                centre = polys[i].centroid.x if axis == "x" else polys[i].centroid.y
                sides.append((i, centre < at, ivs))
        placed = 0
        adhesive = policy.adhesive_only
        note = "adhesive" if adhesive else ""
        if not adhesive:
            for mi, m_neg, m_ivs in sides:
                if not m_neg:
                    continue
                for fi, f_neg, f_ivs in sides:
                    if f_neg:
                        continue
                    for a0, a1 in m_ivs:
                        for b0, b1 in f_ivs:
                            iv = (max(a0, b0), min(a1, b1))
                            if iv[1] - iv[0] <= 1e-6:
                                continue
                            spec = _place_cut_joint(axis, at, iv, polys[fi], policy, thickness)
                            if spec is None:
                                continue
                            counter += 1
                            jid = f"{label}-{counter}"
                            joints[mi].append(PieceJoint(jid, "male", spec, cid))
                            joints[fi].append(PieceJoint(jid, "female", spec, cid))
                            placed += 1
            if placed == 0:
                adhesive = True
                note = "no room for a press-fit head; glue"
        cut_lines.append(CutLine(cid, axis, at, tuple(start), tuple(end), adhesive,
                                 policy.overhang if adhesive else 0.0, note))

    for mate in mates:
        for i, o in enumerate(outlines):
            if not _on_parent_edge(outline, mate.edge, o):
                continue
            spec = _place_mate(o, mate, thickness)
            if spec is None:
                continue
            if mate.role == "female":
                loc = spec.location
                axis = loc.direction[1]
                at = loc.x if axis == "x" else loc.y
                along = loc.y if axis == "x" else loc.x
                foot = _cavity_footprint(axis, at, along, spec, policy.wall)
                if loc.direction[0] == "-":
                    foot = shapely.affinity.scale(foot, *((-1, 1) if axis == "x" else (1, -1)),
                                                  origin=(loc.x, loc.y))
                if not polys[i].contains(foot):
                    raise GeometryError(f"{label}: cavity for {mate.joint_id} does not fit "
                                        f"inside {label}_{i + 1}")
            joints[i].append(PieceJoint(mate.joint_id, mate.role, spec, None))
            break
        else:
            raise GeometryError(f"{label}: no piece carries the {mate.edge} edge for {mate.joint_id}")

    result = tuple(
        Piece(o, tuple(joints[i]), label, seq + 1) for seq, (i, o) in enumerate(enumerate(outlines))
    )
    return PartitionPlan(label, outline, thickness if thickness is not None else 0.0,
                         result, tuple(cut_lines), plate, policy)


def _on_parent_edge(parent: Outline, edge: str, piece: Outline) -> bool:
    px0, py0, px1, py1 = parent.bounds
    x0, y0, x1, y1 = piece.bounds
    return {"min_x": x0 == px0, "max_x": x1 == px1, "min_y": y0 == py0, "max_y": y1 == py1}[edge]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class PlanReport:
    label: str
    piece_fit: dict[str, bool] = field(default_factory=dict)
    tiling_residual: float = 0.0
    failures: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"label": self.label, "valid": self.valid, "piece_fit": dict(self.piece_fit),
                "tiling_residual": self.tiling_residual, "failures": list(self.failures)}


def validate_plan(plan: PartitionPlan, tiling_tolerance: float = 1e-3) -> PlanReport:
    """Re-check a plan's invariants from its raw piece data."""
    report = PlanReport(plan.label)
    for piece in plan.pieces:
        pts = np.asarray(piece.outline.exterior)
        w = float(pts[:, 0].max() - pts[:, 0].min())
        h = float(pts[:, 1].max() - pts[:, 1].min())
        ok = plan.plate.fits(w, h)
        report.piece_fit[piece.name] = ok
        if not ok:
            report.failures.append(
                f"fit: {piece.name} is {w:.3f} x {h:.3f} mm, plate is "
                f"{plan.plate.width} x {plan.plate.depth} mm")
        if not piece.outline.is_simple():
            report.failures.append(f"simple: {piece.name} outline self-intersects")

    parent_area = signed_area(plan.parent.exterior) + sum(signed_area(h) for h in plan.parent.holes)
    total = sum(signed_area(p.outline.exterior) + sum(signed_area(h) for h in p.outline.holes)
                for p in plan.pieces)
    report.tiling_residual = abs(total - parent_area) / parent_area if parent_area else math.inf
    if report.tiling_residual >= tiling_tolerance:
        report.failures.append(f"tiling: piece areas differ from parent by "
                               f"{report.tiling_residual:.3e} (relative)")

    sides: dict[str, dict[str, list]] = {}
    for piece in plan.pieces:
        for j in piece.joints:
            sides.setdefault(j.joint_id, {"male": [], "female": []})
            if j.role not in ("male", "female"):
                report.failures.append(f"joint {j.joint_id}: unknown role {j.role!r}")
                continue
            sides[j.joint_id][j.role].append((piece.name, j))
    mate_ids = {j.joint_id for p in plan.pieces for j in p.joints if j.cut_line is None}
    for jid in sorted(sides, key=_joint_sort_key):
        males, females = sides[jid]["male"], sides[jid]["female"]
        if jid in mate_ids:
            # paired across parts; see validate_project
            continue
        if len(males) != 1 or len(females) != 1:
            report.failures.append(f"complementarity: joint {jid} has {len(males)} male and "
                                   f"{len(females)} female sides")
            continue
        (_, mj), (_, fj) = males[0], females[0]
        male, _ = synthesize_joint(mj.spec)
        _, cavity = synthesize_joint(fj.spec)
        for c in (mj.spec.clearance, fj.spec.clearance):
            gap = Fraction(c)
            if cavity.width - male.width != gap or cavity.height - male.height != gap:
                report.failures.append(
                    f"complementarity: joint {jid} cavity - head = "
                    f"{float(cavity.width - male.width):.6g} mm, clearance {c} mm")
                break
        if cavity.depth != male.depth:
            report.failures.append(f"complementarity: joint {jid} depths differ")
        if mj.cut_line is not None and mj.spec.location != fj.spec.location:
            report.failures.append(f"complementarity: joint {jid} sides are not co-located")

    carried = {j.cut_line for p in plan.pieces for j in p.joints if j.cut_line is not None}
    for cut in plan.cut_lines:
        if cut.id not in carried and not cut.adhesive_only:
            report.failures.append(f"cut {cut.id} carries no joint and is not glued")
    return report


def validate_project(plans: Sequence[PartitionPlan]) -> list[PlanReport]:
    """Validate every plan, then pair joints that join different parts."""
    reports = [validate_plan(p) for p in plans]
    mates: dict[str, list[tuple[int, str, PieceJoint]]] = {}
    for k, plan in enumerate(plans):
        for piece in plan.pieces:
            for j in piece.joints:
                if j.cut_line is None:
                    mates.setdefault(j.joint_id, []).append((k, piece.name, j))
    for jid, ends in sorted(mates.items()):
        roles = sorted(e[2].role for e in ends)
        if roles != ["female", "male"]:
            for k, name, _ in ends:
                reports[k].failures.append(f"complementarity: mate {jid} has sides {roles}")
            continue
        male_end = next(e for e in ends if e[2].role == "male")
        female_end = next(e for e in ends if e[2].role == "female")
        male, _ = synthesize_joint(male_end[2].spec)
        _, cavity = synthesize_joint(female_end[2].spec)
        for k, name, j in ends:
            gap = Fraction(j.spec.clearance)
            if cavity.width - male.width != gap or cavity.height - male.height != gap:
                reports[k].failures.append(
                    f"complementarity: mate {jid} cavity - head differs from clearance on {name}")
    return reports


# ---------------------------------------------------------------------------
# Reference decomposition of a whole guitar
# ---------------------------------------------------------------------------


def default_hints(label: str, spec: GuitarSpec) -> list[CutHint]:
    """Cut hints reproducing the hand decomposition of each part.

    The back is bisected on the centreline and split along every brace; the
    top is split along the braces and bisected only below the last one, so
    the neck-end strip stays whole; fretboard and neck are halved.
    """
    braces = [CutHint("y", b) for b in spec.brace_positions if 0 < b < spec.body_length]
    if label == "back_plate":
        return [CutHint("x", 0.0), *braces]
    if label == "top_plate":
        top = spec.brace_positions[-1] if spec.brace_positions else spec.body_length
        return [*braces, CutHint("x", 0.0, span=(0.0, top))]
    if label == "fretboard":
        return [CutHint("y", round(spec.fretboard_length / 2, 3))]
    if label == "neck":
        return [CutHint("y", round(spec.neck_length / 2, 3))]
    return []


def part_policy(label: str, base: JointPolicy | None = None,
                overrides: dict[str, JointOverride] | None = None) -> JointPolicy:
    base = base or JointPolicy()
    ov = (overrides or {}).get(label)
    if ov is None:
        ov = joint_overrides_for(label, base.clearance)
    policy = base.with_override(ov)
    if label == "top_plate":
        policy = replace(policy, adhesive_only=True, overhang=policy.overhang or DEFAULT_OVERHANG)
    return policy


def plan_guitar(
    spec: GuitarSpec,
    plate: BuildPlate | None = None,
    base: JointPolicy | None = None,
    overrides: dict[str, JointOverride] | None = None,
    chord_tolerance: float = 1.0,
) -> list[PartitionPlan]:
    """Plan all six parts, including the tuning-head tenon into the neck."""
    plate = plate or BuildPlate()
    base = base or JointPolicy()
    reinf = part_policy("reinforcement", base, overrides).overrides.get(
        "base_clearance", REINFORCEMENT_BASE_CLEARANCE)
    outlines = build_outlines(spec, chord_tolerance, notch_clearance=reinf)

    head_policy = part_policy("tuning_head", base, overrides)
    t = min(spec.head_thickness, spec.neck_thickness)
    w, h, d = _joint_dims(head_policy, t, head_policy.clearance, head_policy.entry_fillet_radius)
    w = min(w, 0.6 * spec.neck_width_nut)
    tenon = JointSpec(w, h, d, head_policy.clearance, head_policy.entry_fillet_radius)
    mates = {
        "tuning_head": [MateSpec("tuning_head-neck-1", "max_y", "male", tenon)],
        "neck": [MateSpec("tuning_head-neck-1", "min_y", "female", tenon)],
    }

    plans = []
    for outline in outlines:
        label = outline.label
        policy = part_policy(label, base, overrides)
        plan = plan_partition(outline, plate, policy, default_hints(label, spec),
                              thickness=spec.thickness_for(label), mates=mates.get(label, ()))
        meta = {}
        if label == "top_plate":
            meta["print_orientation"] = "face_up"
        plans.append(replace(plan, metadata=meta))
    return plans


def project_plan_to_dict(plans: Sequence[PartitionPlan], plate: BuildPlate) -> dict:
    return {"format": "lutherie-plan/1", "plate": asdict(plate),
            "parts": [p.to_dict() for p in plans]}


def project_plan_from_dict(data: dict) -> list[PartitionPlan]:
    return [PartitionPlan.from_dict(p) for p in data["parts"]]
