"""Parametric instrument geometry.

Fret positions, note/frequency conversion, taut-string physics and the 2D
part outlines (millimetres throughout) that the partition and mesh stages
extrude and split.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, GeometryError, NoteParseError, ValidationError

MM_PER_INCH = 25.4
A4_HZ = 440.0
A4_MIDI = 69

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_NOTE_RE = re.compile(r"([A-G])(#?)(\d)")
# E0 .. B8 inclusive
MIDI_MIN = 16  # E0
MIDI_MAX = 119  # B8

PART_LABELS = ("back_plate", "top_plate", "fretboard", "tuning_head", "neck", "reinforcement")

# Base clearance between the reinforcement block and the top-plate cutout.
REINFORCEMENT_BASE_CLEARANCE = 0.254


def inches(value: float) -> float:
    return value * MM_PER_INCH


# ---------------------------------------------------------------------------
# Guitar specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GuitarSpec:
    """Dimensions of a classical guitar, in millimetres.

    The bout/waist ``*_position`` fields locate the widest and narrowest
    points of the body measured from the tail end (y = 0) toward the neck.
    """

    scale_length: float = 650.0
    fret_count: int = 19
    string_count: int = 6
    body_length: float = 480.0
    upper_bout_width: float = 280.0
    lower_bout_width: float = 370.0
    waist_width: float = 240.0
    lower_bout_position: float = 130.0
    waist_position: float = 285.0
    upper_bout_position: float = 370.0
    plate_thickness: float = 5.0
    neck_width_nut: float = 52.0
    neck_width_heel: float = 62.0
    neck_thickness: float = 22.0
    fretboard_thickness: float = 8.0
    head_length: float = 190.0
    head_width: float = 75.0
    head_thickness: float = 20.0
    reinforcement_length: float = 40.0
    soundhole_diameter: float = 85.0
    soundhole_position: float = 330.0
    brace_positions: tuple[float, ...] = (200.0, 420.0)

    def __post_init__(self):
        object.__setattr__(self, "brace_positions", tuple(float(b) for b in self.brace_positions))
        self.validate()

    def validate(self) -> None:
        lengths = (
            "scale_length", "body_length", "upper_bout_width", "lower_bout_width",
            "waist_width", "lower_bout_position", "waist_position", "upper_bout_position",
            "plate_thickness", "neck_width_nut", "neck_width_heel", "neck_thickness",
            "fretboard_thickness", "head_length", "head_width", "head_thickness",
            "reinforcement_length", "soundhole_diameter", "soundhole_position",
        )
        for name in lengths:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be a strictly positive length, got {value!r}")
        if not isinstance(self.fret_count, int) or self.fret_count < 1:
            raise ValidationError(f"fret_count must be >= 1, got {self.fret_count!r}")
        if self.fret_count > 36:
            raise ValidationError(f"fret_count must be <= 36, got {self.fret_count}")
        if self.string_count != 6:
            raise ValidationError(f"string_count must be 6, got {self.string_count!r}")
        if not (self.waist_width < self.upper_bout_width < self.lower_bout_width):
            raise ValidationError(
                "bout widths must satisfy waist_width < upper_bout_width < lower_bout_width"
            )
        if not (0 < self.lower_bout_position < self.waist_position
                < self.upper_bout_position < self.body_length):
            raise ValidationError(
                "bout positions must satisfy 0 < lower < waist < upper < body_length"
            )
        braces = self.brace_positions
        if any(b2 <= b1 for b1, b2 in zip(braces, braces[1:])):
            raise ValidationError("brace_positions must be strictly increasing")
        if any(not (0.0 <= b <= self.body_length) for b in braces):
            raise ValidationError("brace_positions must lie within [0, body_length]")
        r = self.soundhole_diameter / 2
        if not (r < self.soundhole_position < self.body_length - r):
            raise ValidationError("soundhole must lie inside the body length")
        if self.soundhole_diameter >= self.waist_width:
            raise ValidationError("soundhole_diameter must be smaller than waist_width")

    @property
    def neck_length(self) -> float:
        """Nut to body joint; the neck meets the body at the 12th fret."""
        return self.scale_length / 2.0

    @property
    def fretboard_length(self) -> float:
        return fret_positions(self)[-1] + 10.0

    def thickness_for(self, label: str) -> float:
        return {
            "back_plate": self.plate_thickness,
            "top_plate": self.plate_thickness,
            "fretboard": self.fretboard_thickness,
            "tuning_head": self.head_thickness,
            "neck": self.neck_thickness,
            "reinforcement": self.neck_thickness,
        }[label]


def fret_positions(spec: GuitarSpec) -> list[float]:
    """Distance from the nut to each fret, nut (fret 0) included.

    Uses the 12-TET closed form ``L - L * 2**(-n/12)``.
    """
    spec.validate()
    L = spec.scale_length
    positions = [L - L * 2.0 ** (-n / 12.0) for n in range(spec.fret_count + 1)]
    positions[0] = 0.0
    if spec.fret_count >= 12:
        positions[12] = L / 2.0
    return positions


# ---------------------------------------------------------------------------
# Pitch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StringReference:
    index: int
    note_name: str
    frequency: float


# Reference open-string tuning, highest pitch first.
_STANDARD_STRINGS = (
    (1, "E4", 329.63),
    (2, "B3", 246.94),
    (3, "G3", 196.00),
    (4, "D3", 146.83),
    (5, "A2", 110.00),
    (6, "E2", 82.41),
)


def standard_string_set() -> list[StringReference]:
    return [StringReference(i, n, f) for i, n, f in _STANDARD_STRINGS]


def note_to_midi(note_name: str) -> int:
    """Semitone index of a note name with A4 = 69."""
    if not isinstance(note_name, str):
        raise NoteParseError(note_name, repr(note_name))
    m = _NOTE_RE.fullmatch(note_name)
    if m is None:
        pos = 0
        if note_name[:1] in "ABCDEFG" and note_name[:1]:
            pos = 1
            if note_name[1:2] == "#":
                pos = 2
            if note_name[pos:pos + 1].isdigit():
                pos += 1
        raise NoteParseError(note_name, note_name[pos:] or note_name)
    letter, sharp, octave = m.groups()
    midi = (int(octave) + 1) * 12 + PITCH_CLASSES.index(letter + sharp)
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise NoteParseError(note_name, note_name)
    return midi


def midi_to_note(midi: int) -> str:
    return f"{PITCH_CLASSES[midi % 12]}{midi // 12 - 1}"


def note_to_frequency(note_name: str) -> float:
    return A4_HZ * 2.0 ** ((note_to_midi(note_name) - A4_MIDI) / 12.0)


def cents(f1: float, f2: float) -> float:
    """Signed interval from ``f2`` up to ``f1`` in cents.

    Written as a difference of logs so that swapping the arguments negates
    the result exactly.
    """
    return 1200.0 * (math.log2(f1) - math.log2(f2))


def frequency_to_note(f: float) -> tuple[str, float]:
    """Nearest equal-tempered note and the signed deviation in cents."""
    if not (isinstance(f, (int, float)) and math.isfinite(f) and f > 0):
        raise DomainError(f"frequency must be > 0, got {f!r}")
    midi_float = A4_MIDI + 12.0 * math.log2(f / A4_HZ)
    midi = int(math.floor(midi_float + 0.5))
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise DomainError(f"{f} Hz lies outside the E0..B8 note range")
    nearest = A4_HZ * 2.0 ** ((midi - A4_MIDI) / 12.0)
    return midi_to_note(midi), cents(f, nearest)


# ---------------------------------------------------------------------------
# String physics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StringPhysics:
    vibrating_length: float  # m
    tension: float  # N
    linear_density: float  # kg/m

    def __post_init__(self):
        for name in ("vibrating_length", "tension", "linear_density"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be > 0, got {value!r}")


def string_fundamental(p: StringPhysics) -> float:
    """Ideal taut string: f = sqrt(T / mu) / (2 L)."""
    return math.sqrt(p.tension / p.linear_density) / (2.0 * p.vibrating_length)


# ---------------------------------------------------------------------------
# Polygons
# ---------------------------------------------------------------------------

Point = tuple[float, float]


def signed_area(ring: Sequence[Point] | np.ndarray) -> float:
    """Shoelace signed area, positive for counterclockwise rings."""
    pts = np.asarray(ring, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    """r collinear with pq lies within its bounding box."""
    return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))


def segments_intersect(a, b, c, d) -> bool:
    """Closed-segment intersection test, touching counts."""
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0 > o2) or (o1 < 0 < o2)) and ((o3 > 0 > o4) or (o3 < 0 < o4)):
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def _collinear_overlap(a, b, c, d) -> bool:
    """Adjacent segments ab, bc... sharing one endpoint overlap beyond it."""
    if _orient(a, b, c) != 0 or _orient(a, b, d) != 0:
        return False
    ab = (b[0] - a[0], b[1] - a[1])
    cd = (d[0] - c[0], d[1] - c[1])
    return ab[0] * cd[0] + ab[1] * cd[1] < 0


def rings_are_simple(rings: Sequence[Sequence[Point]]) -> bool:
    """Check a set of closed rings for any crossing or touching edges.

    Segments are swept in order of their minimum x; only segments whose
    x-intervals overlap are tested against each other.
    """
    segs = []
    for ri, ring in enumerate(rings):
        n = len(ring)
        if n < 3:
            return False
        for i in range(n):
            p, q = ring[i], ring[(i + 1) % n]
            if p == q:
                return False
            segs.append((min(p[0], q[0]), max(p[0], q[0]), ri, i, n, p, q))
    segs.sort(key=lambda s: (s[0], s[2], s[3]))
    active: list = []
    for seg in segs:
        xmin = seg[0]
        active = [s for s in active if s[1] >= xmin]
        _, _, ri, i, n, p, q = seg
        for other in active:
            _, _, rj, j, _, c, d = other
            if ri == rj and (j == (i + 1) % n or i == (j + 1) % n):
                # adjacent edges share exactly one vertex
                if j == (i + 1) % n and _collinear_overlap(p, q, c, d):
                    return False
                if i == (j + 1) % n and _collinear_overlap(c, d, p, q):
                    return False
                continue
            if segments_intersect(p, q, c, d):
                return False
        active.append(seg)
    return True


def _clean_ring(points) -> tuple[Point, ...]:
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()
    out: list[Point] = []
    for p in pts:
        if not out or p != out[-1]:
            out.append(p)
    if len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class Outline:
    """A closed 2D part outline with optional interior holes.

    The exterior is stored counterclockwise and every hole clockwise; the
    closing vertex is implicit.
    """

    exterior: tuple[Point, ...]
    label: str
    holes: tuple[tuple[Point, ...], ...] = field(default=())

    def __post_init__(self):
        ext = _clean_ring(self.exterior)
        if len(ext) < 3:
            raise GeometryError(f"{self.label}: outline needs at least 3 distinct vertices")
        if signed_area(ext) < 0:
            ext = ext[::-1]
        holes = []
        for h in self.holes:
            h = _clean_ring(h)
            if len(h) < 3:
                raise GeometryError(f"{self.label}: hole needs at least 3 distinct vertices")
            if signed_area(h) > 0:
                h = h[::-1]
            holes.append(h)
        object.__setattr__(self, "exterior", ext)
        object.__setattr__(self, "holes", tuple(holes))

    @property
    def area(self) -> float:
        return signed_area(self.exterior) + sum(signed_area(h) for h in self.holes)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.asarray(self.exterior)
        return (float(pts[:, 0].min()), float(pts[:, 1].min()),
                float(pts[:, 0].max()), float(pts[:, 1].max()))

    @property
    def size(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        return x1 - x0, y1 - y0

    def rings(self) -> list[tuple[Point, ...]]:
        return [self.exterior, *self.holes]

    def is_simple(self) -> bool:
        return rings_are_simple(self.rings())

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "exterior": [list(p) for p in self.exterior],
            "holes": [[list(p) for p in h] for h in self.holes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Outline":
        return cls(
            exterior=tuple(tuple(p) for p in data["exterior"]),
            label=data["label"],
            holes=tuple(tuple(tuple(p) for p in h) for h in data.get("holes", ())),
        )


# ---------------------------------------------------------------------------
# Outlines
# ---------------------------------------------------------------------------

# Hermite tangent scale that makes a cubic approximate a quarter ellipse.
_ELLIPSE_TANGENT = 4.0 * (math.sqrt(2.0) - 1.0)


def _hermite(p0, m0, p1, m1, t):
    t = np.asarray(t, dtype=float)[:, None]
    t2, t3 = t * t, t * t * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return (h00 * np.asarray(p0) + h10 * np.asarray(m0)
            + h01 * np.asarray(p1) + h11 * np.asarray(m1))


def _chord_error(a, b, c) -> float:
    """Distance of point c from the chord ab."""
    ab = np.subtract(b, a)
    length = math.hypot(*ab)
    if length == 0.0:
        return math.hypot(*np.subtract(c, a))
    return abs(ab[0] * (c[1] - a[1]) - ab[1] * (c[0] - a[0])) / length


def _sample_segment(p0, m0, p1, m1, tol: float) -> list[Point]:
    """Adaptively sample a Hermite segment until every chord lies within
    ``tol`` of the curve. Returns points excluding the final endpoint."""

    def point(t):
        return tuple(_hermite(p0, m0, p1, m1, [t])[0])

    ts = [0.0, 1.0]
    pts = {0.0: point(0.0), 1.0: point(1.0)}
    i = 0
    while i < len(ts) - 1:
        t0, t1 = ts[i], ts[i + 1]
        probes = [t0 + (t1 - t0) * f for f in (0.25, 0.5, 0.75)]
        err = max(_chord_error(pts[t0], pts[t1], point(t)) for t in probes)
        if err > tol and t1 - t0 > 1e-4:
            tm = 0.5 * (t0 + t1)
            pts[tm] = point(tm)
            ts.insert(i + 1, tm)
        else:
            i += 1
    return [pts[t] for t in ts[:-1]]


def body_silhouette(spec: GuitarSpec, chord_tolerance: float = 1.0) -> tuple[Point, ...]:
    """Counterclockwise body outline, tail at y=0 and neck end at y=body_length.

    The right half runs through bottom centre, lower bout, waist, upper bout
    and top centre as piecewise cubic Hermite curves; the left half mirrors it.
    """
    if chord_tolerance <= 0:
        raise ValidationError("chord_tolerance must be > 0")
    L = spec.body_length
    lo = (spec.lower_bout_width / 2, spec.lower_bout_position)
    wa = (spec.waist_width / 2, spec.waist_position)
    up = (spec.upper_bout_width / 2, spec.upper_bout_position)
    k = _ELLIPSE_TANGENT
    segments = [
        ((0.0, 0.0), (k * lo[0], 0.0), lo, (0.0, k * lo[1])),
        (lo, (0.0, wa[1] - lo[1]), wa, (0.0, wa[1] - lo[1])),
        (wa, (0.0, up[1] - wa[1]), up, (0.0, up[1] - wa[1])),
        (up, (0.0, k * (L - up[1])), (0.0, L), (-k * up[0], 0.0)),
    ]
    right: list[Point] = []
    for p0, m0, p1, m1 in segments:
        right.extend(_sample_segment(p0, m0, p1, m1, chord_tolerance))
    right.append((0.0, L))
    right = [(0.0 if i in (0, len(right) - 1) else x, y) for i, (x, y) in enumerate(right)]
    left = [(-x, y) for x, y in reversed(right[1:-1])]
    return tuple(right + left)


def _circle(cx: float, cy: float, r: float, tol: float) -> list[Point]:
    """Clockwise polygon inscribed in a circle with sagitta <= tol."""
    if tol >= r:
        n = 8
    else:
        n = max(8, math.ceil(math.pi / math.acos(1.0 - tol / r)))
    angles = -2.0 * math.pi * np.arange(n) / n
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]


def _tapered(width0: float, width1: float, y0: float, y1: float) -> list[Point]:
    return [(-width0 / 2, y0), (width0 / 2, y0), (width1 / 2, y1), (-width1 / 2, y1)]


def _width_along_neck(spec: GuitarSpec, y: float) -> float:
    taper = (spec.neck_width_heel - spec.neck_width_nut) / spec.neck_length
    return spec.neck_width_nut + taper * y


def reinforcement_size(spec: GuitarSpec) -> tuple[float, float]:
    return spec.neck_width_heel, spec.reinforcement_length


def build_outlines(spec: GuitarSpec, chord_tolerance: float = 1.0,
                   notch_clearance: float = REINFORCEMENT_BASE_CLEARANCE) -> list[Outline]:
    """All six part outlines, each in its own local frame.

    Body plates span y in [0, body_length] with the neck end at the top. The
    fretboard and neck start at the nut (y = 0); the tuning head sits below
    the nut at negative y so that its joint face is y = 0.
    """
    import shapely
    from shapely.geometry import Polygon, box

    spec.validate()
    body = body_silhouette(spec, chord_tolerance)
    back = Outline(body, "back_plate")

    r_width, r_length = reinforcement_size(spec)
    notch_w = r_width + notch_clearance
    notch_d = r_length + notch_clearance
    L = spec.body_length
    notched = Polygon(body).difference(box(-notch_w / 2, L - notch_d, notch_w / 2, L + 1.0))
    if notched.geom_type != "Polygon":
        raise GeometryError("reinforcement cutout splits the top plate")
    notched = shapely.geometry.polygon.orient(notched, 1.0)
    top_ring = [(_snap(x, (-notch_w / 2, notch_w / 2)), _snap(y, (L - notch_d,)))
                for x, y in list(notched.exterior.coords)[:-1]]
    hole = _circle(0.0, spec.soundhole_position, spec.soundhole_diameter / 2, chord_tolerance)
    top = Outline(tuple(top_ring), "top_plate", holes=(tuple(hole),))

    fb_len = spec.fretboard_length
    fretboard = Outline(tuple(_tapered(spec.neck_width_nut, _width_along_neck(spec, fb_len),
                                       0.0, fb_len)), "fretboard")
    head = Outline(tuple(_tapered(spec.head_width, spec.neck_width_nut,
                                  -spec.head_length, 0.0)), "tuning_head")
    neck = Outline(tuple(_tapered(spec.neck_width_nut, spec.neck_width_heel,
                                  0.0, spec.neck_length)), "neck")
    reinforcement = Outline(tuple(_tapered(r_width, r_width, 0.0, r_length)), "reinforcement")

    outlines = [back, top, fretboard, head, neck, reinforcement]
    for o in outlines:
        if not o.is_simple():
            raise GeometryError(f"{o.label} outline is self-intersecting")
    return outlines


def _snap(value: float, targets: Sequence[float], tol: float = 1e-7) -> float:
    for t in targets:
        if abs(value - t) <= tol:
            return float(t)
    return float(value)
