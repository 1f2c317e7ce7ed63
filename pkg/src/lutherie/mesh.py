"""Watertight triangle meshes for printed parts.

Outlines are extruded into prisms, then box joints are cut into or fused
onto their planar cut faces. Only axis-aligned box heads are supported: a
boss is a straight box, a cavity is a box whose mouth flares out through an
8-step quarter-round profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GeometryError, ValidationError
from .geometry import Outline
from .partition import JointSpec, Piece, synthesize_joint
from .triangulate import triangulate

FILLET_SEGMENTS = 8
# radii below this are modelled as a sharp edge; the easing steps would be
# thinner than the degenerate-triangle threshold
MIN_FILLET = 1e-6
DEGENERATE_AREA = 1e-9

# In-face (u, v) axes for a face with outward normal (axis, sign); chosen so
# that u x v points along the normal.
_FACE_AXES = {
    (0, 1): (1, 2), (0, -1): (2, 1),
    (1, 1): (2, 0), (1, -1): (0, 2),
    (2, 1): (0, 1), (2, -1): (1, 0),
}


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle surface; vertices in mm, triangles counterclockwise
    seen from outside."""

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValidationError("triangle index out of range")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def soup(self) -> np.ndarray:
        """(m, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @property
    def volume(self) -> float:
        return mesh_volume(self)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if len(self.triangles) else self.vertices
        return used.min(axis=0), used.max(axis=0)


def mesh_volume(mesh: TriangleMesh) -> float:
    """Signed volume by the divergence theorem."""
    if len(mesh.triangles) == 0:
        return 0.0
    s = mesh.soup()
    return float(np.einsum("ij,ij->i", s[:, 0], np.cross(s[:, 1], s[:, 2])).sum() / 6.0)


def _triangle_areas(soup: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(soup[:, 1] - soup[:, 0], soup[:, 2] - soup[:, 0]), axis=1)


# ---------------------------------------------------------------------------
# Extrusion
# ---------------------------------------------------------------------------


def extrude(outline: Outline, thickness: float, name: str | None = None) -> TriangleMesh:
    """Prism of ``outline`` from z = 0 to z = thickness.

    Both caps share one ear-clipped triangulation; holes are bridged so the
    result is a single connected surface.
    """
    if not (math.isfinite(thickness) and thickness > 0):
        raise ValidationError(f"thickness must be > 0, got {thickness}")
    if not outline.is_simple():
        raise GeometryError(f"{outline.label}: cannot extrude a self-intersecting outline")
    rings = outline.rings()
    pts2 = np.concatenate([np.asarray(r, dtype=float) for r in rings])
    n = len(pts2)
    caps = triangulate(rings[0], rings[1:])

    bottom = np.column_stack([pts2, np.zeros(n)])
    top = np.column_stack([pts2, np.full(n, float(thickness))])
    verts = np.vstack([bottom, top])

    tris = [caps + n, caps[:, ::-1]]
    start = 0
    for ring in rings:
        k = len(ring)
        i = np.arange(start, start + k)
        j = np.roll(i, -1)
        tris.append(np.column_stack([i, j, j + n]))
        tris.append(np.column_stack([i, j + n, i + n]))
        start += k
    return TriangleMesh(verts, np.vstack(tris), name or outline.label)


# ---------------------------------------------------------------------------
# Joint features
# ---------------------------------------------------------------------------


def fillet_profile(radius: float, segments: int = FILLET_SEGMENTS) -> list[tuple[float, float]]:
    """(depth, flare) stations of a quarter-round entry easing.

    Station 0 sits on the face with the full flare ``radius``; the last
    station is ``radius`` deep with no flare.
    """
    if radius < MIN_FILLET:
        return [(0.0, 0.0)]
    out = []
    for k in range(segments + 1):
        phi = 0.5 * math.pi * (1.0 - k / segments)
        out.append((radius * (1.0 - math.sin(phi)), radius * (1.0 - math.cos(phi))))
    out[0] = (0.0, float(radius))
    out[-1] = (float(radius), 0.0)
    return out


def _frustum(h: float, a0: float, b0: float, a1: float, b1: float) -> float:
    return h / 6.0 * (a0 * b0 + (a0 + a1) * (b0 + b1) + a1 * b1)


def joint_volume(spec: JointSpec, role: str) -> float:
    """Volume added by a male boss (positive) or removed by a female cavity
    (negative), including the flared entry."""
    male, cavity = synthesize_joint(spec)
    if role == "male":
        return float(male.width) * float(male.height) * float(male.depth)
    if role != "female":
        raise ValidationError(f"joint role must be 'male' or 'female', got {role!r}")
    w, h, depth = float(cavity.width), float(cavity.height), float(cavity.depth)
    stations = fillet_profile(spec.entry_fillet_radius)
    vol = 0.0
    for (s0, e0), (s1, e1) in zip(stations, stations[1:]):
        vol += _frustum(s1 - s0, w + 2 * e0, h + 2 * e0, w + 2 * e1, h + 2 * e1)
    vol += (depth - stations[-1][0]) * w * h
    return -vol


def _joint_frame(spec: JointSpec, role: str):
    loc = spec.location
    k = 0 if loc.direction[1] == "x" else 1
    sgn = 1 if loc.direction[0] == "+" else -1
    sigma = sgn if role == "male" else -sgn
    plane = loc.x if k == 0 else loc.y
    return k, sigma, plane, np.array([loc.x, loc.y, loc.z], dtype=float)


def _rings(spec: JointSpec, role: str) -> list[tuple[float, float, float]]:
    """(offset along outward normal, half width, half height) per ring."""
    male, cavity = synthesize_joint(spec)
    if role == "male":
        hw, hh = float(male.width) / 2, float(male.height) / 2
        return [(0.0, hw, hh), (float(male.depth), hw, hh)]
    hw, hh = float(cavity.width) / 2, float(cavity.height) / 2
    rings = [(-s, hw + e, hh + e) for s, e in fillet_profile(spec.entry_fillet_radius)]
    rings.append((-float(cavity.depth), hw, hh))
    return rings


def _corners(k: int, sigma: int, plane: float, centre: np.ndarray, offset: float,
             hw: float, hh: float) -> np.ndarray:
    """Rectangle corners, clockwise seen from outside the face."""
    u_ax, v_ax = _FACE_AXES[(k, sigma)]
    w_ax = 1 - k
    hu, hv = (hw, hh) if u_ax == w_ax else (hh, hw)
    out = np.empty((4, 3))
    for i, (su, sv) in enumerate(((-1, -1), (-1, 1), (1, 1), (1, -1))):
        p = centre.copy()
        p[k] = plane + sigma * offset
        p[u_ax] = centre[u_ax] + su * hu
        p[v_ax] = centre[v_ax] + sv * hv
        out[i] = p
    return out


def _tri_box_overlap(tris: np.ndarray, centre: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Separating-axis test of triangles against an axis-aligned box."""
    v = tris - centre
    edges = [v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]]
    sep = np.zeros(len(v), dtype=bool)
    for ax in range(3):
        sep |= (v[:, :, ax].min(axis=1) > half[ax]) | (v[:, :, ax].max(axis=1) < -half[ax])
    normal = np.cross(edges[0], edges[1])
    sep |= np.abs(np.einsum("ij,ij->i", normal, v[:, 0])) > np.abs(normal) @ half
    for ax in range(3):
        unit = np.zeros(3)
        unit[ax] = 1.0
        for f in edges:
            axis = np.cross(unit, f)
            p = np.einsum("ijk,ik->ij", v, axis)
            r = np.abs(axis) @ half
            sep |= (p.min(axis=1) > r) | (p.max(axis=1) < -r)
    return ~sep


def _components(tri_ids: np.ndarray, tris: np.ndarray) -> list[np.ndarray]:
    """Edge-connected groups among the given triangles."""
    if len(tri_ids) == 0:
        return []
    sub = tris[tri_ids]
    edge_owner: dict[tuple[int, int], list[int]] = {}
    for local, t in enumerate(sub):
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edge_owner.setdefault((min(a, b), max(a, b)), []).append(local)
    rows, cols = [], []
    for owners in edge_owner.values():
        for o in owners[1:]:
            rows.append(owners[0])
            cols.append(o)
    n = len(sub)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    return [tri_ids[labels == c] for c in range(count)]


def _boundary_loops(tris: np.ndarray) -> list[list[int]]:
    directed = set()
    for t in tris:
        directed.update(((t[0], t[1]), (t[1], t[2]), (t[2], t[0])))
    nxt: dict[int, int] = {}
    for a, b in directed:
        if (b, a) not in directed:
            if a in nxt:
                raise GeometryError("face patch boundary is not a simple loop")
            nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen or cur not in nxt:
                raise GeometryError("face patch boundary is not a simple loop")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def _area2(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _point_in_ring(p, ring: np.ndarray) -> int:
    """1 inside, 0 on boundary, -1 outside."""
    n = len(ring)
    inside = False
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if (cross == 0 and min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])):
            return 0
        if (a[1] > p[1]) != (b[1] > p[1]):
            x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if p[0] < x:
                inside = not inside
    return 1 if inside else -1


def _seg_cross(a, b, c, d) -> bool:
    def o(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    d1, d2, d3, d4 = o(a, b, c), o(a, b, d), o(c, d, a), o(c, d, b)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0


def _mouth_fits(mouth: np.ndarray, outer: np.ndarray, holes: list[np.ndarray]) -> bool:
    if any(_point_in_ring(p, outer) != 1 for p in mouth):
        return False
    lo, hi = mouth.min(axis=0), mouth.max(axis=0)
    for ring in [outer, *holes]:
        if np.any(np.all((ring >= lo) & (ring <= hi), axis=1)):
            return False
        for i in range(len(ring)):
            a, b = ring[i], ring[(i + 1) % len(ring)]
            for j in range(4):
                if _seg_cross(a, b, mouth[j], mouth[(j + 1) % 4]):
                    return False
    for h in holes:
        if _point_in_ring(mouth[0], h) == 1:
            return False
    return True


def _joint_label(j) -> str:
    return getattr(j, "joint_id", None) or "joint"


def _unpack(j) -> tuple[JointSpec, str]:
    if isinstance(j, tuple):
        return j[0], j[1]
    return j.spec, j.role


def apply_joint_features(mesh: TriangleMesh, joints: Iterable) -> TriangleMesh:
    """Fuse male bosses onto and cut female cavities into planar faces.

    ``joints`` holds PieceJoint-like objects (``.spec``, ``.role``) or
    ``(JointSpec, role)`` tuples. The face under each mouth is
    re-triangulated around it, so the result stays a closed manifold and its
    volume changes by exactly ``joint_volume`` per joint.
    """
    verts = [np.asarray(mesh.vertices, dtype=float)]
    nverts = len(mesh.vertices)
    tris = np.asarray(mesh.triangles, dtype=np.int64)

    def all_verts():
        return np.vstack(verts) if len(verts) > 1 else verts[0]

    for joint in joints:
        spec, role = _unpack(joint)
        if role not in ("male", "female"):
            raise ValidationError(f"joint role must be 'male' or 'female', got {role!r}")
        label = _joint_label(joint)
        k, sigma, plane, centre = _joint_frame(spec, role)
        u_ax, v_ax = _FACE_AXES[(k, sigma)]
        V = all_verts()
        rings = _rings(spec, role)

        soup = V[tris]
        scale = max(1.0, abs(plane))
        on_plane = np.all(np.abs(soup[:, :, k] - plane) <= 1e-9 * scale, axis=1)
        normals = np.cross(soup[:, 1] - soup[:, 0], soup[:, 2] - soup[:, 0])
        facing = normals[:, k] * sigma > 0
        cand = np.flatnonzero(on_plane & facing)

        mouth3 = _corners(k, sigma, plane, centre, 0.0, rings[0][1], rings[0][2])
        mouth2 = mouth3[:, [u_ax, v_ax]]
        chosen = None
        for comp in _components(cand, tris):
            loops = _boundary_loops(tris[comp])
            rings2 = [V[loop][:, [u_ax, v_ax]] for loop in loops]
            areas = [_area2(r) for r in rings2]
            oi = int(np.argmax(areas))
            if areas[oi] <= 0:
                continue
            outer_loop, outer2 = loops[oi], rings2[oi]
            holes = [(loops[i], rings2[i]) for i in range(len(loops)) if i != oi]
            full = (not holes and len(outer_loop) == 4
                    and {tuple(p) for p in outer2} == {tuple(p) for p in mouth2})
            if full or _mouth_fits(mouth2, outer2, [h[1] for h in holes]):
                chosen = (comp, outer_loop, outer2, holes, full)
                break
        if chosen is None:
            raise GeometryError(f"{label}: mouth does not lie on a planar face of {mesh.name}")
        comp, outer_loop, outer2, holes, full = chosen

        # the feature's bounding box must not touch anything but its face
        far = rings[-1][0]
        lo_off, hi_off = min(0.0, far), max(0.0, far)
        hw = max(r[1] for r in rings)
        hh = max(r[2] for r in rings)
        box_lo, box_hi = centre.copy(), centre.copy()
        box_lo[k] = plane + min(sigma * lo_off, sigma * hi_off)
        box_hi[k] = plane + max(sigma * lo_off, sigma * hi_off)
        w_ax = 1 - k
        box_lo[w_ax], box_hi[w_ax] = centre[w_ax] - hw, centre[w_ax] + hw
        box_lo[2], box_hi[2] = centre[2] - hh, centre[2] + hh
        eps = 1e-7 * scale
        others = np.setdiff1d(np.arange(len(tris)), comp)
        if len(others):
            hit = _tri_box_overlap(soup[others], 0.5 * (box_lo + box_hi),
                                   0.5 * (box_hi - box_lo) - eps)
            if hit.any():
                what = "boss collides with" if role == "male" else "cavity breaches"
                raise GeometryError(f"{label}: {what} another face of {mesh.name}")

        new_tris = [tris[others]]
        if full:
            lookup = {tuple(V[i][[u_ax, v_ax]]): i for i in outer_loop}
            mouth_ids = np.array([lookup[tuple(p)] for p in mouth2])
        else:
            mouth_ids = np.arange(nverts, nverts + 4)
            verts.append(mouth3)
            nverts += 4
            hole_loops = [h[0] for h in holes]
            face = triangulate(outer2, [h[1] for h in holes] + [mouth2])
            index = np.concatenate([outer_loop, *hole_loops, mouth_ids]).astype(np.int64)
            new_tris.append(index[face])

        prev = mouth_ids
        for offset, rw, rh in rings[1:]:
            ring_pts = _corners(k, sigma, plane, centre, offset, rw, rh)
            ids = np.arange(nverts, nverts + 4)
            verts.append(ring_pts)
            nverts += 4
            nxt_a = np.roll(prev, -1)
            nxt_b = np.roll(ids, -1)
            new_tris.append(np.column_stack([nxt_a, prev, ids]))
            new_tris.append(np.column_stack([nxt_a, ids, nxt_b]))
            prev = ids
        c = prev
        new_tris.append(np.array([[c[3], c[2], c[1]], [c[3], c[1], c[0]]]))
        tris = np.vstack(new_tris)

    return TriangleMesh(all_verts(), tris, mesh.name)


def piece_mesh(piece: Piece, thickness: float) -> TriangleMesh:
    base = extrude(piece.outline, thickness, name=piece.name)
    return apply_joint_features(base, piece.joints)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class MeshReport:
    name: str
    watertight: bool
    winding_consistent: bool
    boundary_edges: list[tuple[int, int]] = field(default_factory=list)
    nonmanifold_edges: list[tuple[int, int]] = field(default_factory=list)
    degenerate_triangles: list[int] = field(default_factory=list)
    vertex_count: int = 0
    edge_count: int = 0
    face_count: int = 0
    euler_characteristic: int = 0
    components: int = 0
    genus: int | None = None
    volume: float = 0.0

    @property
    def valid(self) -> bool:
        return self.watertight and self.winding_consistent and not self.degenerate_triangles

    def to_dict(self) -> dict:
        return {
            "name": self.name, "valid": self.valid, "watertight": self.watertight,
            "winding_consistent": self.winding_consistent,
            "boundary_edges": [list(e) for e in self.boundary_edges],
            "nonmanifold_edges": [list(e) for e in self.nonmanifold_edges],
            "degenerate_triangles": list(self.degenerate_triangles),
            "vertices": self.vertex_count, "edges": self.edge_count, "faces": self.face_count,
            "euler_characteristic": self.euler_characteristic,
            "components": self.components, "genus": self.genus, "volume": self.volume,
        }


def validate_mesh(mesh: TriangleMesh) -> MeshReport:
    """Check closure, orientation and degeneracy; report V - E + F."""
    T = mesh.triangles
    F = len(T)
    if F == 0:
        return MeshReport(mesh.name, watertight=True, winding_consistent=True)
    directed = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    edges, counts = np.unique(undirected, axis=0, return_counts=True)
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    boundary = [tuple(map(int, e)) for e in edges[counts == 1]]
    nonmanifold = [tuple(map(int, e)) for e in edges[counts > 2]]
    areas = _triangle_areas(mesh.soup())
    degenerate = [int(i) for i in np.flatnonzero(areas <= DEGENERATE_AREA)]
    used = np.unique(T)
    V, E = len(used), len(edges)
    euler = V - E + F

    n = len(mesh.vertices)
    graph = coo_matrix((np.ones(len(directed)), (directed[:, 0], directed[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    components = len(np.unique(labels[used]))
    watertight = not boundary and not nonmanifold
    volume = mesh_volume(mesh)
    consistent = bool(np.all(dcounts == 1)) and watertight and volume > 0
    genus = None
    if watertight and components == 1 and (2 - euler) % 2 == 0:
        genus = (2 - euler) // 2
    return MeshReport(mesh.name, watertight, consistent, boundary, nonmanifold, degenerate,
                      V, E, F, euler, components, genus, volume)


def net_joint_volume(pieces: Sequence[Piece]) -> float:
    return sum(joint_volume(j.spec, j.role) for p in pieces for j in p.joints)
