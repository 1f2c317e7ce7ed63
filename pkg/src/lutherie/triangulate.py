"""Ear-clipping triangulation of simple polygons with holes.

Holes are merged into the outer ring through bridge edges (rightmost hole
vertex first), then ears are clipped lowest ring position first. The ear
status of a vertex only changes when a neighbour is clipped, so it is cached.
"""

from __future__ import annotations

import heapq

import numpy as np

from .errors import GeometryError


def _area2(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _ring_area2(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _in_cone(prev, v, nxt, m) -> bool:
    """Whether m lies in the interior wedge at v of a CCW ring."""
    left_in = _area2(prev, v, m) > 0
    left_out = _area2(v, nxt, m) > 0
    if _area2(prev, v, nxt) >= 0:
        return left_in and left_out
    return left_in or left_out


def _bridge(ring: list[int], pts: np.ndarray, hole: list[int]) -> list[int]:
    """Splice ``hole`` (clockwise) into ``ring`` (counterclockwise)."""
    hx = pts[hole, 0]
    k = int(np.argmax(hx))
    # lowest among equal maxima keeps the choice deterministic
    ties = [i for i in range(len(hole)) if hx[i] == hx[k]]
    k = min(ties, key=lambda i: pts[hole[i], 1])
    hole = hole[k:] + hole[:k]
    m = pts[hole[0]]

    n = len(ring)
    best_x = np.inf
    best_pos = None
    hit_vertex = None
    for i in range(n):
        a, b = pts[ring[i]], pts[ring[(i + 1) % n]]
        if not ((a[1] <= m[1] <= b[1]) or (b[1] <= m[1] <= a[1])) or a[1] == b[1]:
            continue
        t = (m[1] - a[1]) / (b[1] - a[1])
        x = a[0] + t * (b[0] - a[0])
        if x < m[0] or x > best_x:
            continue
        if x == best_x and best_pos is not None:
            continue
        best_x = x
        if t == 0.0:
            hit_vertex = i
        elif t == 1.0:
            hit_vertex = (i + 1) % n
        else:
            hit_vertex = None
        best_pos = i if a[0] >= b[0] else (i + 1) % n
    if best_pos is None:
        raise GeometryError("hole lies outside the outer ring")

    if hit_vertex is not None:
        cands = [hit_vertex]
    else:
        p = pts[ring[best_pos]]
        ix = np.array([best_x, m[1]])
        cands = [best_pos]
        tri = (m, ix, p) if _area2(m, ix, p) > 0 else (m, p, ix)
        inside = []
        for j in range(n):
            if j == best_pos:
                continue
            q = pts[ring[j]]
            if _area2(pts[ring[j - 1]], q, pts[ring[(j + 1) % n]]) >= 0:
                continue  # only reflex vertices can block
            if (_area2(tri[0], tri[1], q) >= 0 and _area2(tri[1], tri[2], q) >= 0
                    and _area2(tri[2], tri[0], q) >= 0):
                inside.append(j)
        if inside:
            def key(j):
                q = pts[ring[j]]
                dx, dy = q[0] - m[0], q[1] - m[1]
                return (abs(np.arctan2(dy, dx)), dx * dx + dy * dy, j)
            cands = sorted(inside, key=key)
    # among duplicate occurrences pick the one whose wedge contains m
    chosen = None
    for c in cands:
        same = [j for j in range(n) if ring[j] == ring[c]]
        for j in [c] + [s for s in same if s != c]:
            if _in_cone(pts[ring[j - 1]], pts[ring[j]], pts[ring[(j + 1) % n]], m):
                chosen = j
                break
        if chosen is not None:
            break
    if chosen is None:
        chosen = cands[0]
    return ring[:chosen + 1] + hole + [hole[0], ring[chosen]] + ring[chosen + 1:]


def triangulate(outer, holes=()) -> np.ndarray:
    """Triangulate a polygon with holes.

    Parameters
    ----------
    outer : (n, 2) array_like
        Counterclockwise outer ring without the closing vertex.
    holes : sequence of (k, 2) array_like
        Clockwise hole rings.

    Returns
    -------
    (m, 3) int array
        Counterclockwise triangles indexing the concatenation of ``outer``
        and all holes, in order.
    """
    rings = [np.asarray(outer, dtype=float)] + [np.asarray(h, dtype=float) for h in holes]
    pts = np.concatenate(rings) if rings else np.zeros((0, 2))
    offsets = np.cumsum([0] + [len(r) for r in rings])
    ring = list(range(len(rings[0])))
    if _ring_area2(rings[0]) < 0:
        ring.reverse()
    hole_lists = []
    for i, h in enumerate(rings[1:], start=1):
        idx = list(range(offsets[i], offsets[i + 1]))
        if _ring_area2(h) > 0:
            idx.reverse()
        hole_lists.append(idx)
    hole_lists.sort(key=lambda idx: (-pts[idx, 0].max(), pts[idx, 1].min()))
    for idx in hole_lists:
        ring = _bridge(ring, pts, idx)
    return _clip_ears(ring, pts)


def _clip_ears(ring: list[int], pts: np.ndarray) -> np.ndarray:
    m = len(ring)
    if m < 3:
        raise GeometryError("polygon has fewer than 3 vertices")
    coords = pts[ring]
    prev = [(i - 1) % m for i in range(m)]
    nxt = [(i + 1) % m for i in range(m)]
    alive = np.ones(m, dtype=bool)

    def is_ear(i: int) -> bool:
        a, b, c = coords[prev[i]], coords[i], coords[nxt[i]]
        if _area2(a, b, c) <= 0:
            return False
        mask = alive.copy()
        mask[[prev[i], i, nxt[i]]] = False
        q = coords[mask]
        if len(q) == 0:
            return True
        same = (np.all(q == a, axis=1) | np.all(q == b, axis=1) | np.all(q == c, axis=1))
        q = q[~same]
        if len(q) == 0:
            return True
        d1 = (b[0] - a[0]) * (q[:, 1] - a[1]) - (b[1] - a[1]) * (q[:, 0] - a[0])
        d2 = (c[0] - b[0]) * (q[:, 1] - b[1]) - (c[1] - b[1]) * (q[:, 0] - b[0])
        d3 = (a[0] - c[0]) * (q[:, 1] - c[1]) - (a[1] - c[1]) * (q[:, 0] - c[0])
        return not np.any((d1 >= 0) & (d2 >= 0) & (d3 >= 0))

    ear = [is_ear(i) for i in range(m)]
    heap = [i for i in range(m) if ear[i]]
    heapq.heapify(heap)
    tris = []
    remaining = m
    while remaining > 3:
        i = None
        while heap:
            j = heapq.heappop(heap)
            if alive[j] and ear[j]:
                i = j
                break
        if i is None:
            i = _fallback(coords, alive, prev, nxt)
        a, c = prev[i], nxt[i]
        tris.append((ring[a], ring[i], ring[c]))
        alive[i] = False
        nxt[a], prev[c] = c, a
        remaining -= 1
        for k in (a, c):
            ear[k] = is_ear(k)
            if ear[k]:
                heapq.heappush(heap, k)
    i = int(np.flatnonzero(alive)[0])
    tris.append((ring[prev[i]], ring[i], ring[nxt[i]]))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


def _fallback(coords, alive, prev, nxt) -> int:
    """No clean ear: clip the convex vertex with the largest triangle."""
    best, best_area = None, 0.0
    for i in np.flatnonzero(alive):
        area = _area2(coords[prev[i]], coords[i], coords[nxt[i]])
        if area > best_area:
            best, best_area = int(i), area
    if best is None:
        raise GeometryError("polygon could not be triangulated (degenerate or self-intersecting)")
    return best
