import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lutherie.errors import GeometryError
from lutherie.triangulate import triangulate


def tri_areas(pts, tris):
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def ring_area(r):
    r = np.asarray(r, float)
    return 0.5 * float(np.dot(r[:, 0], np.roll(r[:, 1], -1)) - np.dot(np.roll(r[:, 0], -1), r[:, 1]))


def test_square():
    tris = triangulate([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert tris.shape == (2, 3)


def test_clockwise_input_is_reoriented():
    pts = np.array([(0, 0), (0, 1), (1, 1), (1, 0)], float)
    assert (tri_areas(pts, triangulate(pts)) > 0).all()


def test_square_with_hole():
    outer = [(0, 0), (10, 0), (10, 10), (0, 10)]
    hole = [(3, 3), (3, 7), (7, 7), (7, 3)]
    tris = triangulate(outer, [hole])
    pts = np.array(outer + hole, float)
    assert len(tris) == 8
    assert tri_areas(pts, tris).sum() == pytest.approx(100 - 16)
    assert (tri_areas(pts, tris) > 0).all()


def test_collinear_vertices_kept():
    ring = [(0, 0), (1, 0), (2, 0), (2, 1), (0, 1)]
    tris = triangulate(ring)
    assert len(tris) == 3
    assert tri_areas(np.array(ring, float), tris).sum() == pytest.approx(2)


def test_degenerate_rejected():
    with pytest.raises(GeometryError):
        triangulate([(0, 0), (1, 0)])


def test_deterministic():
    ring = [(0, 0), (4, 0), (4, 4), (2, 1), (0, 4)]
    assert np.array_equal(triangulate(ring), triangulate(ring))


@st.composite
def star_polygon(draw):
    n = draw(st.integers(3, 40))
    radii = draw(st.lists(st.floats(1.0, 10.0), min_size=n, max_size=n))
    jitter = draw(st.lists(st.floats(-0.4, 0.4), min_size=n, max_size=n))
    angles = [(2 * math.pi * (i + 0.5 + j)) / n for i, j in enumerate(jitter)]
    return [(r * math.cos(a), r * math.sin(a)) for r, a in zip(radii, angles)]


@settings(max_examples=200)
@given(star_polygon())
def test_star_polygons(ring):
    tris = triangulate(ring)
    pts = np.array(ring, float)
    areas = tri_areas(pts, tris)
    assert len(tris) == len(ring) - 2
    assert (areas >= -1e-12).all()
    assert areas.sum() == pytest.approx(ring_area(ring), rel=1e-9)


@settings(max_examples=100)
@given(star_polygon(), st.integers(3, 12), st.floats(0.05, 0.8))
def test_star_with_polygon_hole(ring, m, scale):
    # hole strictly inside the kernel disc of radius 1
    r = 0.9 * scale
    hole = [(r * math.cos(-2 * math.pi * k / m), r * math.sin(-2 * math.pi * k / m))
            for k in range(m)]
    tris = triangulate(ring, [hole])
    pts = np.array(ring + hole, float)
    areas = tri_areas(pts, tris)
    assert len(tris) == len(ring) + m
    assert areas.sum() == pytest.approx(ring_area(ring) + ring_area(hole), rel=1e-9)
    assert (areas >= -1e-12).all()
