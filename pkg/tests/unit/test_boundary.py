"""Tests for arc-polygon boundary extraction and its encodings."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hybrid_levelset.boundary import Arc
from hybrid_levelset.boundary import Ring
from hybrid_levelset.boundary import Segment
from hybrid_levelset.boundary import boundary
from hybrid_levelset.boundary import boundary_area
from hybrid_levelset.boundary import boundary_mask
from hybrid_levelset.boundary import convex_hull
from hybrid_levelset.boundary import ring_area
from hybrid_levelset.boundary import to_geojson
from hybrid_levelset.boundary import to_native_json
from hybrid_levelset.errors import DegenerateGeometryError
from hybrid_levelset.geometry import INFINITY
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.geometry import RConvexRegion
from hybrid_levelset.raster import rasterize


def _square_area_at(r: float) -> float:
    """Unit square minus four circular caps of radius r on chords of length 1."""
    theta = 2.0 * math.asin(0.5 / r)
    cap = 0.5 * r * r * (theta - math.sin(theta))
    return 1.0 - 4.0 * cap


def test_arc_sweep_signs():
    """Test that clockwise arcs have negative sweep and counterclockwise arcs positive."""
    cw = Arc((0.0, 0.0), 1.0, math.pi / 2, 0.0, "cw")
    ccw = Arc((0.0, 0.0), 1.0, 0.0, math.pi / 2, "ccw")

    assert cw.sweep == pytest.approx(-math.pi / 2)
    assert ccw.sweep == pytest.approx(math.pi / 2)
    assert cw.end == pytest.approx((1.0, 0.0))


def test_full_circle_ring_area():
    """Test that a counterclockwise full circle has area pi r^2."""
    ring = Ring((Arc((2.0, -1.0), 3.0, 0.0, 0.0, "ccw"),))

    assert ring_area(ring) == pytest.approx(9.0 * math.pi)


def test_segment_ring_area():
    """Test the shoelace term on a counterclockwise triangle."""
    a, b, c = (0.0, 0.0), (2.0, 0.0), (0.0, 2.0)
    ring = Ring((Segment(a, b), Segment(b, c), Segment(c, a)))

    assert ring.signed_area == pytest.approx(2.0)
    assert ring.is_closed(1e-12)


def test_arc_flatten_respects_tolerance():
    """Test that flattened vertices lie on the circle and chords stay within tolerance."""
    arc = Arc((0.0, 0.0), 2.0, 0.0, math.pi, "ccw")
    tolerance = 1e-3

    vertices = np.asarray(arc.flatten(tolerance) + [arc.end])
    mids = 0.5 * (vertices[1:] + vertices[:-1])

    assert np.allclose(np.hypot(vertices[:, 0], vertices[:, 1]), 2.0)
    assert np.all(2.0 - np.hypot(mids[:, 0], mids[:, 1]) <= tolerance + 1e-12)


@pytest.mark.parametrize("r", [0.75, 1.0, 2.0, 5.0])
def test_unit_square_boundary_area(unit_square_corners, r):
    """Test the exact area of the unit-square hull against the cap formula."""
    region = RConvexRegion(unit_square_corners, r)

    arc_boundary = boundary(region)

    assert len(arc_boundary.outer_rings) == 1
    assert arc_boundary.hole_rings == []
    assert boundary_area(arc_boundary) == pytest.approx(_square_area_at(r), rel=1e-9)


def test_large_radius_tends_to_convex_hull(unit_square_corners):
    """Test the 1 - 1/(3r) behaviour for large radii."""
    region = RConvexRegion(unit_square_corners, 1000.0)

    assert boundary(region).area() == pytest.approx(1.0 - 1.0 / 3000.0, rel=1e-6)


def test_infinite_radius_boundary_is_polygon(unit_square_corners):
    """Test that the convex hull boundary is made of segments."""
    arc_boundary = boundary(RConvexRegion(unit_square_corners, INFINITY))

    ring = arc_boundary.rings[0]
    assert all(isinstance(element, Segment) for element in ring.elements)
    assert arc_boundary.area() == pytest.approx(1.0)
    assert math.isinf(arc_boundary.radius)


def test_convex_hull_of_single_point():
    """Test the zero-length ring of a single point."""
    hull = convex_hull(PointCloud([[1.0, 2.0]]))

    assert hull.area() == 0.0
    assert hull.rings[0].elements[0] == Segment((1.0, 2.0), (1.0, 2.0))


def test_singleton_boundary_raises():
    """Test that a single generator has no arc boundary."""
    with pytest.raises(DegenerateGeometryError):
        boundary(RConvexRegion(PointCloud([[0.0, 0.0]]), 1.0))


def test_ring_with_hole():
    """Test that a ring of points around an empty center yields an outer ring and a hole."""
    angles = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    region = RConvexRegion(PointCloud(np.vstack([circle, 0.5 * circle])), 0.3)

    arc_boundary = boundary(region)

    assert len(arc_boundary.outer_rings) == 1
    assert len(arc_boundary.hole_rings) == 1
    assert arc_boundary.hole_rings[0].signed_area < 0
    # the annulus between radii 0.5 and 1 has area 0.75 pi; the arcs cut into it slightly
    assert 0.6 * math.pi < arc_boundary.area() < 0.75 * math.pi


def test_two_separated_clusters_give_two_polygons():
    """Test that distant clusters produce disjoint outer rings."""
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    region = RConvexRegion(PointCloud(np.vstack([square, square + [10.0, 0.0]])), 1.0)

    arc_boundary = boundary(region)

    assert len(arc_boundary.polygons) == 2
    assert arc_boundary.area() == pytest.approx(2.0 * _square_area_at(1.0), rel=1e-9)


def test_boundary_mask_matches_rasterized_membership(unit_square_corners):
    """Test that the polygon raster and the membership raster agree away from the boundary."""
    region = RConvexRegion(unit_square_corners, 1.0)
    bbox = (-0.5, -0.5, 1.5, 1.5)

    from_boundary = boundary_mask(boundary(region), bbox, 128, 1e-4)
    from_membership = rasterize(region, bbox, 128)

    differing = np.count_nonzero(from_boundary.bits ^ from_membership.bits)
    # only cells cut by the boundary curve may differ
    assert differing <= 4 * 128 * 0.1
    assert from_boundary.area() == pytest.approx(_square_area_at(1.0), abs=0.02)


def test_geojson_is_closed_multipolygon(unit_square_corners):
    """Test the GeoJSON structure and ring closure."""
    arc_boundary = boundary(RConvexRegion(unit_square_corners, 1.0))

    document = to_geojson(arc_boundary, 1e-3, {"nu": 1.0})

    json.dumps(document)
    feature = document["features"][0]
    assert document["type"] == "FeatureCollection"
    assert feature["geometry"]["type"] == "MultiPolygon"
    ring = feature["geometry"]["coordinates"][0][0]
    assert ring[0] == ring[-1]
    assert len(ring) > 8
    assert feature["properties"]["radius"] == 1.0
    assert feature["properties"]["nu"] == 1.0


def test_geojson_radius_null_for_convex_hull(unit_square_corners):
    """Test that the convex hull encodes radius as null."""
    document = to_geojson(boundary(RConvexRegion(unit_square_corners, INFINITY)), 1e-3)

    assert document["features"][0]["properties"]["radius"] is None


def test_native_json_keeps_arc_parameters(unit_square_corners):
    """Test the lossless encoding."""
    document = to_native_json(boundary(RConvexRegion(unit_square_corners, 1.0)))

    elements = document["rings"][0]["elements"]
    assert len(elements) == 4
    assert all(element["type"] == "arc" and element["orientation"] == "cw" for element in elements)
    assert document["polygons"] == [{"outer": 0, "holes": []}]
