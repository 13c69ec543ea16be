"""Arc-polygon boundaries of r-convex hulls and their GeoJSON / native JSON encodings."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any
from typing import Union

import numpy as np
from matplotlib.path import Path as MplPath

from hybrid_levelset.constants import CHORD_TOLERANCE_RELATIVE
from hybrid_levelset.errors import DegenerateGeometryError
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.geometry import RConvexRegion
from hybrid_levelset.geometry import hull_vertices
from hybrid_levelset.raster import BBox
from hybrid_levelset.raster import RasterMask
from hybrid_levelset.raster import mask_from_predicate

ORIENTATION_CW = "cw"
ORIENTATION_CCW = "ccw"

Point = tuple[float, float]


@dataclass(frozen=True)
class Segment:
    start: Point
    end: Point

    @property
    def signed_area_term(self) -> float:
        (x1, y1), (x2, y2) = self.start, self.end
        return x1 * y2 - x2 * y1

    def flatten(self, tolerance: float) -> list[Point]:
        return [self.start]

    def to_dict(self) -> dict[str, Any]:
        return {"type": "segment", "start": list(self.start), "end": list(self.end)}


@dataclass(frozen=True)
class Arc:
    """A circular arc traversed from start_angle to end_angle in the given orientation."""

    center: Point
    radius: float
    start_angle: float
    end_angle: float
    orientation: str

    @property
    def sweep(self) -> float:
        """Signed angular sweep in (-2pi, 2pi); negative for clockwise arcs."""
        delta = (self.end_angle - self.start_angle) % (2.0 * math.pi)
        if self.orientation == ORIENTATION_CW:
            return delta - 2.0 * math.pi if delta > 0 else -2.0 * math.pi
        return delta if delta > 0 else 2.0 * math.pi

    def point_at(self, angle: float) -> Point:
        cx, cy = self.center
        return cx + self.radius * math.cos(angle), cy + self.radius * math.sin(angle)

    @property
    def start(self) -> Point:
        return self.point_at(self.start_angle)

    @property
    def end(self) -> Point:
        return self.point_at(self.end_angle)

    @property
    def midpoint(self) -> Point:
        return self.point_at(self.start_angle + 0.5 * self.sweep)

    @property
    def signed_area_term(self) -> float:
        cx, cy = self.center
        (x1, y1), (x2, y2) = self.start, self.end
        return cx * (y2 - y1) - cy * (x2 - x1) + self.radius**2 * self.sweep

    def flatten(self, tolerance: float) -> list[Point]:
        """Polyline vertices (end excluded) whose chords deviate at most `tolerance` from the arc."""
        ratio = min(tolerance / self.radius, 1.0)
        step = 2.0 * math.acos(1.0 - ratio)
        count = max(1, int(math.ceil(abs(self.sweep) / step)))
        return [self.point_at(self.start_angle + self.sweep * i / count) for i in range(count)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "arc",
            "center": list(self.center),
            "radius": self.radius,
            "start_angle": self.start_angle,
            "end_angle": self.end_angle,
            "orientation": self.orientation,
        }


Element = Union[Segment, Arc]


@dataclass(frozen=True)
class Ring:
    """A closed chain of segments and arcs; the enclosed set lies on the left."""

    elements: tuple[Element, ...]

    @property
    def signed_area(self) -> float:
        return 0.5 * sum(element.signed_area_term for element in self.elements)

    def is_closed(self, tolerance: float) -> bool:
        for current, following in zip(self.elements, self.elements[1:] + self.elements[:1]):
            if math.dist(current.end, following.start) > tolerance:
                return False
        return True

    def flatten(self, tolerance: float) -> list[Point]:
        """Closed polyline: the first vertex is repeated at the end."""
        vertices: list[Point] = []
        for element in self.elements:
            vertices.extend(element.flatten(tolerance))
        if vertices:
            vertices.append(vertices[0])
        return vertices

    def witness_point(self) -> Point:
        """A point on the ring that is not a generator (arc midpoint when available)."""
        for element in self.elements:
            if isinstance(element, Arc):
                return element.midpoint
        first = self.elements[0]
        return (0.5 * (first.start[0] + first.end[0]), 0.5 * (first.start[1] + first.end[1]))


@dataclass(frozen=True)
class ArcPolygonBoundary:
    """Closed rings plus their grouping into polygons (outer ring index, hole ring indices).

    Rings that are neither outer rings nor holes of one (zero-area slivers around
    isolated generators) are kept in `rings` but belong to no polygon.
    """

    rings: tuple[Ring, ...]
    polygons: tuple[tuple[int, tuple[int, ...]], ...]
    radius: float

    @property
    def outer_rings(self) -> list[Ring]:
        return [self.rings[outer] for outer, _ in self.polygons]

    @property
    def hole_rings(self) -> list[Ring]:
        return [self.rings[hole] for _, holes in self.polygons for hole in holes]

    def area(self) -> float:
        return sum(
            self.rings[outer].signed_area + sum(self.rings[h].signed_area for h in holes) for outer, holes in self.polygons
        )


def ring_area(ring: Ring) -> float:
    """Exact signed area of an arc-polygon ring (positive when counterclockwise)."""
    return ring.signed_area


def boundary_area(boundary: ArcPolygonBoundary) -> float:
    return boundary.area()


def convex_hull(cloud: PointCloud) -> ArcPolygonBoundary:
    """Counterclockwise hull ring made of segments; a single point gives a zero-length ring."""
    points = cloud.unique()[0].points
    order = hull_vertices(points)
    vertices = [tuple(map(float, points[i])) for i in order]
    if len(vertices) == 1:
        ring = Ring((Segment(vertices[0], vertices[0]),))
    else:
        ring = Ring(tuple(Segment(vertices[i], vertices[(i + 1) % len(vertices)]) for i in range(len(vertices))))
    return ArcPolygonBoundary(rings=(ring,), polygons=((0, ()),), radius=math.inf)


def _oriented_arcs(region: RConvexRegion) -> list[tuple[int, int, Arc]]:
    """One clockwise minor arc per arc center, keyed by its (from, to) generator indices."""
    sites = region.tri.sites
    centers = region.arc_centers
    r = region.radius
    eps = region.eps
    arcs: list[tuple[int, int, Arc]] = []
    for center, (i, j) in zip(centers.centers, centers.pairs):
        a = sites[i] - center
        b = sites[j] - center
        cross = a[0] * b[1] - a[1] * b[0]
        angle_i = math.atan2(a[1], a[0])
        angle_j = math.atan2(b[1], b[0])
        c = (float(center[0]), float(center[1]))
        if abs(cross) <= eps * r:
            # tangent pair: both half circles bound the empty ball
            arcs.append((int(i), int(j), Arc(c, r, angle_i, angle_j, ORIENTATION_CW)))
            arcs.append((int(j), int(i), Arc(c, r, angle_j, angle_i, ORIENTATION_CW)))
        elif cross < 0:
            arcs.append((int(i), int(j), Arc(c, r, angle_i, angle_j, ORIENTATION_CW)))
        else:
            arcs.append((int(j), int(i), Arc(c, r, angle_j, angle_i, ORIENTATION_CW)))
    return arcs


def _link_rings(arcs: list[tuple[int, int, Arc]]) -> list[Ring]:
    outgoing: dict[int, list[int]] = {}
    for index, (source, _, _) in enumerate(arcs):
        outgoing.setdefault(source, []).append(index)
    used = [False] * len(arcs)
    rings: list[Ring] = []
    for first in range(len(arcs)):
        if used[first]:
            continue
        chain = [first]
        used[first] = True
        start_site = arcs[first][0]
        site = arcs[first][1]
        closed = site == start_site
        while not closed:
            candidates = [k for k in outgoing.get(site, []) if not used[k]]
            if not candidates:
                break
            nxt = candidates[0]
            used[nxt] = True
            chain.append(nxt)
            site = arcs[nxt][1]
            closed = site == start_site
        if closed:
            rings.append(Ring(tuple(arcs[k][2] for k in chain)))
        else:
            logging.debug(f"Dropping open boundary chain of {len(chain)} arcs starting at site {start_site}")
    return rings


def _group_rings(rings: list[Ring], tolerance: float) -> tuple[tuple[int, tuple[int, ...]], ...]:
    outers = [i for i, ring in enumerate(rings) if ring.signed_area > 0]
    paths = {i: MplPath(np.asarray(rings[i].flatten(tolerance))) for i in outers}
    holes: dict[int, list[int]] = {i: [] for i in outers}
    for i, ring in enumerate(rings):
        if ring.signed_area >= 0:
            continue
        witness = ring.witness_point()
        container = [o for o in outers if paths[o].contains_point(witness)]
        if container:
            smallest = min(container, key=lambda o: rings[o].signed_area)
            holes[smallest].append(i)
    return tuple((outer, tuple(holes[outer])) for outer in outers)


def boundary(region: RConvexRegion, chord_tolerance: float | None = None) -> ArcPolygonBoundary:
    """Extract the closed arc rings bounding C_r(S).

    Infinite radii give the convex hull. Every ring is traversed with the region
    on its left, so outer rings are counterclockwise and holes clockwise.

    Raises:
        DegenerateGeometryError: If the generators are a single point.
    """
    if region.is_convex:
        return convex_hull(region.generators)
    if region.is_singleton:
        raise DegenerateGeometryError("a single generator has no arc boundary; use rasterize for a raster boundary")
    if chord_tolerance is None:
        chord_tolerance = default_chord_tolerance(region.tri.sites)
    rings = _link_rings(_oriented_arcs(region))
    for ring in rings:
        if not ring.is_closed(max(1e3 * region.eps, 1e-9)):
            logging.warning("Boundary ring failed the closure check")
    polygons = _group_rings(rings, chord_tolerance)
    logging.debug(f"Boundary at r={region.radius:.6g}: {len(rings)} rings, {len(polygons)} polygons")
    return ArcPolygonBoundary(rings=tuple(rings), polygons=polygons, radius=region.radius)


def default_chord_tolerance(points: np.ndarray) -> float:
    """1e-3 x the bounding-box diameter of the points."""
    span = float(np.hypot(*(points.max(axis=0) - points.min(axis=0)))) if len(points) else 0.0
    return CHORD_TOLERANCE_RELATIVE * span if span > 0 else CHORD_TOLERANCE_RELATIVE


def boundary_mask(boundary: ArcPolygonBoundary, bbox: BBox, resolution: int, chord_tolerance: float) -> RasterMask:
    """Rasterize the union of polygon interiors (outer rings minus their holes)."""
    def as_path(index: int) -> MplPath:
        return MplPath(np.asarray(boundary.rings[index].flatten(chord_tolerance)))

    paths = [(as_path(outer), [as_path(h) for h in holes]) for outer, holes in boundary.polygons]

    def inside(points: np.ndarray) -> np.ndarray:
        result = np.zeros(len(points), dtype=bool)
        for outer, holes in paths:
            if len(outer.vertices) < 4:
                continue
            member = outer.contains_points(points)
            for hole in holes:
                member &= ~hole.contains_points(points)
            result |= member
        return result

    return mask_from_predicate(inside, bbox, resolution)


def to_geojson(
    boundary: ArcPolygonBoundary, chord_tolerance: float, properties: dict[str, Any] | None = None
) -> dict[str, Any]:
    """FeatureCollection holding one MultiPolygon feature; arcs flattened to polylines."""
    coordinates = []
    for outer, holes in boundary.polygons:
        rings = [boundary.rings[outer].flatten(chord_tolerance)]
        rings.extend(boundary.rings[h].flatten(chord_tolerance) for h in holes)
        coordinates.append([[list(vertex) for vertex in ring] for ring in rings])
    feature = {
        "type": "Feature",
        "geometry": {"type": "MultiPolygon", "coordinates": coordinates},
        "properties": {
            "radius": None if math.isinf(boundary.radius) else boundary.radius,
            "chord_tolerance": chord_tolerance,
            **(properties or {}),
        },
    }
    return {"type": "FeatureCollection", "features": [feature]}


def to_native_json(boundary: ArcPolygonBoundary) -> dict[str, Any]:
    """Lossless encoding that keeps arc parameters; radius null means the convex hull."""
    return {
        "radius": None if math.isinf(boundary.radius) else boundary.radius,
        "rings": [
            {"signed_area": ring.signed_area, "elements": [element.to_dict() for element in ring.elements]}
            for ring in boundary.rings
        ],
        "polygons": [{"outer": outer, "holes": list(holes)} for outer, holes in boundary.polygons],
    }
