"""Exact planar r-convex hull membership on top of a Delaunay triangulation.

The r-convex hull C_r(S) of a finite set S is the complement of the union of all
open r-balls that miss S. A query q is outside the hull iff some center c with
||c - q|| < r has every generator at distance >= r. The set E of admissible
centers is the plane minus the open r-disks around the generators, so the
nearest point of E to q is either q itself, the radial projection of q onto the
circle of its nearest generator, or a corner of E. Corners of E are the centers
of empty r-balls touching two generators; they sit on Delaunay edges and are
called arc centers below because they also carry the boundary arcs.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import Delaunay
from scipy.spatial import QhullError
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from hybrid_levelset.constants import BRUTE_FORCE_GRID_DENSITY
from hybrid_levelset.constants import EPS_GEOM_FLOOR
from hybrid_levelset.constants import EPS_GEOM_RELATIVE
from hybrid_levelset.errors import EmptyInputError

INFINITY = math.inf


def _as_points(points: Iterable | np.ndarray) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.size == 0:
        return np.empty((0, 2), dtype=float)
    if array.ndim == 1 and array.shape[0] == 2:
        array = array.reshape(1, 2)
    if array.ndim != 2 or array.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of planar points, got shape {array.shape}")
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered finite set of planar sample points.

    Empty clouds are allowed so that split parts can be represented; operations
    that need data raise EmptyInputError.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        array = np.array(_as_points(self.points), dtype=float, copy=True)
        if not np.all(np.isfinite(array)):
            raise ValueError("point coordinates must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "points", array)

    @classmethod
    def empty(cls) -> PointCloud:
        return cls(np.empty((0, 2)))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @cached_property
    def duplicate_count(self) -> int:
        """Number of points that repeat an earlier point exactly."""
        if self.is_empty:
            return 0
        return len(self) - int(np.unique(self.points, axis=0).shape[0])

    def unique(self) -> tuple[PointCloud, int]:
        """Return the distinct points (first-occurrence order) and the duplicate count."""
        if self.is_empty:
            return self, 0
        _, first = np.unique(self.points, axis=0, return_index=True)
        order = np.sort(first)
        return PointCloud(self.points[order]), len(self) - len(order)

    def bbox(self) -> tuple[float, float, float, float]:
        if self.is_empty:
            raise EmptyInputError("bounding box of an empty point cloud")
        xmin, ymin = self.points.min(axis=0)
        xmax, ymax = self.points.max(axis=0)
        return float(xmin), float(ymin), float(xmax), float(ymax)

    def diameter(self) -> float:
        """Largest pairwise distance (computed on the convex hull vertices)."""
        if len(self) < 2:
            return 0.0
        vertices = self.points[hull_vertices(self.points)]
        return float(cdist(vertices, vertices).max())

    def take(self, selector: np.ndarray) -> PointCloud:
        return PointCloud(self.points[selector])

    def concat(self, other: PointCloud) -> PointCloud:
        return PointCloud(np.vstack([self.points, other.points]))

    def to_list(self) -> list[list[float]]:
        return self.points.tolist()


def geometric_tolerance(points: np.ndarray) -> float:
    """The relative tolerance eps_geom = 1e-9 x bounding-box diameter."""
    if points.shape[0] == 0:
        return EPS_GEOM_FLOOR
    span = float(np.hypot(*(points.max(axis=0) - points.min(axis=0))))
    scale = span if span > 0 else max(1.0, float(np.abs(points).max()))
    return max(EPS_GEOM_RELATIVE * scale, EPS_GEOM_FLOOR)


def _is_collinear(points: np.ndarray) -> bool:
    if points.shape[0] < 3:
        return True
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    return bool(singular[1] <= EPS_GEOM_RELATIVE * max(singular[0], EPS_GEOM_FLOOR))


def hull_vertices(points: np.ndarray) -> np.ndarray:
    """Indices of the convex hull vertices in counterclockwise order.

    Collinear boundary points are excluded. A single point gives one index and a
    collinear set gives its two extreme points.
    """
    points = _as_points(points)
    n = points.shape[0]
    if n == 0:
        raise EmptyInputError("convex hull of an empty point set")
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] == 1:
        return np.array([0])
    if _is_collinear(points):
        centered = points - points.mean(axis=0)
        direction = np.linalg.svd(centered)[2][0]
        projection = centered @ direction
        return np.array([int(np.argmin(projection)), int(np.argmax(projection))])
    try:
        return np.asarray(ConvexHull(points).vertices)
    except QhullError:
        centered = points - points.mean(axis=0)
        direction = np.linalg.svd(centered)[2][0]
        projection = centered @ direction
        return np.array([int(np.argmin(projection)), int(np.argmax(projection))])


def point_in_convex_hull(points: np.ndarray, queries: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Vectorized closed point-in-convex-hull test with tolerance eps."""
    points = _as_points(points)
    queries = _as_points(queries)
    if eps is None:
        eps = geometric_tolerance(points)
    vertices = points[hull_vertices(points)]
    if vertices.shape[0] == 1:
        return np.hypot(*(queries - vertices[0]).T) <= eps
    if vertices.shape[0] == 2:
        return _distance_to_segment(queries, vertices[0], vertices[1]) <= eps
    start = vertices
    end = np.roll(vertices, -1, axis=0)
    edge = end - start
    length = np.hypot(edge[:, 0], edge[:, 1])
    rel_x = queries[:, None, 0] - start[None, :, 0]
    rel_y = queries[:, None, 1] - start[None, :, 1]
    cross = edge[None, :, 0] * rel_y - edge[None, :, 1] * rel_x
    return np.all(cross >= -eps * length[None, :], axis=1)


def _distance_to_segment(queries: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((queries - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(queries))
    nearest = a + t[:, None] * ab
    return np.hypot(*(queries - nearest).T)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Delaunay triangulation of distinct sites.

    `voronoi_vertices[t]` is the circumcenter of `simplices[t]`; each Delaunay
    edge is dual to the Voronoi ridge between the cells of its two sites.
    Degenerate site sets (fewer than three points or all collinear) carry no
    triangles; their edges chain consecutive sites along the common line.
    """

    sites: np.ndarray
    simplices: np.ndarray
    edges: np.ndarray
    degenerate: bool
    voronoi_vertices: np.ndarray = field(repr=False)

    @cached_property
    def site_tree(self) -> cKDTree:
        return cKDTree(self.sites)

    @property
    def n_sites(self) -> int:
        return int(self.sites.shape[0])


def _circumcenters(triangles: np.ndarray) -> np.ndarray:
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    ab = b - a
    ac = c - a
    d = 2.0 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    ab2 = (ab**2).sum(axis=1)
    ac2 = (ac**2).sum(axis=1)
    ux = (ac[:, 1] * ab2 - ab[:, 1] * ac2) / d
    uy = (ab[:, 0] * ac2 - ac[:, 0] * ab2) / d
    return a + np.column_stack([ux, uy])


def _degenerate_triangulation(sites: np.ndarray) -> Triangulation:
    n = sites.shape[0]
    if n >= 2:
        centered = sites - sites.mean(axis=0)
        direction = np.linalg.svd(centered)[2][0]
        order = np.argsort(centered @ direction, kind="stable")
        edges = np.column_stack([order[:-1], order[1:]])
    else:
        edges = np.empty((0, 2), dtype=int)
    return Triangulation(
        sites=sites,
        simplices=np.empty((0, 3), dtype=int),
        edges=edges,
        degenerate=True,
        voronoi_vertices=np.empty((0, 2)),
    )


def delaunay(cloud: PointCloud) -> Triangulation:
    """Triangulate the distinct points of `cloud`.

    Raises:
        EmptyInputError: If the cloud has no points.
    """
    if cloud.is_empty:
        raise EmptyInputError("cannot triangulate an empty point cloud")
    sites = cloud.unique()[0].points
    if sites.shape[0] < 3 or _is_collinear(sites):
        logging.debug(f"Degenerate generator set ({sites.shape[0]} distinct sites), chaining collinear pairs")
        return _degenerate_triangulation(sites)
    try:
        tri = Delaunay(sites)
    except QhullError as e:
        logging.debug(f"Qhull rejected the generator set: {e}")
        return _degenerate_triangulation(sites)

    simplices = np.asarray(tri.simplices)
    pairs = {(min(a, b), max(a, b)) for simplex in simplices.tolist() for a, b in itertools.combinations(simplex, 2)}

    return Triangulation(
        sites=sites,
        simplices=simplices,
        edges=np.array(sorted(pairs), dtype=int).reshape(-1, 2),
        degenerate=False,
        voronoi_vertices=_circumcenters(sites[simplices]),
    )


@dataclass(frozen=True, eq=False)
class ArcCenters:
    """Centers of empty r-balls whose boundary passes through two generators."""

    centers: np.ndarray
    pairs: np.ndarray

    def __len__(self) -> int:
        return int(self.centers.shape[0])


@dataclass(frozen=True, eq=False)
class RConvexRegion:
    """The r-convex hull C_r(S) of a generator cloud; radius INFINITY means conv(S)."""

    generators: PointCloud
    radius: float
    triangulation: Triangulation | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        radius = float(self.radius)
        if math.isnan(radius) or radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", radius)
        if self.triangulation is None:
            object.__setattr__(self, "triangulation", delaunay(self.generators))

    @property
    def tri(self) -> Triangulation:
        assert self.triangulation is not None
        return self.triangulation

    @property
    def is_convex(self) -> bool:
        return math.isinf(self.radius)

    @property
    def degenerate(self) -> bool:
        return self.tri.degenerate

    @property
    def is_singleton(self) -> bool:
        return self.tri.n_sites == 1

    @cached_property
    def eps(self) -> float:
        return geometric_tolerance(self.tri.sites)

    def with_radius(self, radius: float) -> RConvexRegion:
        """Same generators and triangulation at another radius."""
        return RConvexRegion(self.generators, radius, self.triangulation)

    @cached_property
    def arc_centers(self) -> ArcCenters:
        return arc_centers(self)

    @cached_property
    def _center_tree(self) -> cKDTree | None:
        centers = self.arc_centers.centers
        return cKDTree(centers) if len(centers) else None

    def contains_points(self, queries: np.ndarray) -> np.ndarray:
        return contains_points(self, queries)


def arc_centers(region: RConvexRegion) -> ArcCenters:
    """Compute the centers of empty r-balls touching two generators.

    Such a ball passes through both ends of a Delaunay edge (a, b) with
    |ab| <= 2r; of the two candidate centers on the bisector only those with
    no generator closer than r - eps/2 are kept.
    """
    tri = region.tri
    r = region.radius
    if math.isinf(r) or tri.edges.shape[0] == 0:
        return ArcCenters(np.empty((0, 2)), np.empty((0, 2), dtype=int))

    a = tri.sites[tri.edges[:, 0]]
    b = tri.sites[tri.edges[:, 1]]
    chord = b - a
    half = 0.5 * np.hypot(chord[:, 0], chord[:, 1])
    usable = half <= r
    if not np.any(usable):
        return ArcCenters(np.empty((0, 2)), np.empty((0, 2), dtype=int))

    edges = tri.edges[usable]
    a, b, chord, half = a[usable], b[usable], chord[usable], half[usable]
    mid = 0.5 * (a + b)
    normal = np.column_stack([-chord[:, 1], chord[:, 0]]) / (2.0 * half[:, None])
    offset = np.sqrt(np.maximum(r * r - half * half, 0.0))

    eps = region.eps
    tangent = offset <= eps
    candidates = [mid + offset[:, None] * normal, (mid - offset[:, None] * normal)[~tangent]]
    pairs = [edges, edges[~tangent]]
    centers = np.vstack(candidates)
    pair_index = np.vstack(pairs)

    nearest, _ = tri.site_tree.query(centers)
    empty = nearest >= r - 0.5 * eps
    logging.debug(f"Arc centers at r={r:.6g}: {int(empty.sum())} of {len(centers)} candidates are empty balls")
    return ArcCenters(centers[empty], pair_index[empty])


def contains_points(region: RConvexRegion, queries: np.ndarray) -> np.ndarray:
    """Vectorized exact membership in C_r(S).

    A witness center must lie within r - eps of the query and keep every
    generator at distance >= r - eps/2, so ambiguous queries resolve to members
    and generators are always members.
    """
    queries = _as_points(queries)
    if queries.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    if region.is_convex:
        return point_in_convex_hull(region.tri.sites, queries, region.eps)

    tri = region.tri
    r = region.radius
    eps = region.eps
    reach = r - eps
    empty_ball = r - 0.5 * eps
    if reach <= 0:
        nearest, _ = tri.site_tree.query(queries)
        return nearest <= reach + eps

    k = min(3, tri.n_sites)
    distances, indices = tri.site_tree.query(queries, k=k)
    distances = distances.reshape(len(queries), k)
    indices = indices.reshape(len(queries), k)

    outside = distances[:, 0] >= empty_ball

    # radial projections onto the circles of the nearest generators
    for j in range(k):
        delta = distances[:, j]
        pending = ~outside & (delta >= eps) & (np.abs(r - delta) <= reach)
        if not np.any(pending):
            continue
        sites = tri.sites[indices[pending, j]]
        centers = sites + (r / delta[pending])[:, None] * (queries[pending] - sites)
        clearance, _ = tri.site_tree.query(centers)
        hit = np.flatnonzero(pending)[clearance >= empty_ball]
        outside[hit] = True

    tree = region._center_tree
    if tree is not None and not np.all(outside):
        pending = np.flatnonzero(~outside)
        gap, _ = tree.query(queries[pending])
        outside[pending[gap <= reach]] = True

    return ~outside


def contains(region: RConvexRegion, q: Iterable[float]) -> bool:
    """Return True iff q is a member of the region."""
    point = np.asarray(q, dtype=float).reshape(1, 2)
    if not np.all(np.isfinite(point)):
        raise ValueError("query point must be finite")
    return bool(contains_points(region, point)[0])


def brute_force_contains(region: RConvexRegion, q: Iterable[float], grid_density: int = BRUTE_FORCE_GRID_DENSITY) -> bool:
    """Approximate membership by scanning a lattice of candidate centers around q.

    The lattice has grid_density points per axis over the square of side 2r
    centered at q; q is a member iff no lattice center inside the open r-disk
    about q keeps every generator at distance >= r.
    """
    if region.is_convex:
        raise ValueError("the brute-force oracle needs a finite radius")
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    point = np.asarray(q, dtype=float).reshape(2)
    r = region.radius
    axis = np.linspace(-r, r, grid_density)
    dx, dy = np.meshgrid(axis, axis)
    offsets = np.column_stack([dx.ravel(), dy.ravel()])
    offsets = offsets[np.hypot(offsets[:, 0], offsets[:, 1]) < r]
    clearance, _ = region.tri.site_tree.query(point + offsets, distance_upper_bound=r, workers=-1)
    return not bool(np.any(clearance >= r))
