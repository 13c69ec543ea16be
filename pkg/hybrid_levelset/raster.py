"""Raster masks, morphology and the two set metrics (Hausdorff and distance in measure)."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import Callable

import numpy as np
from scipy import ndimage

from hybrid_levelset.constants import DEFAULT_RESOLUTION
from hybrid_levelset.constants import BBOX_BANDWIDTH_PADDING
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.geometry import RConvexRegion

if TYPE_CHECKING:
    from hybrid_levelset.density import Bandwidth

BBox = tuple[float, float, float, float]
MODE_DILATE = "dilate"
MODE_ERODE = "erode"


@dataclass(frozen=True, eq=False)
class RasterMask:
    """A boolean grid over a bounding box; row i is the i-th cell row in y."""

    bbox: BBox
    resolution: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = (float(v) for v in self.bbox)
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate bounding box {self.bbox}")
        if self.resolution < 1:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.resolution, self.resolution):
            raise ValueError(f"bits have shape {bits.shape}, expected {(self.resolution, self.resolution)}")
        object.__setattr__(self, "bbox", (xmin, ymin, xmax, ymax))
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, bbox: BBox, resolution: int) -> RasterMask:
        return cls(bbox, resolution, np.zeros((resolution, resolution), dtype=bool))

    @property
    def cell_size(self) -> tuple[float, float]:
        xmin, ymin, xmax, ymax = self.bbox
        return (xmax - xmin) / self.resolution, (ymax - ymin) / self.resolution

    @property
    def cell_area(self) -> float:
        dx, dy = self.cell_size
        return dx * dy

    @property
    def cell_diagonal(self) -> float:
        return math.hypot(*self.cell_size)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        return not bool(self.bits.any())

    def area(self) -> float:
        return self.count * self.cell_area

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return cell_centers(self.bbox, self.resolution)

    def with_bits(self, bits: np.ndarray) -> RasterMask:
        return RasterMask(self.bbox, self.resolution, bits)

    def compatible(self, other: RasterMask) -> bool:
        return self.resolution == other.resolution and np.allclose(self.bbox, other.bbox, rtol=0, atol=1e-12)

    def contains_cells_of(self, other: RasterMask) -> bool:
        """True iff every set cell of `other` is set here."""
        _require_compatible(self, other)
        return not bool(np.any(other.bits & ~self.bits))

    def lookup(self, points: np.ndarray) -> np.ndarray:
        """Value of the cell holding each point; points outside the bbox read False."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        xmin, ymin, _, _ = self.bbox
        dx, dy = self.cell_size
        j = np.floor((points[:, 0] - xmin) / dx).astype(int)
        i = np.floor((points[:, 1] - ymin) / dy).astype(int)
        inside = (i >= 0) & (i < self.resolution) & (j >= 0) & (j < self.resolution)
        out = np.zeros(len(points), dtype=bool)
        out[inside] = self.bits[i[inside], j[inside]]
        return out


def cell_centers(bbox: BBox, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center x and y coordinates of a resolution x resolution grid."""
    xmin, ymin, xmax, ymax = bbox
    dx = (xmax - xmin) / resolution
    dy = (ymax - ymin) / resolution
    offsets = np.arange(resolution) + 0.5
    return xmin + offsets * dx, ymin + offsets * dy


def mask_from_predicate(
    predicate: Callable[[np.ndarray], np.ndarray],
    bbox: BBox,
    resolution: int = DEFAULT_RESOLUTION,
    workers: int = 1,
) -> RasterMask:
    """Rasterize any vectorized point predicate at cell centers.

    Rows are evaluated in blocks; with workers > 1 the blocks run on a thread pool.
    """
    xs, ys = cell_centers(bbox, resolution)
    block = max(1, 65536 // resolution)
    starts = list(range(0, resolution, block))

    def evaluate(start: int) -> np.ndarray:
        gx, gy = np.meshgrid(xs, ys[start : start + block])
        return np.asarray(predicate(np.column_stack([gx.ravel(), gy.ravel()])), dtype=bool).reshape(gx.shape)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(evaluate, starts))
    else:
        rows = [evaluate(start) for start in starts]
    return RasterMask(bbox, resolution, np.vstack(rows))


def default_bbox(points: np.ndarray, radius: float = 0.0, bandwidth: Bandwidth | None = None) -> BBox:
    """Data bounding box padded by max(radius, 3 x largest bandwidth).

    Infinite radii do not pad; a zero padding falls back to 5% of the data span.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        raise EmptyInputError("bounding box of an empty point set")
    xmin, ymin = points.min(axis=0)
    xmax, ymax = points.max(axis=0)
    pad = radius if math.isfinite(radius) else 0.0
    if bandwidth is not None:
        pad = max(pad, BBOX_BANDWIDTH_PADDING * max(bandwidth.h1, bandwidth.h2))
    if pad <= 0:
        span = max(xmax - xmin, ymax - ymin)
        pad = 0.05 * span if span > 0 else 1.0
    return float(xmin - pad), float(ymin - pad), float(xmax + pad), float(ymax + pad)


def rasterize(
    region: RConvexRegion,
    bbox: BBox | None = None,
    resolution: int = DEFAULT_RESOLUTION,
    workers: int = 1,
) -> RasterMask:
    """Set each cell whose center is a member of the region."""
    if bbox is None:
        bbox = default_bbox(region.tri.sites, region.radius)
    xmin, ymin, xmax, ymax = bbox
    sites = region.tri.sites
    if np.any(sites < [xmin, ymin]) or np.any(sites > [xmax, ymax]):
        logging.warning(f"Raster bbox {bbox} does not cover every generator; the mask is clipped")
    mask = mask_from_predicate(region.contains_points, bbox, resolution, workers)
    logging.debug(f"Rasterized region (r={region.radius:.6g}) at {resolution}x{resolution}: {mask.count} cells set")
    return mask


def _require_compatible(a: RasterMask, b: RasterMask) -> None:
    if not a.compatible(b):
        raise ValueError("masks must share bounding box and resolution")


def _padding_cells(mask: RasterMask, radius: float) -> int:
    return int(math.ceil(radius / min(mask.cell_size))) + 1


def _dilate_bits(bits: np.ndarray, radius: float, sampling: tuple[float, float]) -> np.ndarray:
    if not bits.any():
        return np.zeros_like(bits)
    return ndimage.distance_transform_edt(~bits, sampling=sampling) <= radius


def _erode_bits(bits: np.ndarray, radius: float, sampling: tuple[float, float]) -> np.ndarray:
    if not bits.any():
        return np.zeros_like(bits)
    return ndimage.distance_transform_edt(bits, sampling=sampling) > radius


def minkowski(mask: RasterMask, radius: float, mode: str) -> RasterMask:
    """Dilate or erode by the discrete Euclidean ball of the given radius.

    The plane outside the bbox is treated as empty.
    """
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if mode not in (MODE_DILATE, MODE_ERODE):
        raise ValueError(f"mode must be '{MODE_DILATE}' or '{MODE_ERODE}', got {mode!r}")
    if radius == 0:
        return mask.with_bits(mask.bits.copy())
    dx, dy = mask.cell_size
    pad = _padding_cells(mask, radius)
    padded = np.pad(mask.bits, pad)
    if mode == MODE_DILATE:
        result = _dilate_bits(padded, radius, (dy, dx))
    else:
        result = _erode_bits(padded, radius, (dy, dx))
    return mask.with_bits(result[pad:-pad, pad:-pad])


def closing(mask: RasterMask, radius: float) -> RasterMask:
    """Erosion of the dilation, computed in a padded frame so nothing is lost at the bbox edge."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return mask.with_bits(mask.bits.copy())
    dx, dy = mask.cell_size
    pad = 2 * _padding_cells(mask, radius)
    padded = np.pad(mask.bits, pad)
    closed = _erode_bits(_dilate_bits(padded, radius, (dy, dx)), radius, (dy, dx))
    return mask.with_bits(closed[pad:-pad, pad:-pad])


def hausdorff(a: RasterMask, b: RasterMask) -> float:
    """Hausdorff distance between the set-cell centers of two masks."""
    _require_compatible(a, b)
    if a.is_empty or b.is_empty:
        raise EmptyInputError("Hausdorff distance is undefined for an empty mask")
    dx, dy = a.cell_size
    to_b = ndimage.distance_transform_edt(~b.bits, sampling=(dy, dx))
    to_a = ndimage.distance_transform_edt(~a.bits, sampling=(dy, dx))
    return float(max(to_b[a.bits].max(), to_a[b.bits].max()))


def measure_distance(a: RasterMask, b: RasterMask) -> float:
    """Area of the symmetric difference."""
    _require_compatible(a, b)
    return int(np.count_nonzero(a.bits ^ b.bits)) * a.cell_area


def component_count(mask: RasterMask) -> int:
    """Number of 8-connected components of set cells."""
    structure = ndimage.generate_binary_structure(2, 2)
    _, count = ndimage.label(mask.bits, structure=structure)
    return int(count)


def mask_area(mask: RasterMask) -> float:
    return mask.area()
