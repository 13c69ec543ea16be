"""Tests for raster masks, morphology and raster distances."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hybrid_levelset.density import Bandwidth
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.geometry import INFINITY
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.geometry import RConvexRegion
from hybrid_levelset.raster import MODE_DILATE
from hybrid_levelset.raster import MODE_ERODE
from hybrid_levelset.raster import RasterMask
from hybrid_levelset.raster import closing
from hybrid_levelset.raster import component_count
from hybrid_levelset.raster import default_bbox
from hybrid_levelset.raster import hausdorff
from hybrid_levelset.raster import mask_area
from hybrid_levelset.raster import mask_from_predicate
from hybrid_levelset.raster import measure_distance
from hybrid_levelset.raster import minkowski
from hybrid_levelset.raster import rasterize

BOX = (0.0, 0.0, 1.0, 1.0)


def _disc(center, radius, resolution=128, bbox=BOX) -> RasterMask:
    return mask_from_predicate(lambda p: np.hypot(p[:, 0] - center[0], p[:, 1] - center[1]) <= radius, bbox, resolution)


def _cells(cells, resolution=32) -> RasterMask:
    bits = np.zeros((resolution, resolution), dtype=bool)
    for i, j in cells:
        bits[i, j] = True
    return RasterMask(BOX, resolution, bits)


def test_raster_mask_validation():
    """Test bounding box and shape validation."""
    with pytest.raises(ValueError, match="bounding box"):
        RasterMask((0.0, 0.0, 0.0, 1.0), 4, np.zeros((4, 4)))
    with pytest.raises(ValueError, match="shape"):
        RasterMask(BOX, 4, np.zeros((4, 5)))


def test_mask_from_predicate_disc_area():
    """Test that a rasterized disc has close to pi r^2 area."""
    mask = _disc((0.5, 0.5), 0.3, resolution=256)

    assert mask.area() == pytest.approx(math.pi * 0.09, rel=0.01)
    assert mask_area(mask) == mask.area()


def test_mask_from_predicate_threads_match_serial():
    """Test that threaded row blocks give the same bits."""
    predicate = lambda p: (p[:, 0] - 0.3) ** 2 + (p[:, 1] - 0.6) ** 2 < 0.05  # noqa: E731

    serial = mask_from_predicate(predicate, BOX, 512, workers=1)
    threaded = mask_from_predicate(predicate, BOX, 512, workers=4)

    assert np.array_equal(serial.bits, threaded.bits)


def test_row_index_follows_y():
    """Test that row i holds cells in the i-th band of y."""
    mask = mask_from_predicate(lambda p: p[:, 1] < 0.25, BOX, 8)

    assert mask.bits[:2].all()
    assert not mask.bits[2:].any()


def test_lookup():
    """Test point lookup, including points outside the box."""
    mask = _cells([(0, 0)], resolution=4)

    values = mask.lookup(np.array([[0.1, 0.1], [0.9, 0.9], [-1.0, 0.1]]))

    assert values.tolist() == [True, False, False]


def test_default_bbox_padding():
    """Test the padding rules of the default bounding box."""
    points = np.array([[0.0, 0.0], [2.0, 1.0]])

    assert default_bbox(points, radius=0.5) == (-0.5, -0.5, 2.5, 1.5)
    assert default_bbox(points, radius=0.1, bandwidth=Bandwidth(0.2, 0.1)) == pytest.approx((-0.6, -0.6, 2.6, 1.6))
    assert default_bbox(points, radius=INFINITY) == pytest.approx((-0.1, -0.1, 2.1, 1.1))
    assert default_bbox(np.array([[1.0, 1.0]])) == (0.0, 0.0, 2.0, 2.0)
    with pytest.raises(EmptyInputError):
        default_bbox(np.empty((0, 2)))


def test_rasterize_region(unit_square_corners):
    """Test that rasterizing the convex hull of the unit square covers about one unit of area."""
    region = RConvexRegion(unit_square_corners, INFINITY)

    mask = rasterize(region, (-0.5, -0.5, 1.5, 1.5), 200)

    assert mask.area() == pytest.approx(1.0, abs=0.03)


def test_rasterize_warns_when_bbox_clips(unit_square_corners, caplog):
    """Test the warning for a box that misses generators."""
    region = RConvexRegion(unit_square_corners, 1.0)

    rasterize(region, (0.2, 0.2, 0.8, 0.8), 16)

    assert "does not cover every generator" in caplog.text


def test_dilate_single_cell():
    """Test that dilating a single cell by three cell widths gives a discrete disc."""
    mask = _cells([(16, 16)])
    dx = mask.cell_size[0]

    dilated = minkowski(mask, 3.0 * dx, MODE_DILATE)

    assert dilated.bits[16, 19] and dilated.bits[19, 16]
    assert not dilated.bits[16, 20]
    assert not dilated.bits[19, 19]
    assert dilated.count == 29


def test_erode_treats_outside_as_empty():
    """Test that a full mask loses its border under erosion."""
    mask = RasterMask(BOX, 32, np.ones((32, 32), dtype=bool))
    dx = mask.cell_size[0]

    eroded = minkowski(mask, 1.5 * dx, MODE_ERODE)

    assert not eroded.bits[0].any()
    assert not eroded.bits[:, 31].any()
    assert eroded.bits[2:30, 2:30].all()


def test_minkowski_zero_radius_and_bad_arguments():
    """Test the identity at zero radius and argument validation."""
    mask = _cells([(3, 4)])

    assert np.array_equal(minkowski(mask, 0.0, MODE_DILATE).bits, mask.bits)
    with pytest.raises(ValueError, match="non-negative"):
        minkowski(mask, -1.0, MODE_DILATE)
    with pytest.raises(ValueError, match="mode"):
        minkowski(mask, 1.0, "open")


def test_closing_fills_narrow_gap():
    """Test that closing bridges a two-cell gap between blocks and keeps the blocks."""
    bits = np.zeros((32, 32), dtype=bool)
    bits[10:20, 5:14] = True
    bits[10:20, 16:25] = True
    mask = RasterMask(BOX, 32, bits)

    closed = closing(mask, 3.0 * mask.cell_size[0])

    assert closed.bits[15, 14] and closed.bits[15, 15]
    assert closed.contains_cells_of(mask)
    assert component_count(closed) == 1


def test_closing_of_convex_block_at_edge_is_unchanged():
    """Test that closing does not lose cells touching the bbox edge."""
    bits = np.zeros((32, 32), dtype=bool)
    bits[0:10, 0:10] = True
    mask = RasterMask(BOX, 32, bits)

    closed = closing(mask, 4.0 * mask.cell_size[0])

    assert np.array_equal(closed.bits, bits)


def test_hausdorff_of_shifted_cells():
    """Test the Hausdorff distance between two single cells."""
    a = _cells([(5, 5)])
    b = _cells([(5, 10)])

    assert hausdorff(a, b) == pytest.approx(5.0 * a.cell_size[0])
    assert hausdorff(a, a) == 0.0


def test_hausdorff_of_empty_mask_raises():
    """Test that the Hausdorff distance needs two non-empty masks."""
    with pytest.raises(EmptyInputError):
        hausdorff(_cells([]), _cells([(1, 1)]))


def test_measure_distance_is_symmetric_difference_area():
    """Test the symmetric difference area."""
    a = _cells([(0, 0), (1, 1), (2, 2)])
    b = _cells([(1, 1), (3, 3)])

    assert measure_distance(a, b) == pytest.approx(3 * a.cell_area)
    assert measure_distance(a, b) == measure_distance(b, a)


def test_incompatible_masks_raise():
    """Test that masks on different grids cannot be compared."""
    with pytest.raises(ValueError, match="share"):
        measure_distance(_cells([], 16), _cells([], 32))


def test_component_count_uses_eight_connectivity():
    """Test that diagonal neighbours are one component."""
    assert component_count(_cells([(1, 1), (2, 2)])) == 1
    assert component_count(_cells([(1, 1), (3, 3)])) == 2
    assert component_count(_cells([])) == 0


def test_two_clusters_rasterize_to_two_components():
    """Test that a hull of two far clusters has two components."""
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    region = RConvexRegion(PointCloud(np.vstack([square, square + [4.0, 0.0]])), 1.0)

    mask = rasterize(region, (-1.0, -2.0, 6.0, 3.0), 128)

    assert component_count(mask) == 2
