"""Tests for the sample splitter and kNN assignment of the unassigned remainder."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hybrid_levelset.density import Bandwidth
from hybrid_levelset.density import KdeModel
from hybrid_levelset.density import ThresholdPair
from hybrid_levelset.density import normal_reference_bandwidth
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.errors import EmptyLevelSetError
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.splitter import FLAG_EMPTY_MINUS
from hybrid_levelset.splitter import FLAG_K_CLAMPED
from hybrid_levelset.splitter import FLAG_MINUS_VACUOUS
from hybrid_levelset.splitter import MODE_CALIBRATED
from hybrid_levelset.splitter import MODE_MARGIN
from hybrid_levelset.splitter import MarginSchedule
from hybrid_levelset.splitter import SplitSample
from hybrid_levelset.splitter import assign_unassigned
from hybrid_levelset.splitter import calibrate_margin_constant
from hybrid_levelset.splitter import dn
from hybrid_levelset.splitter import knn_classify
from hybrid_levelset.splitter import knn_labels
from hybrid_levelset.splitter import split_calibrated
from hybrid_levelset.splitter import split_margin


def _manual_split(points, plus, minus) -> SplitSample:
    cloud = PointCloud(points)
    everything = set(range(len(cloud)))
    unassigned = sorted(everything - set(plus) - set(minus))
    return SplitSample(
        sample=cloud,
        plus_index=np.array(plus, dtype=int),
        minus_index=np.array(minus, dtype=int),
        unassigned_index=np.array(unassigned, dtype=int),
        t_plus=1.0,
        t_minus=0.5,
        mode=MODE_CALIBRATED,
    )


def test_margin_schedule():
    """Test D_n = M (log n / n)^(p / (d + 2p)) with the default p = 2, d = 2."""
    schedule = MarginSchedule(2.0)

    assert schedule.exponent == pytest.approx(1.0 / 3.0)
    assert dn(schedule, 100) == pytest.approx(2.0 * (math.log(100) / 100) ** (1.0 / 3.0))
    assert dn(schedule, 1000) < dn(schedule, 100)


def test_margin_schedule_validation():
    """Test the schedule argument checks."""
    with pytest.raises(ValueError):
        MarginSchedule(0.0)
    with pytest.raises(ValueError):
        dn(MarginSchedule(1.0), 1)


def test_split_margin_partitions_sample(gaussian_model):
    """Test that the margin split is a partition with the documented thresholds."""
    values = gaussian_model.sample_values
    t = float(np.median(values))
    margin = 0.1 * t

    split = split_margin(gaussian_model, gaussian_model.sample, t, margin)

    assert split.mode == MODE_MARGIN
    together = np.concatenate([split.plus_index, split.minus_index, split.unassigned_index])
    assert sorted(together.tolist()) == list(range(len(values)))
    assert np.all(values[split.plus_index] >= t + margin)
    assert np.all(values[split.minus_index] < t - margin)
    assert len(split.unassigned_index) > 0


def test_split_margin_zero_margin_leaves_nothing_unassigned(gaussian_model):
    """Test that D_n = 0 classifies every point."""
    t = float(np.median(gaussian_model.sample_values))

    split = split_margin(gaussian_model, gaussian_model.sample, t, 0.0)

    assert len(split.unassigned_index) == 0


def test_split_margin_flags_vacuous_minus(gaussian_model):
    """Test that a margin larger than t empties the minus side."""
    t = float(np.median(gaussian_model.sample_values))

    split = split_margin(gaussian_model, gaussian_model.sample, t, 2.0 * t)

    assert FLAG_MINUS_VACUOUS in split.flags
    assert FLAG_EMPTY_MINUS in split.flags
    assert len(split.minus_index) == 0


def test_split_margin_validation(gaussian_model):
    """Test the threshold and margin checks."""
    with pytest.raises(ValueError):
        split_margin(gaussian_model, gaussian_model.sample, 0.0, 0.1)
    with pytest.raises(ValueError):
        split_margin(gaussian_model, gaussian_model.sample, 0.1, -0.1)
    with pytest.raises(EmptyInputError):
        split_margin(gaussian_model, PointCloud.empty(), 0.1, 0.0)


def test_split_calibrated(gaussian_model):
    """Test the calibrated thresholds."""
    values = np.sort(gaussian_model.sample_values)
    thresholds = ThresholdPair(float(values[150]), float(values[50]))

    split = split_calibrated(gaussian_model, gaussian_model.sample, thresholds)

    assert split.mode == MODE_CALIBRATED
    assert len(split.plus_index) == 50
    assert len(split.minus_index) == 50
    assert len(split.unassigned_index) == 100
    assert split.summary()["unassigned"] == 100


def test_split_on_other_points(gaussian_model):
    """Test splitting a cloud that is not the model's own sample."""
    far = PointCloud([[0.0, 0.0], [10.0, 10.0]])
    t = float(gaussian_model.evaluate([[0.0, 0.0]])[0])

    split = split_margin(gaussian_model, far, 0.5 * t, 0.0)

    assert split.plus_index.tolist() == [0]
    assert split.minus_index.tolist() == [1]


def test_labels():
    """Test the per-point labels."""
    split = _manual_split([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], plus=[0], minus=[2])

    assert split.labels().tolist() == [1, 0, -1]


def test_knn_majority_vote():
    """Test a plain majority vote."""
    plus = PointCloud([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
    minus = PointCloud([[5.0, 5.0], [5.1, 5.0], [5.0, 5.1]])
    queries = PointCloud([[0.2, 0.2], [4.9, 4.9]])

    assert knn_labels(plus, minus, 3, queries).tolist() == [True, False]
    assigned_plus, assigned_minus = knn_classify(plus, minus, 3, queries)
    assert assigned_plus.to_list() == [[0.2, 0.2]]
    assert assigned_minus.to_list() == [[4.9, 4.9]]


def test_knn_distance_ties_prefer_plus():
    """Test that equidistant neighbours are ranked plus first."""
    plus = PointCloud([[-1.0, 0.0]])
    minus = PointCloud([[1.0, 0.0]])

    assert knn_labels(plus, minus, 1, PointCloud([[0.0, 0.0]])).tolist() == [True]


def test_knn_tie_breaks_within_class_by_index():
    """Test that a tie on distance and class does not change the vote."""
    plus = PointCloud([[0.0, 1.0], [0.0, -1.0]])
    minus = PointCloud([[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0]])

    # all four nearest are at distance 1; plus ranks first so k = 3 sees two plus and one minus
    assert knn_labels(plus, minus, 3, PointCloud([[0.0, 0.0]])).tolist() == [True]


def test_knn_argument_checks():
    """Test the kNN preconditions."""
    plus = PointCloud([[0.0, 0.0]])
    minus = PointCloud([[1.0, 0.0]])
    queries = PointCloud([[0.5, 0.5]])
    with pytest.raises(ValueError, match="odd"):
        knn_labels(plus, minus, 2, queries)
    with pytest.raises(ValueError, match="exceeds"):
        knn_labels(plus, minus, 3, queries)
    with pytest.raises(ValueError, match="both"):
        knn_labels(plus, PointCloud.empty(), 1, queries)


def test_assign_unassigned_merges_remainder():
    """Test that every unassigned point joins plus or minus."""
    points = [[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0], [0.05, 0.1], [4.9, 0.1]]
    split = _manual_split(points, plus=[0, 1], minus=[2, 3])

    merged = assign_unassigned(split, 1)

    assert merged.plus_index.tolist() == [0, 1, 4]
    assert merged.minus_index.tolist() == [2, 3, 5]
    assert len(merged.unassigned_index) == 0
    assert merged.k == 1


def test_assign_unassigned_clamps_k():
    """Test that k above the labelled count is clamped to the largest odd value."""
    points = [[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0], [0.05, 0.1]]
    split = _manual_split(points, plus=[0, 1], minus=[2, 3])

    merged = assign_unassigned(split, 5)

    assert merged.k == 3
    assert FLAG_K_CLAMPED in merged.flags
    assert 4 in merged.plus_index.tolist()


def test_assign_unassigned_without_minus_goes_to_plus():
    """Test that an empty minus side sends the remainder to plus."""
    split = _manual_split([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], plus=[0], minus=[])

    merged = assign_unassigned(split, 3)

    assert merged.plus_index.tolist() == [0, 1, 2]
    assert len(merged.minus_index) == 0


def test_assign_unassigned_without_plus_raises():
    """Test that an empty plus side is an empty level set."""
    split = _manual_split([[0.0, 0.0], [1.0, 0.0]], plus=[], minus=[0])

    with pytest.raises(EmptyLevelSetError):
        assign_unassigned(split, 1)


def test_assign_unassigned_nothing_to_do():
    """Test that a split without unassigned points is returned with k recorded."""
    split = _manual_split([[0.0, 0.0], [1.0, 0.0]], plus=[0], minus=[1])

    merged = assign_unassigned(split, 3)

    assert merged.plus_index.tolist() == [0]
    assert merged.k == 3


def test_calibrate_margin_constant_is_reproducible(gaussian_model):
    """Test that the margin constant depends only on the generator state."""
    first = calibrate_margin_constant(gaussian_model, np.random.default_rng(1), refits=10)
    second = calibrate_margin_constant(gaussian_model, np.random.default_rng(1), refits=10)

    assert first == second
    assert first > 0


def test_calibrate_margin_constant_scales_with_density():
    """Test that a wider bandwidth gives a smaller fluctuation and constant."""
    cloud = PointCloud(np.random.default_rng(2).standard_normal((150, 2)))
    narrow = calibrate_margin_constant(KdeModel(cloud, Bandwidth(0.2, 0.2)), np.random.default_rng(5), refits=15)
    wide = calibrate_margin_constant(KdeModel(cloud, Bandwidth(0.8, 0.8)), np.random.default_rng(5), refits=15)

    assert wide < narrow


def _brute_force_knn(plus: np.ndarray, minus: np.ndarray, k: int, query: np.ndarray) -> bool:
    ranked = []
    for rank, points in ((0, plus), (1, minus)):
        for position, point in enumerate(points):
            squared = int(((point - query) ** 2).sum())
            ranked.append((squared, rank, position))
    ranked.sort()
    return sum(1 for _, rank, _ in ranked[:k] if rank == 0) * 2 > k


def test_knn_matches_brute_force_with_ties():
    """Test knn_labels against an exhaustive vote on integer lattices where distances tie often."""
    generator = np.random.default_rng(52)
    for _ in range(25):
        plus = generator.integers(0, 6, size=(generator.integers(1, 12), 2))
        minus = generator.integers(0, 6, size=(generator.integers(1, 12), 2))
        queries = generator.integers(0, 6, size=(40, 2))
        total = len(plus) + len(minus)

        for k in (1, 3, 5, 7):
            if k > total:
                continue
            labels = knn_labels(PointCloud(plus), PointCloud(minus), k, PointCloud(queries))

            assert labels.tolist() == [_brute_force_knn(plus, minus, k, query) for query in queries]


def _standard_normal_density(points: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * (points**2).sum(axis=1)) / (2.0 * math.pi)


def test_margin_split_sides_hold_against_true_density():
    """Test that plus points lie in {f >= t} and minus points in {f < t} in nearly every replicate."""
    t = math.exp(-0.5) / (2.0 * math.pi)
    margin = dn(MarginSchedule(0.25), 1000)
    contained = 0
    for replicate in range(20):
        sample = PointCloud(np.random.default_rng(600 + replicate).standard_normal((1000, 2)))
        model = KdeModel(sample, normal_reference_bandwidth(sample))

        split = split_margin(model, sample, t, margin)

        plus_ok = np.all(_standard_normal_density(split.plus.points) >= t)
        minus_ok = np.all(_standard_normal_density(split.minus.points) < t)
        contained += bool(plus_ok and minus_ok)

    assert contained >= 19
