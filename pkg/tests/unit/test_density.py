"""Tests for the Gaussian kernel density model and LSCV bandwidth selection."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hybrid_levelset.density import Bandwidth
from hybrid_levelset.density import KdeModel
from hybrid_levelset.density import ThresholdPair
from hybrid_levelset.density import fit_kde
from hybrid_levelset.density import fit_lscv
from hybrid_levelset.density import kde_eval
from hybrid_levelset.density import lscv_log_floor
from hybrid_levelset.density import lscv_objective
from hybrid_levelset.density import lscv_restarts
from hybrid_levelset.density import normal_reference_bandwidth
from hybrid_levelset.density import quantile_threshold
from hybrid_levelset.density import sample_kde
from hybrid_levelset.errors import BandwidthSelectionError
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.geometry import PointCloud


def test_bandwidth_validation():
    """Test that bandwidths must be positive and finite."""
    with pytest.raises(ValueError):
        Bandwidth(0.0, 1.0)
    with pytest.raises(ValueError):
        Bandwidth(1.0, math.inf)
    assert Bandwidth(0.5, 2.0).determinant == pytest.approx(1.0)


def test_threshold_pair_ordering():
    """Test that f_plus >= f_minus >= 0 is enforced."""
    ThresholdPair(0.3, 0.3)
    with pytest.raises(ValueError):
        ThresholdPair(0.1, 0.2)
    with pytest.raises(ValueError):
        ThresholdPair(0.1, -0.1)


def test_single_point_density_is_gaussian():
    """Test the model on one point against the bivariate normal formula."""
    model = KdeModel(PointCloud([[0.0, 0.0]]), Bandwidth(1.0, 2.0))

    value = kde_eval(model, (1.0, 2.0))

    expected = math.exp(-0.5 * (1.0 + 1.0)) / (2.0 * math.pi * 2.0)
    assert value == pytest.approx(expected)


def test_density_integrates_to_one(gaussian_model):
    """Test that the estimate integrates to about one on a wide grid."""
    axis = np.linspace(-6.0, 6.0, 241)
    gx, gy = np.meshgrid(axis, axis)
    values = gaussian_model.evaluate(np.column_stack([gx.ravel(), gy.ravel()]))

    cell = (axis[1] - axis[0]) ** 2
    assert values.sum() * cell == pytest.approx(1.0, abs=0.01)


def test_evaluate_blocks_and_threads_agree(gaussian_model, rng):
    """Test that threaded evaluation gives the same values."""
    queries = rng.uniform(-3.0, 3.0, size=(5000, 2))

    assert np.allclose(gaussian_model.evaluate(queries, workers=1), gaussian_model.evaluate(queries, workers=3))


def test_sample_values_are_cached(gaussian_model):
    """Test that the sample-point densities are computed once."""
    first = gaussian_model.sample_values

    assert gaussian_model.sample_values is first
    assert first.shape == (len(gaussian_model.sample),)


def test_empty_model_raises():
    """Test that a model needs data."""
    with pytest.raises(EmptyInputError):
        KdeModel(PointCloud.empty(), Bandwidth(1.0, 1.0))


def test_kde_eval_rejects_non_finite(gaussian_model):
    """Test that evaluation points must be finite."""
    with pytest.raises(ValueError):
        kde_eval(gaussian_model, (math.nan, 0.0))


def test_sample_kde_moments(gaussian_model):
    """Test that the smoothed bootstrap inflates the variance by h^2."""
    draw = sample_kde(gaussian_model, 20000, np.random.default_rng(3))
    data_var = gaussian_model.sample.points.var(axis=0)

    assert len(draw) == 20000
    assert draw.points.var(axis=0) == pytest.approx(data_var + 0.16, rel=0.05)


def test_lscv_objective_matches_direct_sum():
    """Test the closed form against an explicit double loop."""
    points = np.array([[0.0, 0.0], [1.0, 0.5], [-0.5, 1.5], [0.3, -0.7]])
    bandwidth = Bandwidth(0.6, 0.9)
    n = len(points)

    def phi(diff, scale):
        h1, h2 = bandwidth.h1 * scale, bandwidth.h2 * scale
        return math.exp(-0.5 * ((diff[0] / h1) ** 2 + (diff[1] / h2) ** 2)) / (2.0 * math.pi * h1 * h2)

    first = sum(phi(points[i] - points[j], math.sqrt(2.0)) for i in range(n) for j in range(n)) / n**2
    second = sum(phi(points[i] - points[j], 1.0) for i in range(n) for j in range(n) if i != j)
    expected = first - 2.0 * second / (n * (n - 1))

    assert lscv_objective(PointCloud(points), bandwidth) == pytest.approx(expected, rel=1e-12)


def test_lscv_objective_needs_two_points():
    """Test the minimum sample size of the objective."""
    with pytest.raises(BandwidthSelectionError):
        lscv_objective(PointCloud([[0.0, 0.0]]), Bandwidth(1.0, 1.0))


def test_normal_reference_bandwidth(gaussian_cloud):
    """Test the n^(-1/6) reference rule."""
    bandwidth = normal_reference_bandwidth(gaussian_cloud)

    sigma = gaussian_cloud.points.std(axis=0, ddof=1)
    assert bandwidth.h1 == pytest.approx(sigma[0] * 200 ** (-1 / 6))
    assert bandwidth.h2 == pytest.approx(sigma[1] * 200 ** (-1 / 6))


def test_fit_lscv_picks_best_restart(gaussian_cloud):
    """Test that the selected bandwidth has the lowest score of the restarts."""
    restarts = lscv_restarts(gaussian_cloud)

    bandwidth = fit_lscv(gaussian_cloud)

    assert len(restarts) == 3
    best = min(restarts, key=lambda restart: restart.score)
    assert bandwidth == best.bandwidth
    assert 0.05 < bandwidth.h1 < 2.0
    assert 0.05 < bandwidth.h2 < 2.0


def test_fit_lscv_threads_match_serial(gaussian_cloud):
    """Test that threaded restarts select the same bandwidth."""
    assert fit_lscv(gaussian_cloud, workers=3) == fit_lscv(gaussian_cloud, workers=1)


def test_fit_lscv_rejects_tiny_or_flat_samples():
    """Test the LSCV preconditions."""
    with pytest.raises(BandwidthSelectionError, match="at least"):
        fit_lscv(PointCloud([[0.0, 0.0], [1.0, 1.0]]))
    flat = PointCloud([[float(i), 2.0] for i in range(10)])
    with pytest.raises(BandwidthSelectionError, match="single distinct value"):
        fit_lscv(flat)


def test_fit_kde_uses_given_bandwidth(gaussian_cloud):
    """Test that a given bandwidth skips the search."""
    model = fit_kde(gaussian_cloud, Bandwidth(0.3, 0.3))

    assert model.bandwidth == Bandwidth(0.3, 0.3)
    assert model.to_dict()["bandwidth"] == {"h1": 0.3, "h2": 0.3}


def test_quantile_threshold_is_type_one():
    """Test the ceil(tau n)-th order statistic."""
    values = [5.0, 1.0, 4.0, 2.0, 3.0]

    assert quantile_threshold(values, 0.2) == 1.0
    assert quantile_threshold(values, 0.21) == 2.0
    assert quantile_threshold(values, 0.9) == 5.0
    assert quantile_threshold(list(range(10)), 0.3) == 2.0


def test_quantile_threshold_errors():
    """Test the argument checks of the quantile."""
    with pytest.raises(ValueError):
        quantile_threshold([1.0], 0.0)
    with pytest.raises(ValueError):
        quantile_threshold([1.0], 1.0)
    with pytest.raises(EmptyInputError):
        quantile_threshold([], 0.5)


def test_fit_lscv_with_duplicate_points():
    """Test that exact duplicates give a finite bandwidth above the search floor."""
    generator = np.random.default_rng(11)
    points = generator.standard_normal((100, 2))
    cloud = PointCloud(np.vstack([points, points[:30]]))

    bandwidth = fit_lscv(cloud)

    floor = np.exp(lscv_log_floor(cloud))
    assert cloud.duplicate_count == 30
    assert np.all(np.isfinite(bandwidth.as_array()))
    assert bandwidth.h1 >= floor[0] * (1 - 1e-9)
    assert bandwidth.h2 >= floor[1] * (1 - 1e-9)
    assert np.all(fit_kde(cloud, bandwidth).sample_values > 0)


def test_lscv_log_floor_uses_smallest_spacing():
    """Test the floor of the log-bandwidth search."""
    cloud = PointCloud([[0.0, 0.0], [0.5, 2.0], [0.5, 2.0], [2.0, 6.0], [3.0, 10.0]])

    assert np.exp(lscv_log_floor(cloud)) == pytest.approx([0.05, 0.2])


def test_lscv_objective_underflowing_bandwidth_is_infinite():
    """Test that a bandwidth whose area underflows scores +inf instead of dividing by zero."""
    cloud = PointCloud([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])

    assert lscv_objective(cloud, Bandwidth(1e-200, 1e-200)) == math.inf


def test_kde_eval_matches_literal_sum():
    """Test kde_eval against the kernel sum written out term by term on random points and bandwidths."""
    generator = np.random.default_rng(31)
    data = generator.normal(size=(40, 2))

    for _ in range(100):
        h1, h2 = generator.uniform(0.2, 2.0, size=2)
        x = generator.uniform(-2.0, 2.0, size=2)
        model = KdeModel(PointCloud(data), Bandwidth(h1, h2))

        literal = 0.0
        for xi in data:
            u = ((x[0] - xi[0]) / h1, (x[1] - xi[1]) / h2)
            literal += math.exp(-0.5 * (u[0] ** 2 + u[1] ** 2)) / (2.0 * math.pi) / (h1 * h2)
        literal /= len(data)

        assert kde_eval(model, x) == pytest.approx(literal, rel=1e-12)


def test_lscv_objective_matches_quadrature():
    """Test the closed form against integral(f_n^2) on a grid minus the leave-one-out term."""
    rng = np.random.default_rng(41)
    axis = np.linspace(-9.0, 9.0, 721)
    gx, gy = np.meshgrid(axis, axis)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    cell = (axis[1] - axis[0]) ** 2

    for _ in range(10):
        points = rng.uniform(-1.5, 1.5, size=(20, 2))
        bandwidth = Bandwidth(*rng.uniform(0.5, 0.9, size=2))
        n = len(points)
        integral = float((KdeModel(PointCloud(points), bandwidth).evaluate(grid) ** 2).sum()) * cell
        leave_one_out = sum(
            kde_eval(KdeModel(PointCloud(np.delete(points, i, axis=0)), bandwidth), points[i]) for i in range(n)
        )
        expected = integral - 2.0 * leave_one_out / n

        assert lscv_objective(PointCloud(points), bandwidth) == pytest.approx(expected, abs=1e-6)
