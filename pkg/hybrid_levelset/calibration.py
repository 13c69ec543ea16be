"""Bootstrap calibration of the split thresholds and the kNN neighbourhood size.

Each replicate draws a smoothed-bootstrap sample from f_n, refits its own LSCV
bandwidth, and scores every (tau_plus, tau_minus, k) cell of the grid by the
Monte-Carlo error of the resulting estimate against L*(tau) = {f_n >= f*_tau}.
The cell with the lowest mean error over replicates is selected.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from hybrid_levelset.constants import DEFAULT_B
from hybrid_levelset.constants import DEFAULT_DELTA_CAP
from hybrid_levelset.constants import DEFAULT_I
from hybrid_levelset.constants import DEFAULT_J
from hybrid_levelset.constants import DEFAULT_K_GRID
from hybrid_levelset.constants import DEFAULT_M_MC
from hybrid_levelset.constants import DEFAULT_TAU
from hybrid_levelset.constants import DEGENERATE_CELL_ERROR
from hybrid_levelset.constants import DEGENERATE_WARNING_FRACTION
from hybrid_levelset.constants import ERROR_METRIC_LEBESGUE
from hybrid_levelset.constants import ERROR_METRIC_PROBABILITY
from hybrid_levelset.constants import LEBESGUE_RESOLUTION
from hybrid_levelset.constants import MIN_CALIBRATION_SAMPLE
from hybrid_levelset.density import Bandwidth
from hybrid_levelset.density import KdeModel
from hybrid_levelset.density import ThresholdPair
from hybrid_levelset.density import fit_kde
from hybrid_levelset.density import fit_lscv
from hybrid_levelset.density import quantile_threshold
from hybrid_levelset.density import sample_kde
from hybrid_levelset.errors import CalibrationError
from hybrid_levelset.errors import LevelSetError
from hybrid_levelset.estimator import estimate_level_set
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.geometry import RConvexRegion
from hybrid_levelset.raster import BBox
from hybrid_levelset.raster import default_bbox
from hybrid_levelset.raster import mask_from_predicate
from hybrid_levelset.raster import measure_distance
from hybrid_levelset.raster import rasterize
from hybrid_levelset.splitter import assign_unassigned
from hybrid_levelset.splitter import split_calibrated

STEP_ONE_STREAM = 0
REPLICATE_STREAM = 1


class PointRegion(Protocol):
    def contains_points(self, queries: np.ndarray) -> np.ndarray: ...


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator derived from (seed, key) only."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class CalibrationConfig:
    tau: float = DEFAULT_TAU
    I: int = DEFAULT_I
    delta: float = DEFAULT_DELTA_CAP
    B: int = DEFAULT_B
    M_mc: int = DEFAULT_M_MC
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    J: int = DEFAULT_J
    seed: int = 0
    error_metric: str = ERROR_METRIC_PROBABILITY

    def __post_init__(self) -> None:
        if not (0 < self.tau < 1):
            raise CalibrationError(f"tau must lie in (0, 1), got {self.tau}")
        if self.I < 0:
            raise CalibrationError(f"I must be non-negative, got {self.I}")
        if not self.delta > 0:
            raise CalibrationError(f"delta must be positive, got {self.delta}")
        if self.B < 1 or self.M_mc < 1 or self.J < 1:
            raise CalibrationError("B, M_mc and J must be positive integers")
        if not self.k_grid or any(k < 1 or k % 2 == 0 for k in self.k_grid):
            raise CalibrationError(f"k values must be odd positive integers, got {list(self.k_grid)}")
        if self.error_metric not in (ERROR_METRIC_PROBABILITY, ERROR_METRIC_LEBESGUE):
            raise CalibrationError(f"unknown error metric {self.error_metric!r}")
        object.__setattr__(self, "k_grid", tuple(int(k) for k in self.k_grid))

    @classmethod
    def for_sample(
        cls,
        n: int,
        tau: float = DEFAULT_TAU,
        I: int = DEFAULT_I,
        delta: float | None = None,
        M_mc: int | None = None,
        **kwargs,
    ) -> CalibrationConfig:
        """Fill in the sample-size dependent defaults and validate the grid bounds.

        delta = min{(1 - tau - 3/n)/I, (tau - 3/n)/I, 0.01} and M_mc = max(3000, 3n).
        """
        if delta is None:
            candidates = [DEFAULT_DELTA_CAP]
            if I > 0:
                candidates += [(1 - tau - 3 / n) / I, (tau - 3 / n) / I]
            delta = min(candidates)
            if delta <= 0:
                raise CalibrationError(f"tau={tau} is too close to 0 or 1 for a grid on n={n} points")
        if M_mc is None:
            M_mc = max(DEFAULT_M_MC, 3 * n)
        cfg = cls(tau=tau, I=I, delta=delta, M_mc=M_mc, **kwargs)
        cfg.validate(n)
        return cfg

    def validate(self, n: int) -> None:
        """The grid must stay within [1/n, (n-1)/n] so no split level is empty."""
        top = self.tau + self.I * self.delta
        bottom = self.tau - self.I * self.delta
        if top > (n - 1) / n + 1e-12 or bottom < 1 / n - 1e-12:
            raise CalibrationError(
                f"grid [{bottom:.4g}, {top:.4g}] leaves [1/n, (n-1)/n] for n={n}; reduce I or delta"
            )

    @property
    def tau_plus_grid(self) -> np.ndarray:
        return self.tau + self.delta * np.arange(self.I + 1)

    @property
    def tau_minus_grid(self) -> np.ndarray:
        return self.tau - self.delta * np.arange(self.I + 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.I + 1, self.I + 1, len(self.k_grid)

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["k_grid"] = list(self.k_grid)
        return data


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    errors: np.ndarray
    degenerate: np.ndarray


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    tau_plus_hat: float
    tau_minus_hat: float
    k_hat: int
    cell: tuple[int, int, int]
    error_table: np.ndarray
    replicate_counts: np.ndarray
    degenerate_counts: np.ndarray
    thresholds: ThresholdPair
    f_star: float
    bandwidth: Bandwidth
    config: CalibrationConfig

    def to_dict(self) -> dict[str, object]:
        return {
            "tau_plus_hat": self.tau_plus_hat,
            "tau_minus_hat": self.tau_minus_hat,
            "k_hat": self.k_hat,
            "cell": list(self.cell),
            "thresholds": self.thresholds.to_dict(),
            "f_star": self.f_star,
            "bandwidth": self.bandwidth.to_dict(),
            "config": self.config.to_dict(),
            "error_table": self.error_table.tolist(),
            "replicate_counts": self.replicate_counts.tolist(),
            "degenerate_counts": self.degenerate_counts.tolist(),
        }


def mc_threshold(model: KdeModel, tau: float, M_mc: int, rng: np.random.Generator) -> float:
    """Monte-Carlo f*_tau: the tau-quantile of f_n over a draw of size M_mc from f_n."""
    draw = sample_kde(model, M_mc, rng)
    return quantile_threshold(model.evaluate(draw.points), tau)


def _counting_error(estimate: PointRegion, draw: np.ndarray, in_truth: np.ndarray) -> float:
    inside = np.asarray(estimate.contains_points(draw), dtype=bool)
    return float(np.count_nonzero(inside != in_truth)) / draw.shape[0]


def mc_measure_error(model: KdeModel, f_star: float, estimate: PointRegion, M_mc: int, rng: np.random.Generator) -> float:
    """Fraction of a fresh f_n draw that the estimate misclassifies against {f_n >= f_star}."""
    draw = sample_kde(model, M_mc, rng).points
    return _counting_error(estimate, draw, model.evaluate(draw) >= f_star)


def grid_measure_error(
    model: KdeModel, f_star: float, region: RConvexRegion, bbox: BBox, resolution: int = LEBESGUE_RESOLUTION
) -> float:
    """Lebesgue area of the symmetric difference between the estimate and {f_n >= f_star}."""
    truth = mask_from_predicate(lambda points: model.evaluate(points) >= f_star, bbox, resolution)
    return measure_distance(truth, rasterize(region, bbox, resolution))


def degenerate_cell_error(cfg: CalibrationConfig, bbox: BBox) -> float:
    """Upper bound of the cell error: 1 for the probability metric, the box area for the area metric."""
    if cfg.error_metric == ERROR_METRIC_LEBESGUE:
        xmin, ymin, xmax, ymax = bbox
        return DEGENERATE_CELL_ERROR * (xmax - xmin) * (ymax - ymin)
    return DEGENERATE_CELL_ERROR


def bootstrap_replicate(model: KdeModel, cfg: CalibrationConfig, f_star: float, replicate_index: int) -> ReplicateResult:
    """Score every grid cell on one bootstrap world.

    A single evaluation draw is shared by all cells of the replicate. Cells whose
    estimate cannot be built are flagged and score the worst error of the metric:
    the whole draw for the probability metric, the whole box for the area metric.
    """
    rng = rng_stream(cfg.seed, REPLICATE_STREAM, replicate_index)
    bbox = default_bbox(model.sample.points, bandwidth=model.bandwidth)
    worst = degenerate_cell_error(cfg, bbox)
    errors = np.full(cfg.shape, worst)
    degenerate = np.ones(cfg.shape, dtype=bool)

    boot_sample = sample_kde(model, model.n, rng)
    try:
        boot_model = KdeModel(boot_sample, fit_lscv(boot_sample))
    except LevelSetError as e:
        logging.warning(f"Replicate {replicate_index}: bandwidth refit failed ({e}); all cells score {worst:.6g}")
        return ReplicateResult(errors, degenerate)

    if cfg.error_metric == ERROR_METRIC_LEBESGUE:
        def score(region: RConvexRegion) -> float:
            return grid_measure_error(model, f_star, region, bbox)

    else:
        draw = sample_kde(model, cfg.M_mc, rng).points
        in_truth = model.evaluate(draw) >= f_star

        def score(region: RConvexRegion) -> float:
            return _counting_error(region, draw, in_truth)

    values = boot_model.sample_values
    f_plus = [quantile_threshold(values, tau) for tau in cfg.tau_plus_grid]
    f_minus = [quantile_threshold(values, tau) for tau in cfg.tau_minus_grid]

    for j1 in range(cfg.I + 1):
        for j2 in range(cfg.I + 1):
            split = split_calibrated(boot_model, boot_sample, ThresholdPair(f_plus[j1], f_minus[j2]))
            previous: float | None = None
            for j3, k in enumerate(cfg.k_grid):
                if previous is not None and len(split.unassigned_index) == 0:
                    errors[j1, j2, j3] = previous
                    degenerate[j1, j2, j3] = False
                    continue
                try:
                    estimate = estimate_level_set(assign_unassigned(split, k), nu=1.0, J=cfg.J)
                except (LevelSetError, ValueError) as e:
                    logging.debug(f"Replicate {replicate_index} cell ({j1}, {j2}, {k}) is degenerate: {e}")
                    continue
                errors[j1, j2, j3] = score(estimate.region)
                degenerate[j1, j2, j3] = False
                previous = errors[j1, j2, j3]
    logging.debug(f"Replicate {replicate_index} done: {int(degenerate.sum())} degenerate cells")
    return ReplicateResult(errors, degenerate)


def select_cell(error_table: np.ndarray, cfg: CalibrationConfig) -> tuple[int, int, int]:
    """Argmin of the mean error; ties go to the smallest j1 + j2, then the smallest k."""
    best: tuple[float, int, int, int, int, int] | None = None
    for (j1, j2, j3), value in np.ndenumerate(error_table):
        key = (float(value), j1 + j2, cfg.k_grid[j3], j1, j2, j3)
        if best is None or key < best:
            best = key
    assert best is not None
    return best[3], best[4], best[5]


def calibrate(
    sample: PointCloud,
    cfg: CalibrationConfig,
    workers: int = 1,
    bandwidth: Bandwidth | None = None,
) -> CalibrationResult:
    """Select (tau_plus, tau_minus, k) by bootstrap and map them to thresholds on the sample.

    Raises:
        CalibrationError: If the sample is too small, the grid leaves [1/n, (n-1)/n],
            or every cell is degenerate in every replicate.
    """
    n = len(sample)
    if n < MIN_CALIBRATION_SAMPLE:
        raise CalibrationError(f"calibration needs at least {MIN_CALIBRATION_SAMPLE} points, got {n}")
    cfg.validate(n)
    model = fit_kde(sample, bandwidth, workers)

    f_star = mc_threshold(model, cfg.tau, cfg.M_mc, rng_stream(cfg.seed, STEP_ONE_STREAM))
    logging.info(f"🎯 Bootstrap-world threshold f*_tau={f_star:.6g} at tau={cfg.tau}")
    logging.info(f"🔄 Running {cfg.B} bootstrap replicates over {math.prod(cfg.shape)} grid cells...")

    def run(index: int) -> ReplicateResult:
        return bootstrap_replicate(model, cfg, f_star, index)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            replicates = list(executor.map(run, range(cfg.B)))
    else:
        replicates = [run(index) for index in range(cfg.B)]

    totals = np.zeros(cfg.shape)
    degenerate_counts = np.zeros(cfg.shape, dtype=int)
    for replicate in replicates:
        totals += replicate.errors
        degenerate_counts += replicate.degenerate
    if np.all(degenerate_counts == cfg.B):
        raise CalibrationError("every grid cell was degenerate in every replicate; try a smaller tau or a larger sample")
    degenerate_fraction = degenerate_counts.sum() / (cfg.B * math.prod(cfg.shape))
    if degenerate_fraction > DEGENERATE_WARNING_FRACTION:
        logging.warning(f"{degenerate_fraction:.0%} of replicate cells were degenerate")

    error_table = totals / cfg.B
    j1, j2, j3 = select_cell(error_table, cfg)
    tau_plus_hat = float(cfg.tau_plus_grid[j1])
    tau_minus_hat = float(cfg.tau_minus_grid[j2])
    thresholds = ThresholdPair(
        quantile_threshold(model.sample_values, tau_plus_hat),
        quantile_threshold(model.sample_values, tau_minus_hat),
    )
    logging.info(
        f"✅ Selected tau+={tau_plus_hat:.4g}, tau-={tau_minus_hat:.4g}, k={cfg.k_grid[j3]} "
        f"(mean error {error_table[j1, j2, j3]:.4g})"
    )
    return CalibrationResult(
        tau_plus_hat=tau_plus_hat,
        tau_minus_hat=tau_minus_hat,
        k_hat=cfg.k_grid[j3],
        cell=(j1, j2, j3),
        error_table=error_table,
        replicate_counts=cfg.B - degenerate_counts,
        degenerate_counts=degenerate_counts,
        thresholds=thresholds,
        f_star=f_star,
        bandwidth=model.bandwidth,
        config=cfg,
    )
