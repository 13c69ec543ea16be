"""Gaussian kernel density estimation with a diagonal bandwidth and LSCV selection."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from hybrid_levelset.constants import KDE_CHUNK_SIZE
from hybrid_levelset.constants import LSCV_MAX_ITER
from hybrid_levelset.constants import LSCV_MIN_SPACING_FRACTION
from hybrid_levelset.constants import LSCV_RESTART_FACTORS
from hybrid_levelset.constants import LSCV_SIMPLEX_STEP
from hybrid_levelset.constants import LSCV_XATOL
from hybrid_levelset.constants import MIN_LSCV_SAMPLE
from hybrid_levelset.errors import BandwidthSelectionError
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.geometry import PointCloud

# entries per distance block
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class Bandwidth:
    """Diagonal bandwidth: H = diag(h1^2, h2^2)."""

    h1: float
    h2: float

    def __post_init__(self) -> None:
        for name, value in (("h1", self.h1), ("h2", self.h2)):
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"bandwidth {name} must be positive and finite, got {value}")
        object.__setattr__(self, "h1", float(self.h1))
        object.__setattr__(self, "h2", float(self.h2))

    def as_array(self) -> np.ndarray:
        return np.array([self.h1, self.h2])

    @property
    def determinant(self) -> float:
        """|H| = h1^2 h2^2."""
        return (self.h1 * self.h2) ** 2

    def scaled(self, factor: float) -> Bandwidth:
        return Bandwidth(self.h1 * factor, self.h2 * factor)

    def to_dict(self) -> dict[str, float]:
        return {"h1": self.h1, "h2": self.h2}


@dataclass(frozen=True)
class ThresholdPair:
    f_plus: float
    f_minus: float

    def __post_init__(self) -> None:
        if not (self.f_plus >= self.f_minus >= 0):
            raise ValueError(f"thresholds must satisfy f_plus >= f_minus >= 0, got ({self.f_plus}, {self.f_minus})")

    def to_dict(self) -> dict[str, float]:
        return {"f_plus": self.f_plus, "f_minus": self.f_minus}


def _row_block(n_columns: int) -> int:
    return max(1, min(KDE_CHUNK_SIZE, _BLOCK_ELEMENTS // max(n_columns, 1)))


@dataclass(frozen=True, eq=False)
class KdeModel:
    """f_n(x) = (1/n) sum_i |H|^(-1/2) K(H^(-1/2)(x - X_i)) with the standard Gaussian K."""

    sample: PointCloud
    bandwidth: Bandwidth

    def __post_init__(self) -> None:
        if self.sample.is_empty:
            raise EmptyInputError("a density model needs at least one sample point")

    @property
    def n(self) -> int:
        return len(self.sample)

    @cached_property
    def _scaled_sample(self) -> np.ndarray:
        return self.sample.points / self.bandwidth.as_array()

    @property
    def _normalizer(self) -> float:
        return 1.0 / (self.n * 2.0 * math.pi * self.bandwidth.h1 * self.bandwidth.h2)

    def evaluate(self, points: np.ndarray | Iterable, workers: int = 1) -> np.ndarray:
        """Exact f_n at each row of `points`; chunks of queries run on a thread pool when workers > 1."""
        queries = np.asarray(points, dtype=float).reshape(-1, 2)
        if queries.shape[0] == 0:
            return np.zeros(0)
        scaled = queries / self.bandwidth.as_array()
        block = _row_block(self.n)
        starts = list(range(0, len(scaled), block))

        def evaluate_block(start: int) -> np.ndarray:
            squared = cdist(scaled[start : start + block], self._scaled_sample, "sqeuclidean")
            return np.exp(-0.5 * squared).sum(axis=1)

        if workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                sums = list(executor.map(evaluate_block, starts))
        else:
            sums = [evaluate_block(start) for start in starts]
        return np.concatenate(sums) * self._normalizer

    @cached_property
    def sample_values(self) -> np.ndarray:
        """f_n evaluated at the sample points themselves."""
        return self.evaluate(self.sample.points)

    def to_dict(self) -> dict[str, object]:
        return {"n": self.n, "kernel": "gaussian", "bandwidth": self.bandwidth.to_dict()}


def kde_eval(model: KdeModel, x: Iterable[float]) -> float:
    """Density estimate at a single point."""
    point = np.asarray(x, dtype=float).reshape(1, 2)
    if not np.all(np.isfinite(point)):
        raise ValueError("evaluation point must be finite")
    return float(model.evaluate(point)[0])


def sample_kde(model: KdeModel, size: int, rng: np.random.Generator) -> PointCloud:
    """Smoothed-bootstrap draw from f_n: resample the data and add N(0, H) noise."""
    picks = rng.integers(0, model.n, size=size)
    noise = rng.standard_normal((size, 2)) * model.bandwidth.as_array()
    return PointCloud(model.sample.points[picks] + noise)


def lscv_objective(sample: PointCloud, bandwidth: Bandwidth) -> float:
    """Closed-form least-squares cross-validation score for the Gaussian kernel.

    LSCV(H) = n^-2 sum_ij phi_2H(X_i - X_j) - 2 [n(n-1)]^-1 sum_(i != j) phi_H(X_i - X_j)

    A bandwidth whose h1 h2 underflows to zero scores +inf.

    Raises:
        BandwidthSelectionError: If the sample has fewer than two points.
    """
    n = len(sample)
    if n < 2:
        raise BandwidthSelectionError("least-squares cross-validation needs at least two points")
    area = bandwidth.h1 * bandwidth.h2
    if area == 0.0:
        return math.inf
    scaled = sample.points / bandwidth.as_array()
    block = _row_block(n)
    total_2h = 0.0
    total_h = 0.0
    for start in range(0, n, block):
        squared = cdist(scaled[start : start + block], scaled, "sqeuclidean")
        total_2h += float(np.exp(-0.25 * squared).sum())
        total_h += float(np.exp(-0.5 * squared).sum())
    # the diagonal contributes exp(0) = 1 per point
    total_h -= n
    return total_2h / (n * n * 4.0 * math.pi * area) - 2.0 * total_h / (n * (n - 1) * 2.0 * math.pi * area)


def normal_reference_bandwidth(sample: PointCloud) -> Bandwidth:
    """h_i = sigma_i n^(-1/6), the normal-reference rule in two dimensions."""
    n = len(sample)
    if n < 2:
        raise BandwidthSelectionError("the normal-reference rule needs at least two points")
    sigma = sample.points.std(axis=0, ddof=1)
    if np.any(sigma <= 0):
        raise BandwidthSelectionError("a coordinate has zero spread; the bandwidth is undefined")
    h = sigma * n ** (-1.0 / 6.0)
    return Bandwidth(float(h[0]), float(h[1]))


@dataclass(frozen=True)
class LscvRestart:
    start_factor: float
    bandwidth: Bandwidth
    score: float
    converged: bool


def _validate_lscv_sample(sample: PointCloud) -> None:
    if len(sample) < MIN_LSCV_SAMPLE:
        raise BandwidthSelectionError(f"bandwidth selection needs at least {MIN_LSCV_SAMPLE} points, got {len(sample)}")
    for axis in range(2):
        if np.unique(sample.points[:, axis]).shape[0] < 2:
            raise BandwidthSelectionError(f"coordinate {axis + 1} has a single distinct value")


def lscv_log_floor(sample: PointCloud) -> np.ndarray:
    """Lower bound of the log-bandwidth search on each axis.

    Exact duplicates make the score unbounded below as h -> 0, so the search
    stops at a fraction of the smallest nonzero coordinate spacing.
    """
    spacing = [float(np.diff(np.unique(sample.points[:, axis])).min()) for axis in range(2)]
    return np.log(LSCV_MIN_SPACING_FRACTION * np.array(spacing))


def lscv_restarts(sample: PointCloud, workers: int = 1) -> list[LscvRestart]:
    """Run the log-scale Nelder-Mead search from each restart factor of the reference start."""
    _validate_lscv_sample(sample)
    floor = lscv_log_floor(sample)
    reference = np.maximum(np.log(normal_reference_bandwidth(sample).as_array()), floor)
    bounds = [(float(floor[0]), None), (float(floor[1]), None)]

    def objective(log_h: np.ndarray) -> float:
        h = np.exp(log_h)
        if np.any(log_h < floor) or not np.all(np.isfinite(h)) or np.any(h <= 0):
            return math.inf
        score = lscv_objective(sample, Bandwidth(float(h[0]), float(h[1])))
        return score if math.isfinite(score) else math.inf

    def search(factor: float) -> LscvRestart:
        x0 = np.maximum(reference + math.log(factor), floor)
        simplex = np.vstack([x0, x0 + [LSCV_SIMPLEX_STEP, 0.0], x0 + [0.0, LSCV_SIMPLEX_STEP]])
        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={"initial_simplex": simplex, "xatol": LSCV_XATOL, "fatol": math.inf, "maxiter": LSCV_MAX_ITER},
        )
        h = np.exp(np.maximum(result.x, floor))
        if not np.all(np.isfinite(h)) or not math.isfinite(result.fun):
            raise BandwidthSelectionError(f"LSCV search diverged from start factor {factor}")
        return LscvRestart(factor, Bandwidth(float(h[0]), float(h[1])), float(result.fun), bool(result.success))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(LSCV_RESTART_FACTORS))) as executor:
            return list(executor.map(search, LSCV_RESTART_FACTORS))
    return [search(factor) for factor in LSCV_RESTART_FACTORS]


def fit_lscv(sample: PointCloud, workers: int = 1) -> Bandwidth:
    """Minimize the LSCV score over diagonal bandwidths.

    The search runs in log-bandwidth from the normal-reference start and two
    rescaled starts; the lowest score wins, earlier starts winning ties.

    Raises:
        BandwidthSelectionError: If the sample is too small, a coordinate is constant,
            or no start reaches a finite score.
    """
    restarts = lscv_restarts(sample, workers)
    best = min(restarts, key=lambda restart: restart.score)
    if np.any(np.log(best.bandwidth.as_array()) <= lscv_log_floor(sample) + LSCV_SIMPLEX_STEP):
        logging.warning(
            f"LSCV stopped at the bandwidth floor h=({best.bandwidth.h1:.4g}, {best.bandwidth.h2:.4g}); "
            f"{sample.duplicate_count} duplicate points make the score unbounded"
        )
    if not best.converged:
        logging.warning(f"LSCV search hit the iteration cap; using h=({best.bandwidth.h1:.4g}, {best.bandwidth.h2:.4g})")
    logging.debug(f"LSCV bandwidth h=({best.bandwidth.h1:.6g}, {best.bandwidth.h2:.6g}), score {best.score:.6g}")
    return best.bandwidth


def fit_kde(sample: PointCloud, bandwidth: Bandwidth | None = None, workers: int = 1) -> KdeModel:
    """Build a model, selecting the bandwidth by LSCV unless one is given."""
    return KdeModel(sample, bandwidth if bandwidth is not None else fit_lscv(sample, workers))


def quantile_threshold(values: Iterable[float] | np.ndarray, tau: float) -> float:
    """Type-1 empirical quantile: the ceil(tau n)-th smallest value (1-based)."""
    if not (0.0 < tau < 1.0):
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    array = np.asarray(values, dtype=float).ravel()
    if array.size == 0:
        raise EmptyInputError("quantile of an empty value list")
    if not np.all(np.isfinite(array)):
        raise ValueError("quantile values must be finite")
    index = max(1, math.ceil(round(tau * array.size, 9)))
    return float(np.sort(array)[index - 1])
