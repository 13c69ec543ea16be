"""Synthetic reference densities, exact truth masks, the r0 grid oracle and the convergence harness."""

from __future__ import annotations

import logging
import math
from abc import ABC
from abc import abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any
from typing import Callable

import numpy as np
import pandas as pd
from scipy import ndimage

from hybrid_levelset.calibration import CalibrationConfig
from hybrid_levelset.calibration import calibrate
from hybrid_levelset.calibration import rng_stream
from hybrid_levelset.constants import CONTAINMENT_DILATION_CELLS
from hybrid_levelset.constants import DEFAULT_J
from hybrid_levelset.constants import DEFAULT_SMOOTHNESS_ORDER
from hybrid_levelset.constants import EXPERIMENT_CSV_FILE
from hybrid_levelset.constants import EXPERIMENT_JSON_FILE
from hybrid_levelset.constants import ORACLE_BAND_CELLS
from hybrid_levelset.constants import ORACLE_GAMMA_COUNT
from hybrid_levelset.constants import ORACLE_GAMMA_SPAN
from hybrid_levelset.density import KdeModel
from hybrid_levelset.density import fit_lscv
from hybrid_levelset.density import normal_reference_bandwidth
from hybrid_levelset.density import quantile_threshold
from hybrid_levelset.errors import ConfigError
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.errors import LevelSetError
from hybrid_levelset.estimator import estimate_level_set
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.raster import BBox
from hybrid_levelset.raster import RasterMask
from hybrid_levelset.raster import closing
from hybrid_levelset.raster import component_count
from hybrid_levelset.raster import hausdorff
from hybrid_levelset.raster import mask_from_predicate
from hybrid_levelset.raster import measure_distance
from hybrid_levelset.raster import minkowski
from hybrid_levelset.raster import rasterize
from hybrid_levelset.report import write_json
from hybrid_levelset.splitter import MarginSchedule
from hybrid_levelset.splitter import assign_unassigned
from hybrid_levelset.splitter import calibrate_margin_constant
from hybrid_levelset.splitter import dn
from hybrid_levelset.splitter import split_calibrated
from hybrid_levelset.splitter import split_margin

SPLIT_MARGIN = "margin"
SPLIT_CALIBRATED = "calibrated"
BANDWIDTH_LSCV = "lscv"
BANDWIDTH_REFERENCE = "reference"


class SyntheticDensity(ABC):
    """A planar density with an exact pointwise formula and an exact sampler."""

    name: str = "synthetic"

    @abstractmethod
    def pdf(self, points: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> PointCloud: ...

    @abstractmethod
    def support_bbox(self) -> BBox:
        """A box holding the support (or all but a negligible tail of it)."""

    @property
    @abstractmethod
    def characteristic_length(self) -> float: ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...


def _check_sample_size(n: int) -> None:
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")


@dataclass(frozen=True)
class GaussianMixture(SyntheticDensity):
    weights: tuple[float, ...]
    means: tuple[tuple[float, float], ...]
    sds: tuple[tuple[float, float], ...]
    name: str = "gaussian-mixture"

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.means) == len(self.sds)) or not self.weights:
            raise ValueError("weights, means and sds must have the same non-zero length")
        if any(w <= 0 for w in self.weights) or not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise ValueError("mixture weights must be positive and sum to 1")
        if any(s <= 0 for pair in self.sds for s in pair):
            raise ValueError("standard deviations must be positive")

    def pdf(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        total = np.zeros(len(points))
        for w, (mx, my), (sx, sy) in zip(self.weights, self.means, self.sds):
            z = ((points[:, 0] - mx) / sx) ** 2 + ((points[:, 1] - my) / sy) ** 2
            total += w * np.exp(-0.5 * z) / (2.0 * math.pi * sx * sy)
        return total

    def sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        _check_sample_size(n)
        component = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        means = np.asarray(self.means)[component]
        sds = np.asarray(self.sds)[component]
        return PointCloud(means + sds * rng.standard_normal((n, 2)))

    def support_bbox(self) -> BBox:
        means = np.asarray(self.means)
        spread = 4.0 * np.asarray(self.sds)
        low = (means - spread).min(axis=0)
        high = (means + spread).max(axis=0)
        return float(low[0]), float(low[1]), float(high[0]), float(high[1])

    @property
    def characteristic_length(self) -> float:
        means = np.asarray(self.means)
        separation = float(np.max(np.hypot(*(means[:, None, :] - means[None, :, :]).transpose(2, 0, 1))))
        return max(float(np.max(self.sds)), 0.5 * separation)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": self.name,
            "weights": list(self.weights),
            "means": [list(m) for m in self.means],
            "sds": [list(s) for s in self.sds],
        }


def _uniform_in_square(rng: np.random.Generator, center: tuple[float, float], half: float, size: int) -> np.ndarray:
    return np.asarray(center) + rng.uniform(-half, half, size=(size, 2))


@dataclass(frozen=True)
class DiscUnion(SyntheticDensity):
    """Uniform density on a union of disjoint discs."""

    centers: tuple[tuple[float, float], ...]
    radii: tuple[float, ...]
    name: str = "disc-union"

    def __post_init__(self) -> None:
        if len(self.centers) != len(self.radii) or not self.radii:
            raise ValueError("centers and radii must have the same non-zero length")
        if any(r <= 0 for r in self.radii):
            raise ValueError("disc radii must be positive")
        for i in range(len(self.radii)):
            for j in range(i + 1, len(self.radii)):
                if math.dist(self.centers[i], self.centers[j]) < self.radii[i] + self.radii[j]:
                    raise ValueError("discs must be disjoint")

    @property
    def area(self) -> float:
        return math.pi * sum(r * r for r in self.radii)

    def inside(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        result = np.zeros(len(points), dtype=bool)
        for (cx, cy), r in zip(self.centers, self.radii):
            result |= (points[:, 0] - cx) ** 2 + (points[:, 1] - cy) ** 2 <= r * r
        return result

    def pdf(self, points: np.ndarray) -> np.ndarray:
        return self.inside(points) / self.area

    def sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        _check_sample_size(n)
        areas = np.array([r * r for r in self.radii])
        component = rng.choice(len(self.radii), size=n, p=areas / areas.sum())
        out = np.empty((n, 2))
        for index, (center, r) in enumerate(zip(self.centers, self.radii)):
            slots = np.flatnonzero(component == index)
            filled = 0
            while filled < len(slots):
                proposals = _uniform_in_square(rng, center, r, 2 * (len(slots) - filled) + 8)
                keep = proposals[np.hypot(*(proposals - np.asarray(center)).T) <= r][: len(slots) - filled]
                out[slots[filled : filled + len(keep)]] = keep
                filled += len(keep)
        return PointCloud(out)

    def support_bbox(self) -> BBox:
        centers = np.asarray(self.centers)
        radii = np.asarray(self.radii)[:, None]
        low = (centers - radii).min(axis=0)
        high = (centers + radii).max(axis=0)
        return float(low[0]), float(low[1]), float(high[0]), float(high[1])

    @property
    def characteristic_length(self) -> float:
        return float(max(self.radii))

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.name, "centers": [list(c) for c in self.centers], "radii": list(self.radii)}


@dataclass(frozen=True)
class Annulus(SyntheticDensity):
    """Uniform density on {inner <= |x - center| <= outer}."""

    center: tuple[float, float]
    inner: float
    outer: float
    name: str = "annulus"

    def __post_init__(self) -> None:
        if not (0 <= self.inner < self.outer):
            raise ValueError("annulus radii must satisfy 0 <= inner < outer")

    @property
    def area(self) -> float:
        return math.pi * (self.outer**2 - self.inner**2)

    def inside(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        distance = np.hypot(points[:, 0] - self.center[0], points[:, 1] - self.center[1])
        return (distance >= self.inner) & (distance <= self.outer)

    def pdf(self, points: np.ndarray) -> np.ndarray:
        return self.inside(points) / self.area

    def sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        _check_sample_size(n)
        chunks = []
        remaining = n
        while remaining > 0:
            proposals = _uniform_in_square(rng, self.center, self.outer, 2 * remaining + 8)
            keep = proposals[self.inside(proposals)][:remaining]
            chunks.append(keep)
            remaining -= len(keep)
        return PointCloud(np.vstack(chunks))

    def support_bbox(self) -> BBox:
        cx, cy = self.center
        return cx - self.outer, cy - self.outer, cx + self.outer, cy + self.outer

    @property
    def characteristic_length(self) -> float:
        return self.outer

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.name, "center": list(self.center), "inner": self.inner, "outer": self.outer}


SHIPPED_DENSITIES: dict[str, Callable[[], SyntheticDensity]] = {
    "two-discs": lambda: DiscUnion(centers=((-1.0, 0.0), (1.0, 0.0)), radii=(0.5, 0.5), name="two-discs"),
    "annulus": lambda: Annulus(center=(0.0, 0.0), inner=0.5, outer=1.0, name="annulus"),
    "bimodal": lambda: GaussianMixture(
        weights=(0.5, 0.5), means=((-1.5, 0.0), (1.5, 0.0)), sds=((0.6, 0.6), (0.6, 0.6)), name="bimodal"
    ),
}


def get_density(name: str) -> SyntheticDensity:
    """Look up a shipped reference density by name.

    Raises:
        ConfigError: If the name is unknown; the message lists the available shapes.
    """
    try:
        return SHIPPED_DENSITIES[name]()
    except KeyError:
        raise ConfigError(f"unknown density {name!r}; available: {', '.join(sorted(SHIPPED_DENSITIES))}") from None


def truth_bbox(density: SyntheticDensity, padding: float = 0.1) -> BBox:
    """The support box padded by `padding` x its larger side."""
    xmin, ymin, xmax, ymax = density.support_bbox()
    pad = padding * max(xmax - xmin, ymax - ymin)
    return xmin - pad, ymin - pad, xmax + pad, ymax + pad


@dataclass(frozen=True, eq=False)
class TruthMask:
    mask: RasterMask
    threshold: float
    tau: float | None = None

    def content(self, density: SyntheticDensity) -> float:
        """Probability content of the mask under the density."""
        xs, ys = self.mask.cell_centers()
        gx, gy = np.meshgrid(xs, ys)
        values = density.pdf(np.column_stack([gx.ravel(), gy.ravel()])).reshape(gx.shape)
        return float(values[self.mask.bits].sum() * self.mask.cell_area)


def _density_grid(density: SyntheticDensity, bbox: BBox, resolution: int) -> tuple[np.ndarray, float]:
    blank = RasterMask.empty(bbox, resolution)
    xs, ys = blank.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    return density.pdf(np.column_stack([gx.ravel(), gy.ravel()])).reshape(gx.shape), blank.cell_area


def level_threshold(density: SyntheticDensity, tau: float, bbox: BBox, resolution: int) -> float:
    """f_tau = sup{y : content of {f >= y} >= 1 - tau}, exact on the raster.

    Cells are sorted by density; the content of {f >= y} is the cumulative sum
    down to y, so the supremum is the value at which it first reaches 1 - tau.
    """
    if not (0 < tau < 1):
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    values, cell_area = _density_grid(density, bbox, resolution)
    ordered = np.sort(values.ravel())[::-1]
    content = np.cumsum(ordered) * cell_area
    reach = np.flatnonzero(content >= 1.0 - tau)
    if reach.size == 0:
        logging.warning(f"The raster holds only {content[-1]:.4f} of the mass; using the smallest positive density")
        return float(ordered[ordered > 0][-1])
    return float(ordered[reach[0]])


def true_level_mask(
    density: SyntheticDensity,
    bbox: BBox,
    resolution: int,
    t: float | None = None,
    tau: float | None = None,
) -> TruthMask:
    """Raster of {f >= t}, or of {f >= f_tau} when tau is given."""
    if (t is None) == (tau is None):
        raise ValueError("give exactly one of t and tau")
    threshold = t if t is not None else level_threshold(density, tau, bbox, resolution)  # type: ignore[arg-type]
    values, _ = _density_grid(density, bbox, resolution)
    return TruthMask(RasterMask(bbox, resolution, values >= threshold), float(threshold), tau)


def default_gamma_grid(characteristic_length: float) -> np.ndarray:
    low, high = ORACLE_GAMMA_SPAN
    return np.geomspace(low * characteristic_length, high * characteristic_length, ORACLE_GAMMA_COUNT)


def r0_grid_oracle(truth: RasterMask, gamma_grid: np.ndarray) -> float:
    """Largest gamma (scanning upward) whose raster closing leaves the truth unchanged.

    Closing cells within ORACLE_BAND_CELLS cells of the truth count as equal.
    """
    if truth.is_empty:
        raise EmptyInputError("the r0 oracle needs a non-empty truth mask")
    grid = np.sort(np.asarray(gamma_grid, dtype=float))
    dx, dy = truth.cell_size
    band = ORACLE_BAND_CELLS * max(dx, dy)
    distance_to_truth = ndimage.distance_transform_edt(~truth.bits, sampling=(dy, dx))
    best: float | None = None
    for gamma in grid:
        added = closing(truth, float(gamma)).bits & ~truth.bits
        if added.any() and distance_to_truth[added].max() > band:
            break
        best = float(gamma)
    if best is None:
        logging.warning(f"The closing already changes the truth at gamma={grid[0]:.4g}; returning the smallest grid value")
        return float(grid[0])
    return best


@dataclass(frozen=True)
class ConvergenceSettings:
    n_grid: tuple[int, ...]
    replicates: int
    nu: float
    seed: int
    tau: float | None = None
    t: float | None = None
    split_mode: str = SPLIT_MARGIN
    bandwidth_rule: str = BANDWIDTH_LSCV
    resolution: int = 256
    J: int = DEFAULT_J
    margin_m: float | None = None
    calibration_B: int = 20
    calibration_M_mc: int | None = None
    calibration_I: int = 5

    def __post_init__(self) -> None:
        if (self.tau is None) == (self.t is None):
            raise ConfigError("give exactly one of tau and t")
        if self.split_mode not in (SPLIT_MARGIN, SPLIT_CALIBRATED):
            raise ConfigError(f"unknown split mode {self.split_mode!r}")
        if self.split_mode == SPLIT_CALIBRATED and self.tau is None:
            raise ConfigError("the calibrated split needs a probability level tau")
        if self.bandwidth_rule not in (BANDWIDTH_LSCV, BANDWIDTH_REFERENCE):
            raise ConfigError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if not self.n_grid or any(n < 2 for n in self.n_grid) or self.replicates < 1:
            raise ConfigError("n_grid needs sizes >= 2 and replicates must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {key: (list(value) if isinstance(value, tuple) else value) for key, value in self.__dict__.items()}


@dataclass(frozen=True)
class ConvergenceReport:
    density: dict[str, Any]
    settings: dict[str, Any]
    truth_threshold: float
    r0: float
    rows: list[dict[str, Any]] = field(default_factory=list)
    summary: list[dict[str, Any]] = field(default_factory=list)
    slope: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "density": self.density,
            "settings": self.settings,
            "truth_threshold": self.truth_threshold,
            "r0": self.r0,
            "summary": self.summary,
            "log_log_slope": self.slope,
            "rows": self.rows,
        }


def _run_replicate(
    density: SyntheticDensity, settings: ConvergenceSettings, truth: TruthMask, r0: float, n: int, replicate: int
) -> dict[str, Any]:
    rng = rng_stream(settings.seed, n, replicate)
    sample = density.sample(n, rng)
    row: dict[str, Any] = {"n": n, "replicate": replicate, "status": "ok"}
    try:
        bandwidth = fit_lscv(sample) if settings.bandwidth_rule == BANDWIDTH_LSCV else normal_reference_bandwidth(sample)
        model = KdeModel(sample, bandwidth)
        if settings.tau is not None:
            t_hat = quantile_threshold(model.sample_values, settings.tau)
        else:
            t_hat = float(settings.t)  # type: ignore[arg-type]

        if settings.split_mode == SPLIT_CALIBRATED:
            cfg = CalibrationConfig.for_sample(
                n,
                tau=settings.tau,  # type: ignore[arg-type]
                I=settings.calibration_I,
                M_mc=settings.calibration_M_mc,
                B=settings.calibration_B,
                J=settings.J,
                seed=int(rng.integers(0, 2**32)),
            )
            result = calibrate(sample, cfg, bandwidth=bandwidth)
            split = assign_unassigned(split_calibrated(model, sample, result.thresholds), result.k_hat)
        else:
            M = settings.margin_m or calibrate_margin_constant(model, rng, DEFAULT_SMOOTHNESS_ORDER)
            split = split_margin(model, sample, t_hat, dn(MarginSchedule(M), n))

        estimate = estimate_level_set(split, nu=settings.nu, J=settings.J)
    except LevelSetError as e:
        logging.warning(f"n={n} replicate {replicate} failed: {e}")
        row.update(status=f"failed: {type(e).__name__}", d_mu=math.nan, d_h=math.nan, r_hat=math.nan)
        return row
    except Exception as e:
        logging.error(f"❌ n={n} replicate {replicate} raised {type(e).__name__}: {e}")
        row.update(status=f"failed: {type(e).__name__}", d_mu=math.nan, d_h=math.nan, r_hat=math.nan)
        return row

    mask = rasterize(estimate.region, truth.mask.bbox, truth.mask.resolution)
    plugin = mask_from_predicate(lambda points: model.evaluate(points) >= t_hat, truth.mask.bbox, truth.mask.resolution)
    slack = minkowski(truth.mask, CONTAINMENT_DILATION_CELLS * max(truth.mask.cell_size), "dilate")
    r_hat = estimate.radius_estimate.r_hat
    row.update(
        h1=bandwidth.h1,
        h2=bandwidth.h2,
        threshold=t_hat,
        plus=len(split.plus_index),
        minus=len(split.minus_index),
        r_hat=r_hat,
        radius=estimate.region.radius,
        relative_r0_error=abs(r_hat - r0) / r0 if math.isfinite(r_hat) else math.inf,
        d_mu=measure_distance(mask, truth.mask),
        d_h=hausdorff(mask, truth.mask) if not mask.is_empty else math.nan,
        d_mu_plugin=measure_distance(plugin, truth.mask),
        contained=bool(slack.contains_cells_of(mask)),
        components=component_count(mask),
    )
    return row


def _median(values: list[float]) -> float | None:
    finite = [v for v in values if not math.isnan(v)]
    return float(np.median(finite)) if finite else None


def run_convergence(density: SyntheticDensity, settings: ConvergenceSettings, workers: int = 1) -> ConvergenceReport:
    """Repeat sample -> fit -> split -> estimate over n_grid and score each estimate against the truth."""
    bbox = truth_bbox(density)
    truth = true_level_mask(density, bbox, settings.resolution, t=settings.t, tau=settings.tau)
    r0 = r0_grid_oracle(truth.mask, default_gamma_grid(density.characteristic_length))
    logging.info(f"🧪 Truth threshold {truth.threshold:.6g}, oracle r0={r0:.6g} on {density.name}")

    jobs = [(n, replicate) for n in settings.n_grid for replicate in range(settings.replicates)]

    def run(job: tuple[int, int]) -> dict[str, Any]:
        return _run_replicate(density, settings, truth, r0, *job)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]

    summary = []
    for n in settings.n_grid:
        ok = [row for row in rows if row["n"] == n and row["status"] == "ok"]
        summary.append(
            {
                "n": n,
                "completed": len(ok),
                "median_d_mu": _median([row["d_mu"] for row in ok]),
                "median_d_h": _median([row["d_h"] for row in ok]),
                "median_d_mu_plugin": _median([row["d_mu_plugin"] for row in ok]),
                "median_relative_r0_error": _median([row["relative_r0_error"] for row in ok]),
                "containment_fraction": (sum(row["contained"] for row in ok) / len(ok)) if ok else None,
                "two_component_fraction": (sum(row["components"] == 2 for row in ok) / len(ok)) if ok else None,
            }
        )

    slope = None
    usable = [(s["n"], s["median_d_mu"]) for s in summary if s["median_d_mu"] is not None and s["median_d_mu"] > 0]
    if len(usable) >= 2:
        ns, medians = zip(*usable)
        slope = float(np.polyfit(np.log(ns), np.log(medians), 1)[0])
    return ConvergenceReport(
        density=density.to_dict(),
        settings=settings.to_dict(),
        truth_threshold=truth.threshold,
        r0=r0,
        rows=rows,
        summary=summary,
        slope=slope,
    )


def write_convergence_report(report: ConvergenceReport, out_dir: Path) -> tuple[Path, Path]:
    """Write the experiment JSON and the per-replicate CSV."""
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = write_json(out_dir / EXPERIMENT_JSON_FILE, report.to_dict())
    csv_path = out_dir / EXPERIMENT_CSV_FILE
    pd.DataFrame(report.rows).to_csv(csv_path, index=False, lineterminator="\n")
    return json_path, csv_path
