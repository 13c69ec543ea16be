"""Main entry point for the levelset command-line tool."""

from __future__ import annotations

import logging
import sys
import time
from pathlib import Path
from typing import Any

import click

from hybrid_levelset import __version__
from hybrid_levelset.boundary import boundary
from hybrid_levelset.boundary import default_chord_tolerance
from hybrid_levelset.calibration import CalibrationConfig
from hybrid_levelset.calibration import calibrate
from hybrid_levelset.calibration import rng_stream
from hybrid_levelset.config import BANDWIDTH_RULES
from hybrid_levelset.config import SPLIT_MODES
from hybrid_levelset.config import RunConfig
from hybrid_levelset.config import load_run_config
from hybrid_levelset.config import load_worker_count
from hybrid_levelset.constants import ERROR_METRIC_LEBESGUE
from hybrid_levelset.constants import ERROR_METRIC_PROBABILITY
from hybrid_levelset.constants import FIGURE_FILE
from hybrid_levelset.constants import GEOJSON_FILE
from hybrid_levelset.constants import LABEL_CASE
from hybrid_levelset.constants import LABEL_CONTROL
from hybrid_levelset.constants import REPORT_FILE
from hybrid_levelset.constants import TIMINGS_FILE
from hybrid_levelset.density import fit_kde
from hybrid_levelset.density import quantile_threshold
from hybrid_levelset.errors import DegenerateGeometryError
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.errors import LevelSetError
from hybrid_levelset.estimator import estimate_level_set
from hybrid_levelset.geometry import RConvexRegion
from hybrid_levelset.ingest import ingest_csv
from hybrid_levelset.ingest import read_pbm
from hybrid_levelset.main_helpers import log_startup_info
from hybrid_levelset.main_helpers import parse_float_list
from hybrid_levelset.main_helpers import parse_int_list
from hybrid_levelset.main_helpers import remediation_hint
from hybrid_levelset.main_helpers import setup_logging
from hybrid_levelset.main_helpers import validate_prerequisites
from hybrid_levelset.raster import BBox
from hybrid_levelset.raster import RasterMask
from hybrid_levelset.raster import component_count
from hybrid_levelset.raster import default_bbox
from hybrid_levelset.raster import hausdorff
from hybrid_levelset.raster import measure_distance
from hybrid_levelset.raster import rasterize
from hybrid_levelset.report import build_report
from hybrid_levelset.report import format_report
from hybrid_levelset.report import load_report
from hybrid_levelset.report import render_figure
from hybrid_levelset.report import write_geojson
from hybrid_levelset.report import write_json
from hybrid_levelset.report import write_report
from hybrid_levelset.splitter import MarginSchedule
from hybrid_levelset.splitter import assign_unassigned
from hybrid_levelset.splitter import calibrate_margin_constant
from hybrid_levelset.splitter import dn
from hybrid_levelset.splitter import split_calibrated
from hybrid_levelset.splitter import split_margin
from hybrid_levelset.synthref import ConvergenceSettings
from hybrid_levelset.synthref import get_density
from hybrid_levelset.synthref import run_convergence
from hybrid_levelset.synthref import true_level_mask
from hybrid_levelset.synthref import write_convergence_report

# RNG stream key for the margin-constant refits; calibration owns keys 0 and 1
MARGIN_STREAM = 2


def _truth_metrics(config: RunConfig, region: RConvexRegion, mask: RasterMask, workers: int) -> dict[str, float]:
    assert config.truth is not None
    if config.truth.lower().endswith(".pbm"):
        assert config.truth_bbox is not None
        truth = read_pbm(Path(config.truth), config.truth_bbox)
        estimate = rasterize(region, truth.bbox, truth.resolution, workers)
    else:
        density = get_density(config.truth)
        tau = None if config.threshold_mode else config.tau
        truth = true_level_mask(density, mask.bbox, mask.resolution, t=config.t, tau=tau).mask
        estimate = mask
    metrics = {"d_mu": measure_distance(estimate, truth)}
    if not (estimate.is_empty or truth.is_empty):
        metrics["d_hausdorff"] = hausdorff(estimate, truth)
    return metrics


def run_estimate(config: RunConfig, workers: int = 1) -> dict[str, Path]:
    """Fit, split, estimate and write the report, GeoJSON and SVG for one input file.

    Returns:
        Mapping of output kind to the written path
    """
    logger = logging.getLogger(__name__)
    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(stage: str) -> None:
        nonlocal clock
        now = time.perf_counter()
        timings[stage] = now - clock
        clock = now

    assert config.input is not None
    ingest = ingest_csv(Path(config.input), config.window)
    cloud = ingest.cloud(config.label)
    if cloud.is_empty:
        raise EmptyInputError(f"no points selected from {config.input}")
    lap("ingest")

    logger.info("🔍 Fitting bandwidth by least-squares cross-validation...")
    model = fit_kde(cloud, workers=workers)
    logger.info(f"✅ Bandwidth h=({model.bandwidth.h1:.6g}, {model.bandwidth.h2:.6g})")
    lap("bandwidth")

    calibration = None
    if config.threshold_mode or not config.calibrate:
        if config.threshold_mode:
            t = config.t
        else:
            t = quantile_threshold(model.sample_values, config.tau)  # type: ignore[arg-type]
        M = config.margin_m or calibrate_margin_constant(model, rng_stream(config.seed, MARGIN_STREAM))
        margin = dn(MarginSchedule(M), len(cloud))
        logger.info(f"✂️ Margin split at t={t:.6g} with D_n={margin:.6g}")
        split = split_margin(model, cloud, t, margin)  # type: ignore[arg-type]
    else:
        cfg = CalibrationConfig.for_sample(
            len(cloud),
            tau=config.tau,  # type: ignore[arg-type]
            I=config.I,
            delta=config.delta,
            M_mc=config.M_mc,
            B=config.B,
            k_grid=config.k_grid,
            J=config.J,
            seed=config.seed,
            error_metric=config.error_metric,
        )
        calibration = calibrate(cloud, cfg, workers, bandwidth=model.bandwidth)
        split = assign_unassigned(split_calibrated(model, cloud, calibration.thresholds), calibration.k_hat)
    lap("split")

    logger.info("📐 Estimating the radius by dichotomy...")
    estimate = estimate_level_set(split, config.nu, config.J, config.r_m0, config.r_M0, workers)
    region = estimate.region
    logger.info(f"✅ Radius {region.radius:.6g} from {len(split.plus_index)} plus points")
    lap("estimate")

    bbox: BBox = default_bbox(cloud.points, region.radius, model.bandwidth)
    mask = rasterize(region, bbox, config.resolution, workers)
    try:
        arc_boundary = boundary(region)
    except DegenerateGeometryError as e:
        logger.warning(f"No arc boundary: {e}")
        arc_boundary = None
    tolerance = default_chord_tolerance(region.tri.sites)
    region_summary: dict[str, Any] = {
        "radius": region.radius,
        "area": arc_boundary.area() if arc_boundary is not None else mask.area(),
        "raster_area": mask.area(),
        "components": component_count(mask),
        "bbox": list(bbox),
        "resolution": config.resolution,
    }
    if arc_boundary is not None:
        region_summary["rings"] = len(arc_boundary.rings)
        region_summary["holes"] = len(arc_boundary.hole_rings)
    metrics = _truth_metrics(config, region, mask, workers) if config.truth else None
    lap("outputs")

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if arc_boundary is not None:
        written["geojson"] = write_geojson(arc_boundary, out_dir / GEOJSON_FILE, tolerance, {"nu": config.nu})
    written["figure"] = render_figure(
        cloud.points, split.labels(), arc_boundary, out_dir / FIGURE_FILE, tolerance, title=f"radius {region.radius:.4g}"
    )
    report = build_report(
        version=__version__,
        seed=config.seed,
        config=config.to_dict(),
        input_summary={"n": len(cloud), "bbox": list(cloud.bbox()), "duplicates": cloud.duplicate_count, **ingest.summary()},
        model=model.to_dict(),
        split=split.summary(),
        estimate=estimate.to_dict(),
        region=region_summary,
        calibration=calibration.to_dict() if calibration is not None else None,
        metrics=metrics,
    )
    written["report"] = write_report(report, out_dir / REPORT_FILE)
    if config.record_timings:
        written["timings"] = write_json(out_dir / TIMINGS_FILE, timings)
    return written


def _handle_error(error: Exception) -> int:
    logger = logging.getLogger(__name__)
    if isinstance(error, LevelSetError):
        logger.error(f"❌ {error}")
        hint = remediation_hint(error)
        if hint:
            logger.error(f"💡 {hint}")
    else:
        logger.error(f"❌ Unexpected error: {error}", exc_info=True)
    return 1


def _estimate_impl(config_path: str | None, overrides: dict[str, Any], verbose: bool) -> int:
    """Implementation of the estimate command without Click decorators."""
    try:
        setup_logging()
        if verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        logger = logging.getLogger(__name__)

        config = load_run_config(Path(config_path) if config_path else None, overrides)
        workers = load_worker_count()
        log_startup_info("estimate", config, workers)

        prerequisites_valid, error_msg = validate_prerequisites(config)
        if not prerequisites_valid:
            logger.error(error_msg)
            return 1

        written = run_estimate(config, workers)
        for kind, path in written.items():
            logger.info(f"📝 Wrote {kind}: {path}")
        return 0
    except KeyboardInterrupt:
        print("❌ Process interrupted by user", file=sys.stderr, flush=True)
        return 1
    except Exception as e:
        return _handle_error(e)


def _simulate_impl(config_path: str | None, overrides: dict[str, Any], verbose: bool) -> int:
    """Implementation of the simulate command without Click decorators."""
    try:
        setup_logging()
        if verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        logger = logging.getLogger(__name__)

        config = load_run_config(Path(config_path) if config_path else None, overrides)
        workers = load_worker_count()
        log_startup_info("simulate", config, workers)

        prerequisites_valid, error_msg = validate_prerequisites(config, needs_input=False)
        if not prerequisites_valid:
            logger.error(error_msg)
            return 1

        density = get_density(config.density)
        settings = ConvergenceSettings(
            n_grid=config.n_grid,
            replicates=config.reps,
            nu=config.nu,
            seed=config.seed,
            tau=None if config.threshold_mode else config.tau,
            t=config.t,
            split_mode=config.split_mode,
            bandwidth_rule=config.bandwidth_rule,
            resolution=config.resolution,
            J=config.J,
            margin_m=config.margin_m,
            calibration_B=config.B,
            calibration_M_mc=config.M_mc,
            calibration_I=config.I,
        )
        logger.info(f"🧪 Running {config.reps} replicates for n in {list(config.n_grid)} on {config.density}...")
        report = run_convergence(density, settings, workers)
        for row in report.summary:
            logger.info(f"  n={row['n']}: median d_mu={row['median_d_mu']}, containment={row['containment_fraction']}")
        if report.slope is not None:
            logger.info(f"📉 Log-log slope of median d_mu: {report.slope:.3f}")
        json_path, csv_path = write_convergence_report(report, Path(config.out))
        logger.info(f"📝 Wrote {json_path} and {csv_path}")
        return 0
    except KeyboardInterrupt:
        print("❌ Process interrupted by user", file=sys.stderr, flush=True)
        return 1
    except Exception as e:
        return _handle_error(e)


def _report_impl(path: str) -> int:
    try:
        setup_logging()
        click.echo(format_report(load_report(Path(path))))
        return 0
    except Exception as e:
        return _handle_error(e)


def _common_overrides(options: dict[str, Any]) -> dict[str, Any]:
    return {
        "tau": options.get("tau"),
        "t": options.get("t"),
        "nu": options.get("nu"),
        "B": options.get("B"),
        "M_mc": options.get("M_mc"),
        "I": options.get("I"),
        "J": options.get("J"),
        "seed": options.get("seed"),
        "resolution": options.get("resolution"),
        "out": options.get("out"),
        "margin_m": options.get("margin_m"),
    }


@click.group()
@click.version_option(__version__, prog_name="levelset")
def main() -> None:
    """Hybrid density level-set estimation with r-convex hulls.

    Estimates {f >= threshold} from a planar point sample: the sample is split
    around a kernel density threshold and the level set is the r-convex hull of
    the inner points, with r the largest radius whose hull avoids the outer points.
    """


@main.command()
@click.argument("input_path", required=False, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Flat JSON config file")
@click.option("--tau", type=float, default=None, help="Probability level: the estimate holds mass 1 - tau (default 0.9)")
@click.option("--t", "t", type=float, default=None, help="Raw density threshold (margin split, no calibration)")
@click.option("--nu", type=float, default=None, help="Radius shrinkage factor in (0, 1] (default 1)")
@click.option("--B", "B", type=int, default=None, help="Bootstrap replicates (default 500)")
@click.option("--M", "M_mc", type=int, default=None, help="Monte-Carlo draw size (default max(3000, 3n))")
@click.option("--I", "I", type=int, default=None, help="Calibration grid half-size (default 10)")
@click.option("--delta", type=float, default=None, help="Calibration grid step")
@click.option("--k", "k", default=None, help="Comma-separated odd kNN sizes (default 1,3,5)")
@click.option("--J", "J", type=int, default=None, help="Bisection steps (default 40)")
@click.option("--seed", type=int, default=None, help="Random seed (default 0)")
@click.option("--resolution", type=int, default=None, help="Raster cells per axis (default 512)")
@click.option("--no-calibrate", is_flag=True, help="Use the margin split instead of bootstrap calibration")
@click.option("--bracket", default=None, help="Initial dichotomy bracket rm,rM")
@click.option("--out", default=None, help="Output directory (default .)")
@click.option("--label", type=click.Choice([LABEL_CASE, LABEL_CONTROL]), default=None, help="Cloud to use from a labelled CSV")
@click.option("--window", default=None, help="Keep only rows inside xmin,ymin,xmax,ymax")
@click.option("--error-metric", type=click.Choice([ERROR_METRIC_PROBABILITY, ERROR_METRIC_LEBESGUE]), default=None)
@click.option("--truth", default=None, help="Shipped density name or a .pbm truth mask for d_mu / d_H")
@click.option("--truth-bbox", default=None, help="Bounding box xmin,ymin,xmax,ymax of a .pbm truth mask")
@click.option("--margin-m", type=float, default=None, help="Margin constant M for the margin split")
@click.option("--record-timings", is_flag=True, help="Also write timings.json")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.pass_context
def estimate(ctx: click.Context, input_path: str | None, config_path: str | None, verbose: bool, **options: Any) -> None:
    """Estimate the level set of the points in INPUT_PATH (CSV rows x,y[,label])."""
    bracket = parse_float_list(options["bracket"], 2, "--bracket")
    overrides = {
        **_common_overrides(options),
        "input": input_path,
        "delta": options["delta"],
        "k_grid": parse_int_list(options["k"], "--k"),
        "r_m0": bracket[0] if bracket else None,
        "r_M0": bracket[1] if bracket else None,
        "calibrate": False if options["no_calibrate"] else None,
        "label": options["label"],
        "window": parse_float_list(options["window"], 4, "--window"),
        "error_metric": options["error_metric"],
        "truth": options["truth"],
        "truth_bbox": parse_float_list(options["truth_bbox"], 4, "--truth-bbox"),
        "record_timings": True if options["record_timings"] else None,
    }
    ctx.exit(_estimate_impl(config_path, overrides, verbose))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Flat JSON config file")
@click.option("--density", default=None, help="Shipped density: two-discs, annulus or bimodal")
@click.option("--n", "n", default=None, help="Comma-separated sample sizes")
@click.option("--reps", type=int, default=None, help="Replicates per sample size")
@click.option("--tau", type=float, default=None)
@click.option("--t", "t", type=float, default=None)
@click.option("--nu", type=float, default=None)
@click.option("--split", "split_mode", type=click.Choice(SPLIT_MODES), default=None)
@click.option("--bandwidth", "bandwidth_rule", type=click.Choice(BANDWIDTH_RULES), default=None)
@click.option("--margin-m", type=float, default=None)
@click.option("--B", "B", type=int, default=None)
@click.option("--M", "M_mc", type=int, default=None)
@click.option("--I", "I", type=int, default=None)
@click.option("--J", "J", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--resolution", type=int, default=None)
@click.option("--out", default=None)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.pass_context
def simulate(ctx: click.Context, config_path: str | None, verbose: bool, **options: Any) -> None:
    """Run the convergence experiment on a shipped synthetic density."""
    overrides = {
        **_common_overrides(options),
        "density": options["density"],
        "n_grid": parse_int_list(options["n"], "--n"),
        "reps": options["reps"],
        "split_mode": options["split_mode"],
        "bandwidth_rule": options["bandwidth_rule"],
    }
    ctx.exit(_simulate_impl(config_path, overrides, verbose))


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def report(ctx: click.Context, path: str) -> None:
    """Print a summary table of a report.json."""
    ctx.exit(_report_impl(path))


if __name__ == "__main__":
    sys.exit(main())
