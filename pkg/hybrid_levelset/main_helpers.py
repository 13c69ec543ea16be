"""Helper functions for main.py: logging set-up, start-up checks and option parsing."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from hybrid_levelset.config import RunConfig
from hybrid_levelset.constants import ENV_THREADS
from hybrid_levelset.constants import LOG_FORMAT
from hybrid_levelset.errors import BandwidthSelectionError
from hybrid_levelset.errors import CalibrationError
from hybrid_levelset.errors import ConfigError
from hybrid_levelset.errors import DegenerateGeometryError
from hybrid_levelset.errors import EmptyInputError
from hybrid_levelset.errors import EmptyLevelSetError
from hybrid_levelset.errors import IngestError
from hybrid_levelset.errors import InvalidBracketError
from hybrid_levelset.errors import LevelSetError
from hybrid_levelset.errors import ReportSchemaError

REMEDIATION_HINTS: dict[type[LevelSetError], str] = {
    IngestError: "Check the CSV: rows must be x,y or x,y,label with label case or control.",
    EmptyInputError: "The selected input holds no points; check --label and --window.",
    BandwidthSelectionError: "LSCV needs at least 5 points with two distinct values per coordinate.",
    InvalidBracketError: "Pass a smaller lower bracket with --bracket rm,rM.",
    EmptyLevelSetError: "No point clears the upper threshold; lower --tau or --t.",
    CalibrationError: "Reduce --I or --delta, or use --no-calibrate for the margin split.",
    ConfigError: "Run with --help for the accepted ranges.",
    DegenerateGeometryError: "Use the raster output; the generators do not span an area.",
    ReportSchemaError: "Re-run 'levelset estimate' to regenerate the report.",
}


def setup_logging() -> None:
    """Set up logging configuration."""
    logging.basicConfig(
        level=logging.INFO,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stdout)],
    )


def log_startup_info(command: str, config: RunConfig, workers: int) -> None:
    """Log start-up information and the effective configuration."""
    logger = logging.getLogger(__name__)

    logger.info(f"🚀 levelset {command} starting...")
    logger.info(f"Python version: {sys.version}")
    logger.info(f"Working directory: {Path.cwd()}")
    logger.info(f"  {ENV_THREADS}: {workers}")
    for key, value in config.to_dict().items():
        logger.debug(f"  {key}: {value}")
    sys.stdout.flush()


def validate_prerequisites(config: RunConfig, needs_input: bool = True) -> tuple[bool, str | None]:
    """Validate that input and output locations are usable.

    Args:
        config: Run configuration
        needs_input: Whether an input CSV is required

    Returns:
        Tuple of (success, error_message)
    """
    logger = logging.getLogger(__name__)

    if needs_input:
        logger.info(f"🔍 Checking input file: {config.input}")
        if not config.input or not Path(config.input).is_file():
            return False, f"❌ Input file not found: {config.input}"
        logger.info("✅ Input file found")

    out_dir = Path(config.out)
    if out_dir.exists() and not out_dir.is_dir():
        return False, f"❌ Output path {out_dir} exists and is not a directory"

    if config.truth and config.truth.lower().endswith(".pbm"):
        if not Path(config.truth).is_file():
            return False, f"❌ Truth bitmap not found: {config.truth}"
        if config.truth_bbox is None:
            return False, "❌ A truth bitmap needs --truth-bbox xmin,ymin,xmax,ymax"
    return True, None


def remediation_hint(error: LevelSetError) -> str | None:
    for error_type, hint in REMEDIATION_HINTS.items():
        if isinstance(error, error_type):
            return hint
    return None


def parse_float_list(value: str | None, expected: int | None = None, option: str = "option") -> tuple[float, ...] | None:
    """Parse "a,b,c" into floats; None passes through."""
    if value is None:
        return None
    try:
        numbers = tuple(float(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}", param_hint=option) from None
    if expected is not None and len(numbers) != expected:
        raise click.BadParameter(f"expected {expected} numbers, got {len(numbers)}", param_hint=option)
    return numbers


def parse_int_list(value: str | None, option: str = "option") -> tuple[int, ...] | None:
    if value is None:
        return None
    try:
        return tuple(int(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}", param_hint=option) from None
