"""Run configuration: JSON config file, command-line overrides and environment."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import fields
from pathlib import Path
from typing import Any

from hybrid_levelset.constants import DEFAULT_B
from hybrid_levelset.constants import DEFAULT_I
from hybrid_levelset.constants import DEFAULT_J
from hybrid_levelset.constants import DEFAULT_K_GRID
from hybrid_levelset.constants import DEFAULT_NU
from hybrid_levelset.constants import DEFAULT_RESOLUTION
from hybrid_levelset.constants import DEFAULT_THREADS
from hybrid_levelset.constants import DEFAULT_TAU
from hybrid_levelset.constants import ENV_THREADS
from hybrid_levelset.constants import ERROR_METRIC_LEBESGUE
from hybrid_levelset.constants import ERROR_METRIC_PROBABILITY
from hybrid_levelset.constants import LABEL_CASE
from hybrid_levelset.constants import LABEL_CONTROL
from hybrid_levelset.constants import MIN_RESOLUTION
from hybrid_levelset.errors import ConfigError

SPLIT_MODES = ("margin", "calibrated")
BANDWIDTH_RULES = ("lscv", "reference")


@dataclass
class RunConfig:
    """Every setting of an estimate or simulate run."""

    input: str | None = None
    out: str = "."
    tau: float | None = None
    t: float | None = None
    nu: float = DEFAULT_NU
    I: int = DEFAULT_I
    delta: float | None = None
    B: int = DEFAULT_B
    M_mc: int | None = None
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    J: int = DEFAULT_J
    r_m0: float | None = None
    r_M0: float | None = None
    resolution: int = DEFAULT_RESOLUTION
    seed: int = 0
    calibrate: bool = True
    label: str | None = None
    window: tuple[float, float, float, float] | None = None
    error_metric: str = ERROR_METRIC_PROBABILITY
    truth: str | None = None
    truth_bbox: tuple[float, float, float, float] | None = None
    margin_m: float | None = None
    record_timings: bool = False
    density: str = "two-discs"
    n_grid: tuple[int, ...] = (500, 1000)
    reps: int = 2
    split_mode: str = "margin"
    bandwidth_rule: str = "lscv"

    @property
    def threshold_mode(self) -> bool:
        """True when a raw density threshold t is used instead of a probability level."""
        return self.t is not None

    def validate(self) -> None:
        """Check ranges and fill the default probability level.

        Raises:
            ConfigError: If any value is outside its documented range.
        """
        if self.tau is not None and self.t is not None:
            raise ConfigError("tau and t are mutually exclusive")
        if self.tau is None and self.t is None:
            self.tau = DEFAULT_TAU
        if self.tau is not None and not (0 < self.tau < 1):
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.t is not None and not self.t > 0:
            raise ConfigError(f"t must be positive, got {self.t}")
        if not (0 < self.nu <= 1):
            raise ConfigError(f"nu must lie in (0, 1], got {self.nu}")
        if self.I < 0:
            raise ConfigError(f"I must be non-negative, got {self.I}")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        for name in ("B", "J", "reps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.M_mc is not None and self.M_mc < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M_mc}")
        if not self.k_grid or any(k < 1 or k % 2 == 0 for k in self.k_grid):
            raise ConfigError(f"k values must be odd positive integers, got {list(self.k_grid)}")
        for name in ("r_m0", "r_M0", "margin_m"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if self.r_m0 is not None and self.r_M0 is not None and not self.r_m0 < self.r_M0:
            raise ConfigError(f"the bracket needs r_m0 < r_M0, got ({self.r_m0}, {self.r_M0})")
        if self.resolution < MIN_RESOLUTION:
            raise ConfigError(f"resolution must be at least {MIN_RESOLUTION}, got {self.resolution}")
        if self.label not in (None, LABEL_CASE, LABEL_CONTROL):
            raise ConfigError(f"label must be '{LABEL_CASE}' or '{LABEL_CONTROL}', got {self.label!r}")
        if self.error_metric not in (ERROR_METRIC_PROBABILITY, ERROR_METRIC_LEBESGUE):
            raise ConfigError(f"error metric must be '{ERROR_METRIC_PROBABILITY}' or '{ERROR_METRIC_LEBESGUE}'")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split mode must be one of {', '.join(SPLIT_MODES)}, got {self.split_mode!r}")
        if self.bandwidth_rule not in BANDWIDTH_RULES:
            raise ConfigError(f"bandwidth rule must be one of {', '.join(BANDWIDTH_RULES)}, got {self.bandwidth_rule!r}")
        if not self.n_grid or any(n < 2 for n in self.n_grid):
            raise ConfigError(f"sample sizes must be at least 2, got {list(self.n_grid)}")
        for name in ("window", "truth_bbox"):
            box = getattr(self, name)
            if box is not None and (len(box) != 4 or not (box[0] < box[2] and box[1] < box[3])):
                raise ConfigError(f"{name} must be xmin,ymin,xmax,ymax with xmin < xmax and ymin < ymax")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


_TUPLE_FIELDS = {"k_grid", "n_grid", "window", "truth_bbox"}


def _normalize(key: str, value: Any) -> Any:
    if key in _TUPLE_FIELDS and value is not None:
        return tuple(value)
    return value


def load_run_config(config_path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Load configuration: defaults, then the JSON file, then non-None overrides.

    Args:
        config_path: Optional flat JSON document whose keys mirror RunConfig fields
        overrides: Values from the command line; None means "not given"

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: For unreadable files, unknown keys or out-of-range values.
    """
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {}

    if config_path is not None:
        try:
            document = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {config_path}: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update({key: _normalize(key, value) for key, value in document.items()})

    for key, value in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown option {key!r}")
        if value is not None:
            values[key] = _normalize(key, value)

    try:
        config = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    config.validate()
    return config


def load_worker_count() -> int:
    """Worker cap from LEVELSET_THREADS (default 1)."""
    raw = os.getenv(ENV_THREADS, str(DEFAULT_THREADS)).strip()
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {workers}")
    return workers
