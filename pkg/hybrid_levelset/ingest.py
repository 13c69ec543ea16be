"""CSV point ingestion and portable-bitmap truth masks."""

from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path

import numpy as np
import pandas as pd

from hybrid_levelset.constants import LABEL_CASE
from hybrid_levelset.constants import LABEL_CONTROL
from hybrid_levelset.constants import UNLABELLED
from hybrid_levelset.errors import IngestError
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.raster import BBox
from hybrid_levelset.raster import RasterMask

LABELS = (LABEL_CASE, LABEL_CONTROL)


@dataclass
class IngestResult:
    """Parsed clouds keyed by label ("all" when the file has no label column)."""

    clouds: dict[str, PointCloud]
    rows: int
    has_header: bool
    dropped_outside_window: int = 0
    duplicates: dict[str, int] = field(default_factory=dict)

    @property
    def labelled(self) -> bool:
        return UNLABELLED not in self.clouds

    def cloud(self, label: str | None = None) -> PointCloud:
        """The cloud for `label`; unlabelled files ignore it, labelled files require it."""
        if not self.labelled:
            return self.clouds[UNLABELLED]
        if label is None:
            raise IngestError(f"the file has a label column; choose one of {', '.join(LABELS)}")
        return self.clouds[label]

    def summary(self) -> dict[str, object]:
        return {
            "rows": self.rows,
            "header": self.has_header,
            "dropped_outside_window": self.dropped_outside_window,
            "counts": {label: len(cloud) for label, cloud in sorted(self.clouds.items())},
            "duplicates": dict(sorted(self.duplicates.items())),
        }


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_table(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        raise IngestError(f"{path} is empty") from None
    except pd.errors.ParserError as e:
        found = re.search(r"line (\d+)", str(e))
        raise IngestError(f"malformed row in {path}: {e}", int(found.group(1)) if found else None) from None


def ingest_csv(path: Path, window: BBox | None = None) -> IngestResult:
    """Read `x,y[,label]` rows; a non-numeric first row is taken as the header.

    Raises:
        IngestError: For a missing or empty file, or a malformed row (with its line number).
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"input file {path} does not exist")
    table = _read_table(path)
    # blank lines are kept as empty rows, so row i is line i + 1
    line_numbers = np.arange(1, len(table) + 1)
    blank = (table.isna() | (table == "")).all(axis=1).to_numpy()
    table, line_numbers = table[~blank].reset_index(drop=True), line_numbers[~blank]
    if table.empty:
        raise IngestError(f"{path} holds no data rows")
    if table.shape[1] not in (2, 3):
        raise IngestError(f"expected 2 or 3 columns (x, y[, label]), found {table.shape[1]}", int(line_numbers[0]))

    has_header = not (_is_number(table.iat[0, 0]) and _is_number(table.iat[0, 1]))
    columns = [0, 1, 2][: table.shape[1]]
    if has_header:
        names = [str(name).strip().lower() for name in table.iloc[0]]
        if {"x", "y"} <= set(names):
            columns = [names.index("x"), names.index("y")] + ([names.index("label")] if "label" in names else [])
        table, line_numbers = table.iloc[1:].reset_index(drop=True), line_numbers[1:]
        if table.empty:
            raise IngestError(f"{path} has a header but no data rows")

    coordinates = np.empty((len(table), 2))
    for axis, column in enumerate(columns[:2]):
        values = pd.to_numeric(table.iloc[:, column].str.strip(), errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raw = table.iat[int(bad[0]), column]
            raise IngestError(f"coordinate {raw!r} is not a finite number", int(line_numbers[bad[0]]))
        coordinates[:, axis] = values

    labels = None
    if len(columns) == 3:
        labels = table.iloc[:, columns[2]].str.strip().str.lower().to_numpy()
        unknown = np.flatnonzero(~np.isin(labels, LABELS))
        if unknown.size:
            raise IngestError(
                f"label {labels[unknown[0]]!r} is not one of {', '.join(LABELS)}", int(line_numbers[unknown[0]])
            )

    dropped = 0
    if window is not None:
        xmin, ymin, xmax, ymax = window
        x, y = coordinates[:, 0], coordinates[:, 1]
        keep = (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        dropped = int((~keep).sum())
        if dropped:
            logging.warning(f"Dropped {dropped} rows outside the window {window}")
        coordinates = coordinates[keep]
        labels = labels[keep] if labels is not None else None

    if labels is None:
        clouds = {UNLABELLED: PointCloud(coordinates)}
    else:
        clouds = {label: PointCloud(coordinates[labels == label]) for label in LABELS}
    duplicates = {label: cloud.duplicate_count for label, cloud in clouds.items()}
    if any(duplicates.values()):
        logging.warning(f"Duplicate points found: {duplicates}")
    logging.info(f"📥 Read {len(coordinates)} points from {path}")
    return IngestResult(clouds, rows=len(table), has_header=has_header, dropped_outside_window=dropped, duplicates=duplicates)


def _pbm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping comments; return them and the offset after."""
    tokens: list[bytes] = []
    position = 0
    while len(tokens) < count:
        while position < len(data) and data[position : position + 1].isspace():
            position += 1
        if data[position : position + 1] == b"#":
            while position < len(data) and data[position : position + 1] not in (b"\n", b"\r"):
                position += 1
            continue
        start = position
        while position < len(data) and not data[position : position + 1].isspace() and data[position : position + 1] != b"#":
            position += 1
        if start == position:
            raise IngestError("truncated PBM header")
        tokens.append(data[start:position])
    return tokens, position


def read_pbm(path: Path, bbox: BBox) -> RasterMask:
    """Load a square P1 or P4 bitmap as a mask over `bbox`; black (1) pixels are set.

    The first bitmap row is the top of the box.
    """
    data = Path(path).read_bytes()
    (magic, width_token, height_token), offset = _pbm_tokens(data, 3)
    width, height = int(width_token), int(height_token)
    if width != height:
        raise IngestError(f"truth bitmap must be square, got {width}x{height}")
    if magic == b"P1":
        body = re.sub(rb"#[^\n]*", b"", data[offset:])
        digits = np.frombuffer(re.sub(rb"\s", b"", body), dtype=np.uint8) - ord("0")
        if digits.size < width * height:
            raise IngestError(f"P1 bitmap holds {digits.size} pixels, expected {width * height}")
        bits = digits[: width * height].reshape(height, width).astype(bool)
    elif magic == b"P4":
        row_bytes = (width + 7) // 8
        raw = np.frombuffer(data[offset + 1 : offset + 1 + row_bytes * height], dtype=np.uint8)
        if raw.size < row_bytes * height:
            raise IngestError("P4 bitmap is truncated")
        bits = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width].astype(bool)
    else:
        raise IngestError(f"unsupported bitmap format {magic!r}; expected P1 or P4")
    return RasterMask(bbox, width, np.flipud(bits))


def write_pbm(mask: RasterMask, path: Path) -> Path:
    """Write a mask as an ASCII P1 bitmap (top row first)."""
    rows = np.flipud(mask.bits).astype(int)
    buffer = io.StringIO()
    buffer.write(f"P1\n{mask.resolution} {mask.resolution}\n")
    for row in rows:
        buffer.write(" ".join(str(v) for v in row) + "\n")
    Path(path).write_text(buffer.getvalue(), encoding="ascii")
    return Path(path)
