"""Shared data types for spectrum-chromatograms, peaks and clusterings, plus CSV I/O.

An IMSC is stored row-major with retention time along the rows and reduced
inverse mobility (RIM) along the columns.  Grid coordinates are 1-based:
row ``r`` sits at ``r * retention_max / num_rows`` seconds and column ``t`` at
``t * rim_max / num_cols`` Vs/cm^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEVICE_MIN = -2048
DEVICE_MAX = 2047


class ImsemError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(ImsemError, ValueError):
    """A precondition of an operation was violated."""


class FormatError(ContractError):
    """A file does not follow the expected layout."""


# ---------------------------------------------------------------------------
# Axes and matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AxisConfig:
    num_rows: int
    num_cols: int
    retention_max: float = 600.0
    rim_max: float = 1.45
    voltage: float = 4830.0
    tube_length: float = 12.0

    def __post_init__(self):
        if self.num_rows < 1 or self.num_cols < 1:
            raise ContractError(f"grid must be at least 1x1, got {self.num_rows}x{self.num_cols}")
        if not (self.retention_max > 0 and self.rim_max > 0):
            raise ContractError("retention_max and rim_max must be positive")

    @property
    def retention_step(self) -> float:
        return self.retention_max / self.num_rows

    @property
    def rim_step(self) -> float:
        return self.rim_max / self.num_cols

    @property
    def retention(self) -> np.ndarray:
        """Retention time (s) of every row."""
        return np.arange(1, self.num_rows + 1) * self.retention_step

    @property
    def rim(self) -> np.ndarray:
        """Reduced inverse mobility (Vs/cm^2) of every column."""
        return np.arange(1, self.num_cols + 1) * self.rim_step


@dataclass(frozen=True, eq=False)
class Imsc:
    """Ion mobility spectrum-chromatogram: a read-only intensity matrix with its axes."""

    axes: AxisConfig
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape != (self.axes.num_rows, self.axes.num_cols):
            raise ContractError(
                f"matrix shape {values.shape} does not match axes "
                f"({self.axes.num_rows}, {self.axes.num_cols})"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values, retention_max=600.0, rim_max=1.45) -> "Imsc":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ContractError("IMSC values must be a 2D matrix")
        axes = AxisConfig(values.shape[0], values.shape[1], retention_max, rim_max)
        return cls(axes, values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values) -> "Imsc":
        """New IMSC on the same axes."""
        return Imsc(self.axes, values)

    def check_device_range(self) -> None:
        bad = (self.values < DEVICE_MIN) | (self.values > DEVICE_MAX)
        if bad.any():
            r, t = np.argwhere(bad)[0]
            raise FormatError(
                f"value {self.values[r, t]} at row {r + 1}, column {t + 1} "
                f"outside device range [{DEVICE_MIN}, {DEVICE_MAX}]"
            )


# ---------------------------------------------------------------------------
# Peaks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeakParams:
    """Seven-parameter 2D shifted inverse Gaussian peak (RIM dimension T, retention R)."""

    mu_t: float
    lambda_t: float
    o_t: float
    mu_r: float
    lambda_r: float
    o_r: float
    volume: float

    def __post_init__(self):
        for name in ("mu_t", "lambda_t", "mu_r", "lambda_r", "volume"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class PeakDescriptors:
    """Mean, standard deviation and mode per dimension, plus the volume."""

    mean_t: float
    std_t: float
    mode_t: float
    mean_r: float
    std_r: float
    mode_r: float
    volume: float


@dataclass(frozen=True)
class PeakLocation:
    measurement_id: str
    peak_id: int
    retention: float
    rim: float
    truth_label: Optional[int] = None

    def __post_init__(self):
        if self.retention < 0 or self.rim < 0:
            raise ContractError(f"peak coordinates must be non-negative: {self}")


def peak_coordinates(peaks: Sequence[PeakLocation]) -> np.ndarray:
    """n x 2 array of (retention, rim)."""
    return np.array([[p.retention, p.rim] for p in peaks], dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Clusterings
# ---------------------------------------------------------------------------


@dataclass
class ClusterParams:
    id: int
    omega: float
    mu_r: float
    sigma_r: float
    mu_t: float
    sigma_t: float


@dataclass
class Clustering:
    """Hard clustering of n peaks, with the describing cluster parameters.

    ``assignments[i]`` is the ``id`` of the cluster peak ``i`` belongs to.
    ``memberships`` optionally holds the soft n x C matrix whose columns follow
    the order of ``clusters``.
    """

    assignments: np.ndarray
    clusters: list[ClusterParams]
    memberships: Optional[np.ndarray] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        ids = {c.id for c in self.clusters}
        if len(ids) != len(self.clusters):
            raise ContractError("cluster ids must be unique")
        missing = set(np.unique(self.assignments).tolist()) - ids
        if missing:
            raise ContractError(f"assignments refer to unknown clusters {sorted(missing)}")

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def argmax_assignments(self) -> np.ndarray:
        """Cluster id with the largest membership for each peak."""
        if self.memberships is None:
            raise ContractError("clustering carries no membership matrix")
        ids = np.array([c.id for c in self.clusters])
        return ids[np.argmax(self.memberships, axis=1)]


# ---------------------------------------------------------------------------
# IMSC CSV
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("rows", "cols", "retention_max", "rim_max")


def _parse_header(line: str) -> dict:
    parts = line.strip().split(",")
    if not parts or parts[0] != "#imsc":
        raise FormatError(f"missing '#imsc' header, got {line.strip()[:40]!r}")
    fields = {}
    for part in parts[1:]:
        key, sep, value = part.partition("=")
        if not sep:
            raise FormatError(f"malformed header entry {part!r}")
        fields[key.strip()] = value.strip()
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise FormatError(f"header lacks {', '.join(missing)}")
    try:
        return {
            "rows": int(fields["rows"]),
            "cols": int(fields["cols"]),
            "retention_max": float(fields["retention_max"]),
            "rim_max": float(fields["rim_max"]),
        }
    except ValueError as exc:
        raise FormatError(f"malformed header value: {exc}") from None


def _cell(text: str, line_no: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"non-numeric cell {text!r} at line {line_no}, column {col}") from None


def read_imsc(path, format: str = "csv", device: bool = False) -> Imsc:
    """Read an IMSC from the package CSV layout.

    With ``device=True`` the values are additionally checked against the
    12-bit device range.
    """
    if format != "csv":
        raise ContractError(f"unsupported format {format!r}")
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header:
            raise FormatError(f"{path}: empty file")
        meta = _parse_header(header)
        try:
            axes = AxisConfig(meta["rows"], meta["cols"], meta["retention_max"], meta["rim_max"])
        except ContractError as exc:
            raise FormatError(f"{path}: {exc}") from None
        rows, cols = axes.num_rows, axes.num_cols

        axis_line = fh.readline()
        rim = axis_line.strip().split(",") if axis_line.strip() else []
        if len(rim) != cols:
            raise FormatError(f"{path}: RIM axis line has {len(rim)} entries, expected {cols}")
        for c, text in enumerate(rim, start=1):
            _cell(text, 2, c)

        values = np.empty((rows, cols), dtype=np.float64)
        reader = csv.reader(fh)
        count = 0
        for count, cells in enumerate(reader, start=1):
            line_no = count + 2
            if count > rows:
                if any(c.strip() for c in cells):
                    raise FormatError(f"{path}: more than {rows} data rows (line {line_no})")
                continue
            if len(cells) != cols + 1:
                raise FormatError(
                    f"{path}: data row {count} (line {line_no}) has {len(cells) - 1} cells, expected {cols}"
                )
            _cell(cells[0], line_no, 0)
            try:
                values[count - 1] = np.array(cells[1:], dtype=np.float64)
            except ValueError:
                for c, text in enumerate(cells[1:], start=1):
                    _cell(text, line_no, c)
                raise
        if count < rows:
            raise FormatError(f"{path}: expected {rows} data rows, found {count}")
    imsc = Imsc(axes, values)
    if device:
        imsc.check_device_range()
    return imsc


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_imsc(imsc: Imsc, path) -> None:
    """Write ``imsc`` in the package CSV layout (17 significant digits)."""
    path = Path(path)
    axes = imsc.axes
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"#imsc,rows={axes.num_rows},cols={axes.num_cols},"
            f"retention_max={_fmt(axes.retention_max)},rim_max={_fmt(axes.rim_max)}\n"
        )
        fh.write(",".join(_fmt(x) for x in axes.rim) + "\n")
        table = np.column_stack([axes.retention, imsc.values])
        np.savetxt(fh, table, fmt="%.17g", delimiter=",", newline="\n")


# ---------------------------------------------------------------------------
# Peak CSV
# ---------------------------------------------------------------------------

PEAK_COLUMNS = ("measurement", "peak_id", "retention_s", "rim_vs_cm2", "label")


def read_peaks(path, format: str = "csv") -> list[PeakLocation]:
    if format != "csv":
        raise ContractError(f"unsupported format {format!r}")
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty file")
        missing = [c for c in PEAK_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        peaks = []
        for line_no, row in enumerate(reader, start=2):
            try:
                label = row["label"].strip()
                peaks.append(
                    PeakLocation(
                        measurement_id=row["measurement"],
                        peak_id=int(row["peak_id"]),
                        retention=float(row["retention_s"]),
                        rim=float(row["rim_vs_cm2"]),
                        truth_label=int(label) if label else None,
                    )
                )
            except (TypeError, ValueError, AttributeError) as exc:
                raise FormatError(f"{path}: bad peak record at line {line_no}: {exc}") from None
    return peaks


def write_peaks(peaks: Iterable[PeakLocation], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PEAK_COLUMNS)
        for p in peaks:
            writer.writerow(
                [
                    p.measurement_id,
                    p.peak_id,
                    repr(float(p.retention)),
                    repr(float(p.rim)),
                    "" if p.truth_label is None else p.truth_label,
                ]
            )
