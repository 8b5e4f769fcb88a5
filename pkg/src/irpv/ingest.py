"""Frame-sequence and GPS ingestion for aerial IR inspection runs.

Frames arrive as numbered 16-bit binary PGM files (one video frame each),
GPS fixes as a CSV aligned by frame index, and row groupings as operator
written specs naming the frame range and corner plant IDs of each PV row.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Raw counts are centi-Kelvin by default: celsius = raw * scale + offset.
DEFAULT_TEMP_SCALE = 0.01
DEFAULT_TEMP_OFFSET = -273.15

FRAME_FILE_FORMAT = "frame_{index:06d}.pgm"
_FRAME_FILE_RE = re.compile(r"^frame_(\d+)\.pgm$")

GPS_HEADER = ("frame_index", "latitude", "longitude", "altitude")


class MissingFrame(Exception):
    """A numbered frame expected in the sequence is absent."""

    def __init__(self, index: int):
        super().__init__(f"frame {index} missing from sequence")
        self.index = index


class CorruptImage(Exception):
    """A frame file could not be decoded as 16-bit binary PGM."""


class MalformedRow(Exception):
    """A GPS CSV line could not be parsed."""

    def __init__(self, line_no: int, reason: str = ""):
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")
        self.line_no = line_no


class RangeViolation(Exception):
    """A GPS field exceeds its physical range."""

    def __init__(self, field_name: str, value: float):
        super().__init__(f"{field_name} out of range: {value}")
        self.field_name = field_name
        self.value = value


class UnknownFrame(Exception):
    """A row spec references a frame index that does not exist."""

    def __init__(self, index: int):
        super().__init__(f"row spec references unknown frame {index}")
        self.index = index


@dataclass(eq=False)
class Frame:
    """One thermal video frame of raw 16-bit counts (row-major raster)."""

    index: int
    raster: np.ndarray

    def __post_init__(self):
        self.raster = np.asarray(self.raster)
        if self.raster.ndim != 2 or self.raster.size == 0:
            raise ValueError("raster must be a nonempty 2-D array")

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]


@dataclass(eq=False)
class TemperatureFrame:
    """A frame converted to degrees Celsius."""

    index: int
    celsius: np.ndarray


@dataclass(frozen=True)
class GpsFix:
    frame_index: int
    latitude: float
    longitude: float
    altitude: float | None = None


@dataclass(frozen=True)
class RowSpec:
    """Operator-provided grouping of a frame range into one PV plant row.

    `bottom_left` and `top_right` are the plant IDs ("row.column") of the
    bottom-left and top-right modules of the row; `rows_per_stack` is the
    number of vertically stacked modules the row contains.
    """

    row_id: str
    first_frame: int
    last_frame: int
    bottom_left: str
    top_right: str
    rows_per_stack: int = 1
    orientation: str = "horizontal"

    def __post_init__(self):
        if self.first_frame > self.last_frame:
            raise ValueError(f"first_frame {self.first_frame} > last_frame {self.last_frame}")
        if self.rows_per_stack < 1:
            raise ValueError("rows_per_stack must be >= 1")
        if self.orientation not in ("horizontal", "vertical"):
            raise ValueError(f"bad orientation {self.orientation!r}")

    def to_dict(self) -> dict:
        return {
            "row_id": self.row_id,
            "first_frame": self.first_frame,
            "last_frame": self.last_frame,
            "bottom_left": self.bottom_left,
            "top_right": self.top_right,
            "rows_per_stack": self.rows_per_stack,
            "orientation": self.orientation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RowSpec":
        return cls(
            row_id=str(d["row_id"]),
            first_frame=int(d["first_frame"]),
            last_frame=int(d["last_frame"]),
            bottom_left=str(d["bottom_left"]),
            top_right=str(d["top_right"]),
            rows_per_stack=int(d.get("rows_per_stack", 1)),
            orientation=str(d.get("orientation", "horizontal")),
        )


@dataclass(eq=False)
class RowWorkUnit:
    """A RowSpec together with its (inclusive) frame slice."""

    spec: RowSpec
    frames: list[Frame] = field(default_factory=list)


# ---------------------------------------------------------------------------
# PGM container


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary 16-bit PGM (P5, maxval 65535, big-endian samples)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorruptImage(f"{path}: {exc}") from exc

    pos = 0
    fields: list[int] = []
    if data[:2] != b"P5":
        raise CorruptImage(f"{path}: not a binary PGM")
    pos = 2
    # Header tokens: width, height, maxval. '#' starts a comment to EOL.
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise CorruptImage(f"{path}: bad header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise CorruptImage(f"{path}: bad dimensions {width}x{height}")
    if not 256 <= maxval <= 65535:
        raise CorruptImage(f"{path}: expected 16-bit maxval, got {maxval}")
    expected = width * height * 2
    samples = data[pos : pos + expected]
    if len(samples) != expected:
        raise CorruptImage(f"{path}: truncated pixel data")
    raster = np.frombuffer(samples, dtype=">u2").reshape(height, width)
    return raster.astype(np.uint16)


def write_pgm(path: str | Path, raster: np.ndarray) -> None:
    """Write a 2-D uint16 raster as binary PGM (P5, maxval 65535, big-endian)."""
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError("raster must be 2-D")
    if raster.dtype != np.uint16:
        if np.any(raster < 0) or np.any(raster > 65535):
            raise ValueError("raster values outside uint16 range")
        raster = raster.astype(np.uint16)
    h, w = raster.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + raster.astype(">u2").tobytes())


# ---------------------------------------------------------------------------
# Sequence loading


def frame_path(dir_path: str | Path, index: int) -> Path:
    return Path(dir_path) / FRAME_FILE_FORMAT.format(index=index)


def list_frame_indices(dir_path: str | Path) -> list[int]:
    """Indices of all frame files present in a directory, sorted ascending."""
    indices = []
    for p in Path(dir_path).iterdir():
        m = _FRAME_FILE_RE.match(p.name)
        if m:
            indices.append(int(m.group(1)))
    return sorted(indices)


def load_frame_sequence(dir_path: str | Path) -> list[Frame]:
    """Load all frames in a directory, sorted by index.

    The numbering must be contiguous from the smallest index present; a gap
    raises MissingFrame. An empty directory yields an empty list.
    """
    found: dict[int, Path] = {}
    for p in Path(dir_path).iterdir():
        m = _FRAME_FILE_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        return []
    first = min(found)
    last = max(found)
    for index in range(first, last + 1):
        if index not in found:
            raise MissingFrame(index)
    return [Frame(index, read_pgm(found[index])) for index in range(first, last + 1)]


def load_frame_range(dir_path: str | Path, first: int, last: int) -> list[Frame]:
    """Load frames [first, last] inclusive directly by filename."""
    frames = []
    for index in range(first, last + 1):
        p = frame_path(dir_path, index)
        if not p.exists():
            raise UnknownFrame(index)
        frames.append(Frame(index, read_pgm(p)))
    return frames


# ---------------------------------------------------------------------------
# Calibration / normalization


def raw_to_celsius(
    frame: Frame,
    scale: float = DEFAULT_TEMP_SCALE,
    offset: float = DEFAULT_TEMP_OFFSET,
) -> TemperatureFrame:
    """Convert raw counts to Celsius: celsius = raw * scale + offset."""
    return TemperatureFrame(frame.index, frame.raster.astype(np.float64) * scale + offset)


def normalize_to_u8(tf: TemperatureFrame) -> np.ndarray:
    """Min/max normalize a temperature frame to [0, 255], floor-rounded.

    The frame minimum maps to 0 and the maximum to exactly 255. A constant
    frame has no usable range and comes back all-zero.
    """
    c = tf.celsius
    lo = float(np.min(c))
    hi = float(np.max(c))
    if hi == lo:
        return np.zeros(c.shape, dtype=np.uint8)
    q = (c - lo) / (hi - lo)
    return np.clip(np.floor(q * 255.0), 0, 255).astype(np.uint8)


def normalize_orientation(frame: Frame, spec: RowSpec, direction: str = "ccw") -> Frame:
    """Rotate vertical-row frames by 90 degrees so rows run horizontally.

    Horizontal rows pass through untouched. `direction` picks the rotation
    sense ("ccw" default, "cw" for cameras mounted the other way around).
    """
    if spec.orientation != "vertical":
        return frame
    if direction == "ccw":
        k = 1
    elif direction == "cw":
        k = 3
    else:
        raise ValueError(f"bad rotation direction {direction!r}")
    return Frame(frame.index, np.ascontiguousarray(np.rot90(frame.raster, k=k)))


# ---------------------------------------------------------------------------
# GPS


def parse_gps_csv(path: str | Path) -> list[GpsFix]:
    """Parse a GPS track CSV with header frame_index,latitude,longitude,altitude.

    The altitude field may be empty. Order is preserved.
    """
    fixes: list[GpsFix] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "missing header") from None
        if tuple(h.strip() for h in header) != GPS_HEADER:
            raise MalformedRow(1, f"bad header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(line_no, f"expected 4 fields, got {len(row)}")
            try:
                frame_index = int(row[0])
                latitude = float(row[1])
                longitude = float(row[2])
                altitude = float(row[3]) if row[3].strip() != "" else None
            except ValueError as exc:
                raise MalformedRow(line_no, str(exc)) from exc
            if abs(latitude) > 90.0:
                raise RangeViolation("latitude", latitude)
            if abs(longitude) > 180.0:
                raise RangeViolation("longitude", longitude)
            fixes.append(GpsFix(frame_index, latitude, longitude, altitude))
    return fixes


def write_gps_csv(path: str | Path, fixes: list[GpsFix]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GPS_HEADER)
        for f in fixes:
            alt = "" if f.altitude is None else repr(float(f.altitude))
            writer.writerow([f.frame_index, repr(float(f.latitude)), repr(float(f.longitude)), alt])


# ---------------------------------------------------------------------------
# Row grouping


def resolve_row_groups(specs: list[RowSpec], frames: list[Frame]) -> list[RowWorkUnit]:
    """Slice the frame sequence into per-row work units.

    Each unit carries frames [first_frame, last_frame] inclusive; units may
    overlap and single-frame units are allowed. Frames are matched by index,
    never reordered.
    """
    by_index = {f.index: f for f in frames}
    units = []
    for spec in specs:
        # endpoints checked first so a spec reaching past the sequence names
        # the offending bound, not the first index beyond it
        for endpoint in (spec.first_frame, spec.last_frame):
            if endpoint not in by_index:
                raise UnknownFrame(endpoint)
        unit_frames = []
        for index in range(spec.first_frame, spec.last_frame + 1):
            if index not in by_index:
                raise UnknownFrame(index)
            unit_frames.append(by_index[index])
        units.append(RowWorkUnit(spec, unit_frames))
    return units
