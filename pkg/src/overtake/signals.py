"""CAN signal schema, recordings, CSV/manifest I/O and trigger-centred cropping.

A recording is stored as an ``(n_frames, 10)`` float array whose columns
follow :data:`SIGNAL_NAMES`.  Columns 0-6 are continuous, 7-9 categorical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    InsufficientContext,
    MalformedRow,
    MissingTrigger,
    NonUniformRate,
    UnknownLabel,
)

SAMPLE_RATE_HZ = 10
FRAME_DT = 1.0 / SAMPLE_RATE_HZ
PRE_TRIGGER_FRAMES = 100  # 10 s before the trigger
POST_TRIGGER_FRAMES = 10  # trigger frame and the 0.9 s after it
CROP_FRAMES = PRE_TRIGGER_FRAMES + POST_TRIGGER_FRAMES

SIGNAL_NAMES = (
    "accel_pedal_pos",
    "dist_ahead",
    "speed_ahead",
    "rel_speed_left_wheel",
    "vehicle_speed",
    "lat_accel",
    "lon_accel",
    "lane_change_status",
    "left_indicator",
    "right_indicator",
)
N_SIGNALS = len(SIGNAL_NAMES)
CONTINUOUS = slice(0, 7)
CATEGORICAL = slice(7, 10)
N_CONTINUOUS = 7
N_CATEGORICAL = 3

(ACCEL_PEDAL, DIST_AHEAD, SPEED_AHEAD, REL_SPEED_LEFT, VEHICLE_SPEED,
 LAT_ACCEL, LON_ACCEL, LANE_CHANGE, LEFT_INDICATOR, RIGHT_INDICATOR) = range(10)

CSV_HEADER = ["t"] + [f"s{i}" for i in range(1, N_SIGNALS + 1)]
_RATE_TOL = 1e-6


class ClassLabel(IntEnum):
    NO_OVERTAKE = 0
    OVERTAKE = 1

    @property
    def manifest_name(self) -> str:
        return "overtake" if self is ClassLabel.OVERTAKE else "no_overtake"

    @classmethod
    def parse(cls, value) -> "ClassLabel":
        if isinstance(value, ClassLabel):
            return value
        names = {"overtake": cls.OVERTAKE, "no_overtake": cls.NO_OVERTAKE,
                 "class1": cls.OVERTAKE, "class0": cls.NO_OVERTAKE}
        if isinstance(value, str) and value.strip().lower() in names:
            return names[value.strip().lower()]
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool) and value in (0, 1):
            return cls(int(value))
        raise UnknownLabel(f"unknown class label {value!r}")


class SignalFrame(NamedTuple):
    """One 10-signal sample."""

    accel_pedal_pos: float
    dist_ahead: float
    speed_ahead: float
    rel_speed_left_wheel: float
    vehicle_speed: float
    lat_accel: float
    lon_accel: float
    lane_change_status: int
    left_indicator: int
    right_indicator: int


def validate_signals(signals) -> np.ndarray:
    """Check shape, finiteness, physical ranges and categorical domains.

    Returns a read-only float64 copy.  Raises :class:`MalformedRow` naming the
    first offending frame.
    """
    arr = np.array(signals, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != N_SIGNALS:
        raise MalformedRow(f"expected (n, {N_SIGNALS}) signals, got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    bad[:, ACCEL_PEDAL] |= (arr[:, ACCEL_PEDAL] < 0) | (arr[:, ACCEL_PEDAL] > 1)
    for col in (DIST_AHEAD, SPEED_AHEAD, VEHICLE_SPEED):
        bad[:, col] |= arr[:, col] < 0
    cat = arr[:, CATEGORICAL]
    bad[:, CATEGORICAL] |= (cat != 0) & (cat != 1)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise MalformedRow(
            f"frame {row}: {SIGNAL_NAMES[col]}={arr[row, col]!r} out of domain")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Recording:
    """A labelled 10 Hz trace.

    ``signals`` has one row per frame; frame ``i`` is at ``t0 + 0.1 * i``.
    """

    file_id: str
    truck_id: str
    signals: np.ndarray
    label: ClassLabel | None = None
    trigger_index: int | None = None
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "signals", validate_signals(self.signals))
        if self.label is not None:
            object.__setattr__(self, "label", ClassLabel.parse(self.label))
        if self.trigger_index is not None:
            ti = int(self.trigger_index)
            if not 0 <= ti < len(self):
                raise MissingTrigger(f"trigger_index {ti} outside 0..{len(self) - 1}")
            object.__setattr__(self, "trigger_index", ti)

    def __len__(self) -> int:
        return self.signals.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (self.file_id == other.file_id and self.truck_id == other.truck_id
                and self.label == other.label and self.trigger_index == other.trigger_index
                and self.t0 == other.t0 and self.signals.shape == other.signals.shape
                and bool(np.array_equal(self.signals, other.signals)))

    __hash__ = None

    @property
    def times(self) -> np.ndarray:
        return self.t0 + FRAME_DT * np.arange(len(self))

    def frame(self, i: int) -> SignalFrame:
        row = self.signals[i]
        return SignalFrame(*(float(v) for v in row[CONTINUOUS]),
                           *(int(v) for v in row[CATEGORICAL]))

    @property
    def frames(self) -> list[SignalFrame]:
        return [self.frame(i) for i in range(len(self))]

    def with_trigger(self, index: int | None) -> "Recording":
        return Recording(self.file_id, self.truck_id, self.signals, self.label, index, self.t0)


@dataclass(frozen=True, eq=False)
class CroppedRecording:
    """Exactly 110 frames; frame ``i`` sits at ``-10.0 + 0.1 * i`` s from the trigger."""

    source_file_id: str
    truck_id: str
    label: ClassLabel | None
    signals: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.signals)
        if arr.shape != (CROP_FRAMES, N_SIGNALS):
            raise InsufficientContext(f"cropped recording must be {CROP_FRAMES} frames, got {arr.shape}")

    def __len__(self) -> int:
        return self.signals.shape[0]

    @property
    def offsets_s(self) -> np.ndarray:
        return np.round(-PRE_TRIGGER_FRAMES * FRAME_DT + FRAME_DT * np.arange(CROP_FRAMES), 6)


def crop_around_trigger(rec: Recording) -> CroppedRecording:
    """Return frames ``[trigger - 100, trigger + 10)`` (half-open, trigger at offset 0)."""
    if rec.trigger_index is None:
        raise MissingTrigger(f"{rec.file_id}: recording has no trigger index")
    ti = rec.trigger_index
    if ti < PRE_TRIGGER_FRAMES:
        raise InsufficientContext(
            f"{rec.file_id}: trigger at frame {ti}, need {PRE_TRIGGER_FRAMES} frames before it")
    if len(rec) - ti < POST_TRIGGER_FRAMES:
        raise InsufficientContext(
            f"{rec.file_id}: only {len(rec) - ti} frames at/after trigger, need {POST_TRIGGER_FRAMES}")
    block = rec.signals[ti - PRE_TRIGGER_FRAMES: ti + POST_TRIGGER_FRAMES]
    return CroppedRecording(rec.file_id, rec.truck_id, rec.label, block)


# --------------------------------------------------------------------------
# CSV + manifest

def _parse_manifest_entry(entry) -> dict:
    if isinstance(entry, (str, bytes)):
        try:
            entry = json.loads(entry)
        except json.JSONDecodeError as exc:
            raise MalformedRow(f"manifest entry is not JSON: {exc}") from None
    if not isinstance(entry, dict) or "truck_id" not in entry:
        raise MalformedRow(f"manifest entry needs at least truck_id: {entry!r}")
    return entry


def file_id_for(name: str) -> str:
    return Path(name).stem


def parse_recording(csv_text: str, manifest_entry) -> Recording:
    """Parse one recording CSV using its manifest entry for identity and label.

    ``manifest_entry`` is a dict or its JSON text with keys ``file``,
    ``truck_id``, ``label`` and optionally ``trigger_index``.
    """
    entry = _parse_manifest_entry(manifest_entry)
    label = entry.get("label")
    label = None if label is None else ClassLabel.parse(label)
    file_id = entry.get("file_id") or file_id_for(entry.get("file", "recording"))

    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow("empty CSV") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise MalformedRow(f"bad header {header!r}, expected {','.join(CSV_HEADER)}")

    times, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(CSV_HEADER):
            raise MalformedRow(f"line {lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric field in {row!r}") from None
        if any(math.isnan(v) for v in values):
            raise MalformedRow(f"line {lineno}: NaN value")
        times.append(values[0])
        rows.append(values[1:])
    if not rows:
        raise MalformedRow("CSV has no data rows")

    t = np.asarray(times)
    if len(t) > 1:
        dt = np.diff(t)
        off = np.abs(dt - FRAME_DT) > _RATE_TOL
        if off.any():
            k = int(np.argmax(off))
            raise NonUniformRate(f"rows {k} -> {k + 1}: spacing {dt[k]:.6f} s, expected {FRAME_DT} s")

    signals = np.asarray(rows, dtype=np.float64)
    try:
        return Recording(file_id, str(entry["truck_id"]), signals, label,
                         entry.get("trigger_index"), float(t[0]))
    except MalformedRow as exc:
        raise MalformedRow(f"{file_id}: {exc}") from None


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_recording(rec: Recording) -> str:
    """CSV text for ``rec``; floats are written at full precision so parsing round-trips."""
    out = io.StringIO()
    out.write(",".join(CSV_HEADER) + "\n")
    t = rec.times
    for i in range(len(rec)):
        row = rec.signals[i]
        fields = [f"{t[i]:.6f}"]
        fields += [_fmt(v) for v in row[CONTINUOUS]]
        fields += [str(int(v)) for v in row[CATEGORICAL]]
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def manifest_entry(rec: Recording, file: str | None = None) -> dict:
    entry = {"file": file or f"{rec.file_id}.csv", "truck_id": rec.truck_id,
             "label": None if rec.label is None else rec.label.manifest_name}
    if rec.trigger_index is not None:
        entry["trigger_index"] = rec.trigger_index
    return entry


def write_fleet(recordings, directory) -> Path:
    """Write every recording as CSV plus a ``manifest.json`` listing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in recordings:
        name = f"{rec.file_id}.csv"
        (directory / name).write_text(serialize_recording(rec))
        entries.append(manifest_entry(rec, name))
    path = directory / "manifest.json"
    path.write_text(json.dumps(entries, indent=1) + "\n")
    return path


def read_manifest(directory) -> list[dict]:
    path = Path(directory) / "manifest.json"
    try:
        entries = json.loads(path.read_text())
    except FileNotFoundError:
        raise MalformedRow(f"no manifest.json in {directory}") from None
    except json.JSONDecodeError as exc:
        raise MalformedRow(f"{path}: {exc}") from None
    if isinstance(entries, dict):
        entries = entries.get("recordings", [])
    if not isinstance(entries, list):
        raise MalformedRow(f"{path}: expected a list of entries")
    return entries


def read_fleet(directory) -> list[Recording]:
    directory = Path(directory)
    recs = []
    for entry in read_manifest(directory):
        entry = _parse_manifest_entry(entry)
        try:
            text = (directory / entry["file"]).read_text()
        except (KeyError, FileNotFoundError) as exc:
            raise MalformedRow(f"manifest entry {entry!r}: {exc}") from None
        recs.append(parse_recording(text, entry))
    return recs
