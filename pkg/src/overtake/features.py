"""Sliding-window features over trigger-centred crops.

Feature layout (17 columns)::

    mean_1, std_1, ..., mean_7, std_7, maj_8, maj_9, maj_10

where 1-7 are the continuous signals and 8-10 the categorical ones, in
:data:`overtake.signals.SIGNAL_NAMES` order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfig, TooShort, UnknownMoment
from .signals import (
    CATEGORICAL,
    CONTINUOUS,
    FRAME_DT,
    N_CATEGORICAL,
    N_CONTINUOUS,
    PRE_TRIGGER_FRAMES,
    SIGNAL_NAMES,
    ClassLabel,
    CroppedRecording,
)

N_FEATURES = 2 * N_CONTINUOUS + N_CATEGORICAL
FEATURE_NAMES = tuple(
    [f"{stat}_{SIGNAL_NAMES[i]}" for i in range(N_CONTINUOUS) for stat in ("mean", "std")]
    + [f"maj_{SIGNAL_NAMES[i]}" for i in range(N_CONTINUOUS, N_CONTINUOUS + N_CATEGORICAL)]
)

MOMENTS = ("t", "t-1", "t-2", "t-3", "all")
MOMENT_OFFSETS = {"t": 0.0, "t-1": -1.0, "t-2": -2.0, "t-3": -3.0}


@dataclass(frozen=True)
class WindowingConfig:
    window_len_frames: int = 10
    hop_frames: int = 5

    def __post_init__(self):
        if self.window_len_frames < 1:
            raise InvalidConfig("window_len_frames must be >= 1")
        if not 1 <= self.hop_frames <= self.window_len_frames:
            raise InvalidConfig("hop_frames must lie in [1, window_len_frames]")


@dataclass(frozen=True, eq=False)
class WindowSample:
    features: np.ndarray
    center_offset_s: float
    file_id: str
    truck_id: str
    label: ClassLabel | None


def n_windows(n_frames: int, window_len: int, hop: int) -> int:
    if n_frames < window_len:
        return 0
    return (n_frames - window_len) // hop + 1


def majority(values: Sequence) -> float:
    """Most frequent value; a tie goes to the tied value seen latest in the window."""
    vals = np.asarray(values).ravel()
    if vals.size == 0:
        raise ValueError("majority of an empty window")
    uniq, counts = np.unique(vals, return_counts=True)
    tied = uniq[counts == counts.max()]
    if tied.size == 1:
        return tied[0].item()
    for v in vals[::-1]:
        if v in tied:
            return v.item()
    raise AssertionError("unreachable")


def window_features(frames: np.ndarray) -> np.ndarray:
    """17 features for one window of frames (rows = frames, 10 signal columns)."""
    w = np.asarray(frames, dtype=np.float64)
    cont = w[:, CONTINUOUS]
    out = np.empty(N_FEATURES)
    out[0:2 * N_CONTINUOUS:2] = cont.mean(axis=0)
    out[1:2 * N_CONTINUOUS:2] = cont.std(axis=0, ddof=1) if len(w) > 1 else 0.0
    cat = w[:, CATEGORICAL]
    out[2 * N_CONTINUOUS:] = [majority(cat[:, j]) for j in range(N_CATEGORICAL)]
    return out


def _binary_majority(cat: np.ndarray) -> np.ndarray:
    # cat: (K, L, 3) in {0, 1}
    ones = cat.sum(axis=1)
    L = cat.shape[1]
    return np.where(2 * ones > L, 1.0, np.where(2 * ones < L, 0.0, cat[:, -1, :]))


def window_matrix(signals: np.ndarray, cfg: WindowingConfig = WindowingConfig()) -> np.ndarray:
    """All window feature vectors of a frame block, shape ``(K, 17)``."""
    s = np.asarray(signals, dtype=np.float64)
    L, H = cfg.window_len_frames, cfg.hop_frames
    K = n_windows(len(s), L, H)
    if K == 0:
        raise TooShort(f"{len(s)} frames is shorter than one {L}-frame window")
    # (K, 10, L) view -> (K, L, 10)
    win = np.lib.stride_tricks.sliding_window_view(s, L, axis=0)[::H][:K].transpose(0, 2, 1)
    out = np.empty((K, N_FEATURES))
    cont = win[:, :, CONTINUOUS]
    out[:, 0:2 * N_CONTINUOUS:2] = cont.mean(axis=1)
    out[:, 1:2 * N_CONTINUOUS:2] = cont.std(axis=1, ddof=1) if L > 1 else 0.0
    cat = win[:, :, CATEGORICAL]
    if np.isin(cat, (0.0, 1.0)).all():
        out[:, 2 * N_CONTINUOUS:] = _binary_majority(cat)
    else:
        for k in range(K):
            out[k, 2 * N_CONTINUOUS:] = [majority(cat[k, :, j]) for j in range(N_CATEGORICAL)]
    return out


def center_offsets(n_frames: int, cfg: WindowingConfig = WindowingConfig()) -> np.ndarray:
    """Window centres in seconds relative to the trigger (crop starts 10 s before it)."""
    L, H = cfg.window_len_frames, cfg.hop_frames
    k = np.arange(n_windows(n_frames, L, H))
    return np.round(-PRE_TRIGGER_FRAMES * FRAME_DT + FRAME_DT * (k * H + L / 2), 6)


def extract_windows(crop: CroppedRecording, cfg: WindowingConfig = WindowingConfig()) -> list[WindowSample]:
    feats = window_matrix(crop.signals, cfg)
    offsets = center_offsets(len(crop), cfg)
    samples = []
    for k in range(len(feats)):
        row = feats[k].copy()
        row.setflags(write=False)
        samples.append(WindowSample(row, float(offsets[k]), crop.source_file_id,
                                    crop.truck_id, crop.label))
    return samples


def normalize_moment(moment: str) -> str:
    m = str(moment).strip().lower().replace("−", "-").replace(" ", "")
    if m not in MOMENTS:
        raise UnknownMoment(f"unknown moment {moment!r}; expected one of {MOMENTS}")
    return m


def moment_mask(offsets: np.ndarray, moment: str) -> np.ndarray:
    m = normalize_moment(moment)
    offsets = np.asarray(offsets, dtype=np.float64)
    if m == "all":
        return np.ones(offsets.shape, dtype=bool)
    return np.abs(offsets - MOMENT_OFFSETS[m]) < 1e-9


def moment_windows(samples: Iterable[WindowSample], moment: str) -> list[WindowSample]:
    samples = list(samples)
    mask = moment_mask([s.center_offset_s for s in samples], moment)
    return [s for s, keep in zip(samples, mask) if keep]


# --------------------------------------------------------------------------
# Columnar form


@dataclass(frozen=True, eq=False)
class WindowTable:
    """Windows of many files as aligned arrays (one row per window)."""

    features: np.ndarray  # (n, 17)
    labels: np.ndarray  # (n,) int, -1 where unlabelled
    offsets: np.ndarray  # (n,) seconds
    file_ids: np.ndarray  # (n,) object
    truck_ids: np.ndarray  # (n,) object

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask) -> "WindowTable":
        return WindowTable(self.features[mask], self.labels[mask], self.offsets[mask],
                           self.file_ids[mask], self.truck_ids[mask])

    @classmethod
    def empty(cls) -> "WindowTable":
        return cls(np.empty((0, N_FEATURES)), np.empty(0, dtype=np.int64), np.empty(0),
                   np.empty(0, dtype=object), np.empty(0, dtype=object))

    @classmethod
    def from_samples(cls, samples: Iterable[WindowSample]) -> "WindowTable":
        samples = list(samples)
        if not samples:
            return cls.empty()
        return cls(
            np.vstack([s.features for s in samples]),
            np.array([-1 if s.label is None else int(s.label) for s in samples], dtype=np.int64),
            np.array([s.center_offset_s for s in samples], dtype=np.float64),
            np.array([s.file_id for s in samples], dtype=object),
            np.array([s.truck_id for s in samples], dtype=object),
        )

    @classmethod
    def concat(cls, tables: Sequence["WindowTable"]) -> "WindowTable":
        tables = [t for t in tables if len(t)]
        if not tables:
            return cls.empty()
        return cls(*(np.concatenate([getattr(t, f) for t in tables])
                     for f in ("features", "labels", "offsets", "file_ids", "truck_ids")))

    def samples(self) -> list[WindowSample]:
        return [WindowSample(self.features[i], float(self.offsets[i]), self.file_ids[i],
                             self.truck_ids[i], None if self.labels[i] < 0 else ClassLabel(int(self.labels[i])))
                for i in range(len(self))]


def crop_table(crop: CroppedRecording, cfg: WindowingConfig = WindowingConfig()) -> WindowTable:
    feats = window_matrix(crop.signals, cfg)
    K = len(feats)
    label = -1 if crop.label is None else int(crop.label)
    return WindowTable(feats, np.full(K, label, dtype=np.int64), center_offsets(len(crop), cfg),
                       np.array([crop.source_file_id] * K, dtype=object),
                       np.array([crop.truck_id] * K, dtype=object))


FEATURE_CSV_HEADER = ["file_id", "truck_id", "label", "center_offset_s"] + [f"f{i}" for i in range(1, N_FEATURES + 1)]


def table_to_csv(table: WindowTable) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(FEATURE_CSV_HEADER)
    for i in range(len(table)):
        w.writerow([table.file_ids[i], table.truck_ids[i], int(table.labels[i]),
                    repr(float(table.offsets[i]))] + [repr(float(v)) for v in table.features[i]])
    return out.getvalue()


def table_from_csv(text: str) -> WindowTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != FEATURE_CSV_HEADER:
        raise ValueError("not a feature CSV")
    body = [r for r in rows[1:] if r]
    if not body:
        return WindowTable.empty()
    return WindowTable(
        np.array([[float(v) for v in r[4:]] for r in body]),
        np.array([int(r[2]) for r in body], dtype=np.int64),
        np.array([float(r[3]) for r in body]),
        np.array([r[0] for r in body], dtype=object),
        np.array([r[1] for r in body], dtype=object),
    )
