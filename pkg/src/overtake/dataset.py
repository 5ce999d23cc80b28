"""Per-truck class-balanced split and feature standardisation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._seeding import rng_for
from .errors import EmptyClass, InvalidConfig, MissingFileWindows
from .features import WindowTable

DEFAULT_TRAIN_FRACTION = 0.7


@dataclass(frozen=True)
class TruckSplit:
    train_class0: tuple[str, ...]
    train_class1: tuple[str, ...]
    test_class0: tuple[str, ...]
    test_class1: tuple[str, ...]


@dataclass(frozen=True)
class SplitPlan:
    trucks: dict[str, TruckSplit]
    seed: int
    fraction: float = DEFAULT_TRAIN_FRACTION

    def train_files(self) -> list[str]:
        return [f for t in self.trucks.values() for f in t.train_class0 + t.train_class1]

    def test_files(self) -> list[str]:
        return [f for t in self.trucks.values() for f in t.test_class0 + t.test_class1]

    def counts(self) -> dict[str, dict[str, int]]:
        return {tid: {k: len(getattr(t, k)) for k in
                      ("train_class0", "train_class1", "test_class0", "test_class1")}
                for tid, t in self.trucks.items()}

    def to_json(self) -> str:
        doc = {"seed": self.seed, "fraction": self.fraction,
               "trucks": {tid: {k: list(getattr(t, k)) for k in
                                ("train_class0", "train_class1", "test_class0", "test_class1")}
                          for tid, t in self.trucks.items()}}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        doc = json.loads(text)
        trucks = {tid: TruckSplit(*(tuple(d[k]) for k in
                                    ("train_class0", "train_class1", "test_class0", "test_class1")))
                  for tid, d in doc["trucks"].items()}
        return cls(trucks, int(doc["seed"]), float(doc["fraction"]))


def plan_split(inventory: Mapping[str, Mapping[int, Sequence[str]]],
               fraction: float = DEFAULT_TRAIN_FRACTION, seed: int = 0) -> SplitPlan:
    """Balanced train/test assignment.

    ``inventory`` maps truck id to ``{0: class0 file ids, 1: class1 file ids}``.
    Per truck, ``floor(fraction * min(n0, n1))`` files of each class are drawn
    uniformly without replacement into training; the rest go to test.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidConfig(f"fraction must lie in (0, 1), got {fraction}")
    trucks = {}
    for tid in sorted(inventory):
        files = {c: sorted(inventory[tid].get(c, ())) for c in (0, 1)}
        for c in (0, 1):
            if not files[c]:
                raise EmptyClass(f"truck {tid} has no class{c} files")
        # the small epsilon keeps e.g. 0.7 * 10 from flooring to 6
        k = math.floor(fraction * min(len(files[0]), len(files[1])) + 1e-9)
        rng = rng_for(seed, "split", tid)
        parts = {}
        for c in (0, 1):
            pick = set(rng.choice(len(files[c]), size=k, replace=False).tolist())
            parts[c] = (tuple(f for i, f in enumerate(files[c]) if i in pick),
                        tuple(f for i, f in enumerate(files[c]) if i not in pick))
        trucks[tid] = TruckSplit(parts[0][0], parts[1][0], parts[0][1], parts[1][1])
    return SplitPlan(trucks, seed, fraction)


def inventory_from_table(table: WindowTable) -> dict[str, dict[int, list[str]]]:
    inv: dict[str, dict[int, set]] = {}
    for fid, tid, lab in zip(table.file_ids, table.truck_ids, table.labels):
        inv.setdefault(tid, {0: set(), 1: set()})[int(lab)].add(fid)
    return {tid: {c: sorted(v) for c, v in d.items()} for tid, d in inv.items()}


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_standardizer(X) -> Standardizer:
    """Column mean and sample std; a zero std is replaced by 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidConfig("standardizer needs at least 2 training rows")
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return Standardizer(mu, sd)


def apply_standardizer(std: Standardizer, X) -> np.ndarray:
    return std.apply(X)


@dataclass(frozen=True, eq=False)
class Dataset:
    train: WindowTable
    test: WindowTable
    standardizer: Standardizer | None = field(default=None)


def build_dataset(plan: SplitPlan, windows: WindowTable, standardize: bool = True) -> Dataset:
    """Gather the windows of each planned file into train and test tables."""
    if not isinstance(windows, WindowTable):
        windows = WindowTable.from_samples(windows)
    available = set(windows.file_ids.tolist())
    train_files, test_files = plan.train_files(), plan.test_files()
    missing = [f for f in train_files + test_files if f not in available]
    if missing:
        raise MissingFileWindows(f"{len(missing)} planned files have no windows, e.g. {missing[:3]}")
    train = windows.subset(np.isin(windows.file_ids, np.array(train_files, dtype=object)))
    test = windows.subset(np.isin(windows.file_ids, np.array(test_files, dtype=object)))
    std = fit_standardizer(train.features) if standardize and len(train) >= 2 else None
    return Dataset(train, test, std)
