"""Precondition trigger: the logger's instantaneous activation rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlreadyAnnotated, InvalidConfig, NoTriggerFound
from .signals import DIST_AHEAD, LANE_CHANGE, REL_SPEED_LEFT, VEHICLE_SPEED, Recording


@dataclass(frozen=True)
class TriggerRule:
    """Thresholds of the trigger rule.  All comparisons are strict."""

    min_speed: float = 50.0  # km/h
    max_dist_ahead: float = 200.0  # m
    min_rel_speed: float = 0.1  # km/h
    lane_change_required: bool = True

    def __post_init__(self):
        for name in ("min_speed", "max_dist_ahead", "min_rel_speed"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidConfig(f"{name} must be finite")
        if self.min_speed <= 0:
            raise InvalidConfig("min_speed must be positive")


def trigger_mask(signals: np.ndarray, rule: TriggerRule = TriggerRule()) -> np.ndarray:
    """Per-frame truth value of the trigger predicate."""
    s = np.asarray(signals)
    mask = ((s[:, VEHICLE_SPEED] > rule.min_speed)
            & (s[:, DIST_AHEAD] < rule.max_dist_ahead)
            & (s[:, REL_SPEED_LEFT] > rule.min_rel_speed))
    if rule.lane_change_required:
        mask &= s[:, LANE_CHANGE] == 1
    return mask


def detect_trigger(rec: Recording, rule: TriggerRule = TriggerRule()) -> int | None:
    """Index of the first frame satisfying the rule, or ``None``."""
    mask = trigger_mask(rec.signals, rule)
    if not mask.any():
        return None
    return int(np.argmax(mask))


def annotate_trigger(rec: Recording, rule: TriggerRule = TriggerRule()) -> Recording:
    if rec.trigger_index is not None:
        raise AlreadyAnnotated(f"{rec.file_id}: already has trigger at {rec.trigger_index}")
    idx = detect_trigger(rec, rule)
    if idx is None:
        raise NoTriggerFound(f"{rec.file_id}: no frame satisfies the trigger rule")
    return rec.with_trigger(idx)
