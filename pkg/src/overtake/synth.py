"""Seeded synthetic CAN fleet.

Continuous signals are discretised Ornstein-Uhlenbeck processes around
per-truck and per-file baselines.  Every file gets a planted lane-change
episode whose first frame is the first frame satisfying the trigger rule.
Overtake files additionally ramp accelerator, speed, lateral/longitudinal
acceleration, closing distance, relative wheel speed and left-indicator use
over the 5 s before the trigger, scaled by ``drift_strength``.  With
``drift_strength == 0`` both classes are drawn from the same distribution.

The constants below shape plausible-looking traces; they make no claim about
real truck dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ._seeding import rng_for
from .errors import InvalidConfig
from .signals import (
    ACCEL_PEDAL,
    DIST_AHEAD,
    FRAME_DT,
    LANE_CHANGE,
    LAT_ACCEL,
    LEFT_INDICATOR,
    LON_ACCEL,
    N_SIGNALS,
    POST_TRIGGER_FRAMES,
    PRE_TRIGGER_FRAMES,
    REL_SPEED_LEFT,
    RIGHT_INDICATOR,
    SPEED_AHEAD,
    VEHICLE_SPEED,
    ClassLabel,
    Recording,
)

RAMP_S = 5.0
# class-1 ramp amplitudes at drift_strength == 1
SPEED_GAIN = 2.0  # km/h
DIST_GAIN = 12.5  # m
REL_GAIN = 0.125  # km/h
PEDAL_GAIN = 0.11
LAT_GAIN = 0.4  # m/s^2, sign drawn per file
LON_GAIN = 0.075  # m/s^2
REFERENCE_INVENTORY = (("truck1", 107, 386), ("truck2", 151, 55), ("truck3", 6, 7))


@dataclass(frozen=True)
class TruckSpec:
    truck_id: str
    n_class0: int
    n_class1: int


@dataclass(frozen=True)
class FleetConfig:
    trucks: tuple = ()
    seed: int = 0
    noise_scale: float = 1.0
    drift_strength: float = 1.0
    trace_len_s: float = 65.0
    trigger_at_s: float = 20.0
    trigger_jitter_s: float = 5.0

    def __post_init__(self):
        trucks = tuple(t if isinstance(t, TruckSpec) else TruckSpec(*t) for t in self.trucks)
        object.__setattr__(self, "trucks", trucks)
        for t in trucks:
            if t.n_class0 < 0 or t.n_class1 < 0:
                raise InvalidConfig(f"negative file count for {t.truck_id}")
        if len({t.truck_id for t in trucks}) != len(trucks):
            raise InvalidConfig("duplicate truck ids")
        if self.noise_scale < 0 or self.drift_strength < 0 or self.trigger_jitter_s < 0:
            raise InvalidConfig("noise_scale, drift_strength and trigger_jitter_s must be >= 0")
        earliest = self.trigger_at_s - self.trigger_jitter_s
        latest = self.trigger_at_s + self.trigger_jitter_s
        if round(earliest / FRAME_DT) < PRE_TRIGGER_FRAMES:
            raise InvalidConfig("trigger must sit at least 10 s into the trace")
        if round(self.trace_len_s / FRAME_DT) - round(latest / FRAME_DT) < POST_TRIGGER_FRAMES + 1:
            raise InvalidConfig("trigger must sit more than 1 s before the end of the trace")

    @property
    def n_frames(self) -> int:
        return int(round(self.trace_len_s / FRAME_DT))


@dataclass(frozen=True)
class Fleet:
    recordings: tuple
    manifest: tuple
    planted_triggers: dict = field(default_factory=dict)

    def inventory(self) -> dict:
        inv: dict = {}
        for r in self.recordings:
            inv.setdefault(r.truck_id, {0: [], 1: []})[int(r.label)].append(r.file_id)
        return inv


def replicate_tableI_inventory(seed: int = 0, **kwargs) -> FleetConfig:
    return FleetConfig(trucks=tuple(TruckSpec(*t) for t in REFERENCE_INVENTORY), seed=seed, **kwargs)


def _ou(rng, n, mean, theta, sigma, x0=None):
    """Exact-discretisation OU path of length n (theta in 1/s, sigma per sqrt(s))."""
    a = np.exp(-theta * FRAME_DT)
    sd = sigma * np.sqrt((1 - a * a) / (2 * theta))
    start = mean + (sigma / np.sqrt(2 * theta)) * rng.standard_normal() if x0 is None else x0
    drive = sd * rng.standard_normal(n)
    drive[0] = start
    x = lfilter([1.0], [1.0, -a], drive + np.r_[0.0, np.full(n - 1, (1 - a) * mean)])
    return x


def _truck_baseline(seed: int, truck_id: str) -> dict:
    rng = rng_for(seed, "truck", truck_id)
    return {"speed": rng.uniform(68.0, 82.0), "dist": rng.uniform(70.0, 130.0),
            "pedal": rng.uniform(0.30, 0.40)}


def generate_recording(cfg: FleetConfig, truck_id: str, label: ClassLabel, file_index: int,
                       file_id: str) -> tuple[Recording, int]:
    rng = rng_for(cfg.seed, "file", file_index)
    base = _truck_baseline(cfg.seed, truck_id)
    n = cfg.n_frames
    ns = cfg.noise_scale
    d = cfg.drift_strength if label is ClassLabel.OVERTAKE else 0.0
    jitter = int(round(cfg.trigger_jitter_s / FRAME_DT))
    T = int(round(cfg.trigger_at_s / FRAME_DT)) + int(rng.integers(-jitter, jitter + 1))
    sig = np.zeros((n, N_SIGNALS))

    # episode timing is drawn for both classes so the streams stay aligned
    ramp_len = int(round(RAMP_S / FRAME_DT))
    k = np.arange(n)
    ramp = np.clip((k - (T - ramp_len)) / ramp_len, 0.0, 1.0) ** 1.5
    lc_len = int(rng.integers(30, 60))
    uses_indicator = rng.random()
    ind_onset_s = rng.uniform(0.0, 1.0)
    late_onset_s = rng.uniform(1.0, 4.0)
    lat_sign = 1.0 if rng.random() < 0.5 else -1.0

    speed_mean = base["speed"] + rng.normal(0.0, 3.0)
    speed = _ou(rng, n, speed_mean, 0.05, 1.2 * ns) + SPEED_GAIN * d * ramp
    closing = _ou(rng, n, rng.uniform(1.0, 6.0), 0.1, 1.0 * ns)
    dist = _ou(rng, n, base["dist"] + rng.normal(0.0, 15.0), 0.05, 3.0 * ns) - DIST_GAIN * d * ramp
    rel = _ou(rng, n, 0.0, 1.0, 0.06 * ns) + REL_GAIN * d * ramp
    pedal = _ou(rng, n, base["pedal"] + rng.normal(0.0, 0.06), 0.5, 0.06 * ns) + PEDAL_GAIN * d * ramp
    lat = _ou(rng, n, 0.0, 1.0, 0.12 * ns) + LAT_GAIN * lat_sign * d * ramp
    lon = np.r_[0.0, np.diff(speed)] / 3.6 / FRAME_DT * 0.3 + _ou(rng, n, 0.0, 1.0, 0.05 * ns) \
        + LON_GAIN * d * ramp

    sig[:, VEHICLE_SPEED] = np.maximum(speed, 0.0)
    sig[:, SPEED_AHEAD] = np.maximum(speed - closing, 0.0)
    sig[:, DIST_AHEAD] = np.maximum(dist, 5.0)
    sig[:, REL_SPEED_LEFT] = rel
    sig[:, ACCEL_PEDAL] = np.clip(pedal, 0.0, 1.0)
    sig[:, LAT_ACCEL] = lat
    sig[:, LON_ACCEL] = lon

    lc = slice(T, min(T + lc_len, n))
    sig[lc, LANE_CHANGE] = 1.0
    # the rule must hold on the first lane-change frame
    sig[lc, VEHICLE_SPEED] = np.maximum(sig[lc, VEHICLE_SPEED], 50.5)
    sig[lc, DIST_AHEAD] = np.minimum(sig[lc, DIST_AHEAD], 199.0)
    sig[lc, REL_SPEED_LEFT] = np.maximum(sig[lc, REL_SPEED_LEFT], 0.15)

    p_indicator = 0.5 + 0.4 * min(d, 1.0)
    if uses_indicator < p_indicator:
        onset_s = ind_onset_s + min(d, 1.0) * late_onset_s
        start = max(T - int(round(onset_s / FRAME_DT)), 0)
        sig[start: min(T + lc_len, n), LEFT_INDICATOR] = 1.0
    # occasional right-indicator blinks, same law for both classes
    for _ in range(int(rng.poisson(0.6))):
        s0 = int(rng.integers(0, n))
        sig[s0: s0 + int(rng.integers(5, 25)), RIGHT_INDICATOR] = 1.0

    return Recording(file_id, truck_id, sig, label), T


def generate_fleet(cfg: FleetConfig) -> Fleet:
    """Byte-deterministic fleet; each file draws from its own (seed, index) stream."""
    if not cfg.trucks:
        raise InvalidConfig("fleet config lists no trucks")
    recs, manifest, planted = [], [], {}
    index = 0
    for truck in cfg.trucks:
        for label, count in ((ClassLabel.NO_OVERTAKE, truck.n_class0),
                             (ClassLabel.OVERTAKE, truck.n_class1)):
            for j in range(count):
                fid = f"{truck.truck_id}_c{int(label)}_{j:04d}"
                rec, T = generate_recording(cfg, truck.truck_id, label, index, fid)
                recs.append(rec)
                manifest.append({"file": f"{fid}.csv", "truck_id": truck.truck_id,
                                 "label": label.manifest_name})
                planted[fid] = T
                index += 1
    return Fleet(tuple(recs), tuple(manifest), planted)
