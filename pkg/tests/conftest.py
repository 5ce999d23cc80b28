import numpy as np
import pytest

from overtake.signals import (
    DIST_AHEAD,
    LANE_CHANGE,
    N_SIGNALS,
    REL_SPEED_LEFT,
    VEHICLE_SPEED,
    ClassLabel,
    Recording,
)


def idle_signals(n: int, seed: int = 0) -> np.ndarray:
    """A valid trace on which the default trigger rule never fires."""
    rng = np.random.default_rng(seed)
    sig = np.zeros((n, N_SIGNALS))
    sig[:, 0] = rng.uniform(0.2, 0.4, n)
    sig[:, 1] = rng.uniform(50, 150, n)
    sig[:, 2] = rng.uniform(60, 80, n)
    sig[:, 3] = rng.normal(0, 0.05, n)
    sig[:, 4] = rng.uniform(60, 80, n)
    sig[:, 5] = rng.normal(0, 0.1, n)
    sig[:, 6] = rng.normal(0, 0.1, n)
    return sig


def fire_at(sig: np.ndarray, i: int) -> np.ndarray:
    sig = sig.copy()
    sig[i, LANE_CHANGE] = 1
    sig[i, VEHICLE_SPEED] = 70.0
    sig[i, DIST_AHEAD] = 100.0
    sig[i, REL_SPEED_LEFT] = 0.5
    return sig


def make_recording(n=650, trigger=None, label=ClassLabel.OVERTAKE, file_id="f0", truck_id="truck1",
                   seed=0, annotate=False):
    sig = idle_signals(n, seed)
    if trigger is not None:
        sig = fire_at(sig, trigger)
    return Recording(file_id, truck_id, sig, label, trigger if annotate else None)


@pytest.fixture(scope="session")
def small_fleet():
    from overtake.synth import FleetConfig, generate_fleet
    return generate_fleet(FleetConfig(trucks=(("ta", 12, 14), ("tb", 10, 9)), seed=3))


@pytest.fixture(scope="session")
def small_windows(small_fleet):
    from overtake.pipeline import recordings_to_windows
    return recordings_to_windows(small_fleet.recordings)
