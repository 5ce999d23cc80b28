import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import idle_signals
from oracles import two_pass_mean_std
from overtake.errors import InvalidConfig, TooShort, UnknownMoment
from overtake.features import (
    FEATURE_NAMES,
    N_FEATURES,
    WindowingConfig,
    WindowTable,
    crop_table,
    extract_windows,
    majority,
    moment_windows,
    n_windows,
    table_from_csv,
    table_to_csv,
    window_features,
    window_matrix,
)
from overtake.signals import LEFT_INDICATOR, VEHICLE_SPEED, ClassLabel, CroppedRecording


def crop(seed=0, label=ClassLabel.OVERTAKE, fid="f", truck="tk"):
    sig = idle_signals(110, seed)
    sig[:, 7:] = np.random.default_rng(seed).integers(0, 2, (110, 3))
    return CroppedRecording(fid, truck, label, sig)


def test_layout():
    assert N_FEATURES == len(FEATURE_NAMES) == 17
    assert FEATURE_NAMES[0].startswith("mean_") and FEATURE_NAMES[1].startswith("std_")
    assert all(n.startswith("maj_") for n in FEATURE_NAMES[14:])


def test_21_windows_with_offsets():
    ws = extract_windows(crop())
    assert len(ws) == 21
    assert [w.center_offset_s for w in ws] == [round(-9.5 + 0.5 * k, 6) for k in range(21)]
    assert all(w.label is ClassLabel.OVERTAKE and w.features.shape == (17,) for w in ws)


def test_window_k_covers_frames():
    c = crop(1)
    ws = extract_windows(c)
    for k in (0, 7, 20):
        assert np.array_equal(ws[k].features, window_features(c.signals[5 * k: 5 * k + 10]))


def test_small_window_counts():
    assert len(window_matrix(idle_signals(20), WindowingConfig(10, 5))) == 3
    with pytest.raises(TooShort):
        window_matrix(idle_signals(9), WindowingConfig(10, 5))


def test_config_validation():
    for L, H in ((0, 1), (5, 0), (5, 6)):
        with pytest.raises(InvalidConfig):
            WindowingConfig(L, H)


@settings(max_examples=200, deadline=None)
@given(N=st.integers(1, 300), L=st.integers(1, 40), data=st.data())
def test_window_count_formula(N, L, data):
    H = data.draw(st.integers(1, L))
    starts = [s for s in range(N) if s + L <= N and s % H == 0]
    assert n_windows(N, L, H) == len(starts)
    if N >= L:
        assert n_windows(N, L, H) == (N - L) // H + 1


def test_constant_speed():
    w = idle_signals(10)
    w[:, VEHICLE_SPEED] = 80.0
    f = window_features(w)
    assert f[2 * VEHICLE_SPEED] == 80.0 and f[2 * VEHICLE_SPEED + 1] == 0.0


def test_alternating_speed_against_two_pass():
    w = idle_signals(10)
    w[:, VEHICLE_SPEED] = [79, 81] * 5
    f = window_features(w)
    m, s = two_pass_mean_std(w[:, VEHICLE_SPEED])
    assert f[2 * VEHICLE_SPEED] == pytest.approx(m, rel=1e-12)
    assert f[2 * VEHICLE_SPEED + 1] == pytest.approx(s, rel=1e-12)


def test_left_indicator_majority():
    w = idle_signals(10)
    w[:, LEFT_INDICATOR] = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1]
    assert window_features(w)[14 + 1] == 1


def test_majority_examples():
    assert majority([1] * 6 + [0] * 4) == 1
    assert majority([0] * 10) == 0
    # every ordering of a 5/5 tie resolves to the last value
    for ones in itertools.combinations(range(10), 5):
        v = np.zeros(10)
        v[list(ones)] = 1
        assert majority(v) == v[-1]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_vectorised_matches_per_window(seed):
    c = crop(seed)
    M = window_matrix(c.signals)
    for k in range(21):
        f = window_features(c.signals[5 * k: 5 * k + 10])
        assert np.array_equal(M[k, 14:], f[14:])
        np.testing.assert_allclose(M[k, :14], f[:14], rtol=1e-12, atol=1e-12)
        for j in range(7):
            m, s = two_pass_mean_std(c.signals[5 * k: 5 * k + 10, j])
            assert abs(M[k, 2 * j] - m) <= 1e-12 * max(1.0, abs(m))
            assert abs(M[k, 2 * j + 1] - s) <= 1e-12 * max(1.0, abs(s))
    assert (M[:, 1:14:2] >= 0).all()
    assert np.isin(M[:, 14:], (0, 1)).all()


def test_moments():
    ws = extract_windows(crop())
    t = moment_windows(ws, "t")
    assert len(t) == 1 and t[0] is ws[19] and t[0].center_offset_s == 0.0
    t3 = moment_windows(ws, "t−3")
    assert len(t3) == 1 and t3[0] is ws[13] and t3[0].center_offset_s == -3.0
    assert moment_windows(ws, "t-1")[0] is ws[17] and moment_windows(ws, "t-2")[0] is ws[15]
    assert len(moment_windows(ws, "all")) == 21
    with pytest.raises(UnknownMoment):
        moment_windows(ws, "t-4")


def test_relabel_flips_only_labels():
    a = extract_windows(crop(5, ClassLabel.OVERTAKE))
    b = extract_windows(crop(5, ClassLabel.NO_OVERTAKE))
    assert all(x.label is ClassLabel.OVERTAKE and y.label is ClassLabel.NO_OVERTAKE for x, y in zip(a, b))
    assert all(np.array_equal(x.features, y.features) and x.center_offset_s == y.center_offset_s
               and x.file_id == y.file_id for x, y in zip(a, b))


def test_table_csv_round_trip():
    t = WindowTable.concat([crop_table(crop(i, ClassLabel(i % 2), f"f{i}")) for i in range(3)])
    back = table_from_csv(table_to_csv(t))
    assert np.array_equal(back.features, t.features) and np.array_equal(back.offsets, t.offsets)
    assert list(back.file_ids) == list(t.file_ids) and np.array_equal(back.labels, t.labels)
    assert table_to_csv(t).splitlines()[0] == "file_id,truck_id,label,center_offset_s," + ",".join(
        f"f{i}" for i in range(1, 18))
    assert len(WindowTable.from_samples(t.samples())) == 63
