import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jamfield.core import (
    WRIST_HEIGHT,
    Jammer,
    MicPlacement,
    Pose,
    Scenario,
    SpeechSource,
    Trajectory,
    Vec3,
    build_preset,
)
from jamfield.field import GridSpec, power_at, power_map, sweep_points
from jamfield.metrics import calibrate_tau, detect_blind_spots, onaxis_scenario
from jamfield.motion import (
    GestureParams,
    gen_gesture_trajectory,
    gen_walk_trajectory,
    pose_at,
    read_trajectory_csv,
    sjr_timeseries,
    static_trajectory,
    time_averaged_map,
    time_averaged_profile,
    write_trajectory_csv,
)
from jamfield.runner.recipes import deepest_blind_spot

BASE = Pose(Vec3(0.0, 0.0, WRIST_HEIGHT))
COARSE = GridSpec.square(-0.5, -0.5, 1.0, 0.02)


def bracelet(sources=1, pose=BASE):
    return Scenario((Jammer(build_preset("bracelet_24").with_sources(sources), pose),))


def yaw_offsets(traj, base=BASE):
    return np.array([math.degrees(math.remainder(p.yaw - base.yaw, 2 * math.pi)) for p in traj.frames])


def test_static_kind_all_frames_identical():
    tr = gen_gesture_trajectory("static", 2.0, 100, 3, BASE)
    assert len(set(tr.frames)) == 1 and len(tr.frames) == 201


@given(st.integers(0, 2**32), st.floats(0.5, 30.0))
def test_random_rotation_bounded(seed, duration):
    tr = gen_gesture_trajectory("random_rotation", duration, 50, seed, BASE)
    y = yaw_offsets(tr)
    assert y[0] == 0.0
    assert np.abs(y - y[0]).max() <= 45.0


@pytest.mark.parametrize("kind", ["point", "wave", "rotate", "random_rotation"])
def test_gestures_deterministic(kind):
    a = gen_gesture_trajectory(kind, 2.0, 100, 1, BASE)
    assert a == gen_gesture_trajectory(kind, 2.0, 100, 1, BASE)
    assert a != gen_gesture_trajectory(kind, 2.0, 100, 2, BASE)


def test_gesture_amplitudes():
    y = yaw_offsets(gen_gesture_trajectory("point", 4.0, 200, 0, BASE))
    assert np.abs(y).max() == pytest.approx(30.0, abs=0.1)
    wave = gen_gesture_trajectory("wave", 2.0, 200, 0, BASE)
    assert np.abs(yaw_offsets(wave)).max() == pytest.approx(45.0, abs=0.1)
    lateral = np.array([p.position.y for p in wave.frames])
    assert np.abs(lateral).max() == pytest.approx(0.02, abs=1e-4)
    rot = gen_gesture_trajectory("rotate", 4.0, 200, 0, BASE)
    tilt = np.degrees([p.pitch for p in rot.frames])
    assert np.abs(tilt).max() == pytest.approx(45.0, abs=0.1)


def test_unknown_gesture_rejected():
    with pytest.raises(ValueError):
        gen_gesture_trajectory("juggle", 1.0)
    with pytest.raises(ValueError):
        gen_gesture_trajectory("point", 0.0)


def test_walk_zero_length_is_static():
    tr = gen_walk_trajectory(0.0, 0.5, 100, BASE)
    assert set(tr.frames) == {BASE}


@given(st.floats(0.1, 1.6), st.floats(0.2, 2.0))
def test_walk_range_and_leg_time(length, speed):
    tr = gen_walk_trajectory(length, speed, 100, BASE)
    xy = np.array([[p.position.x, p.position.y] for p in tr.frames])
    assert np.hypot(xy[:, 0], xy[:, 1]).max() <= 0.8 + 1e-12
    x = xy[:, 0]
    # the first reversal is where x stops increasing
    turn = int(np.argmax(np.diff(x) < 0)) if np.any(np.diff(x) < 0) else len(x) - 1
    assert abs(turn / 100 - length / speed) <= 1 / 100 + 1e-9


def test_walk_beyond_range_rejected():
    with pytest.raises(ValueError):
        gen_walk_trajectory(2.0, 0.5)


def test_pose_at_examples():
    a, b = Pose(Vec3(0, 0, 0.1), 0.3), Pose(Vec3(0.2, -0.4, 0.1), 0.3)
    tr = Trajectory(10.0, (a, b))
    assert pose_at(tr, 0.0) == a and pose_at(tr, 0.1) == b
    mid = pose_at(tr, 0.05)
    assert (mid.position.x, mid.position.y) == pytest.approx((0.1, -0.2))
    assert mid.yaw == pytest.approx(0.3)
    with pytest.raises(ValueError):
        pose_at(tr, 0.2)


def test_pose_at_slerp_heading():
    tr = Trajectory(1.0, (Pose(yaw=0.0), Pose(yaw=math.radians(80))))
    assert math.degrees(pose_at(tr, 0.25).yaw) == pytest.approx(20.0)


def test_static_average_equals_power_map():
    s = bracelet()
    tr = static_trajectory(BASE, 1.0)
    a = time_averaged_map(s, tr, 0.4, COARSE)
    np.testing.assert_array_equal(a.values, power_map(s, COARSE).values)


def test_linear_average_two_frame_oracle():
    s = bracelet()
    p1, p2 = BASE, replace(BASE, yaw=math.radians(7))
    tr = Trajectory(5.0, (p1, p2))
    got = time_averaged_map(s, tr, 0.4, COARSE).values
    pts = COARSE.points()
    lin = (power_at(s, pts, (p1,)) + power_at(s, pts, (p2,))) / 2
    ref = 10 * np.log10(lin).reshape(COARSE.ny, COARSE.nx)
    ref = np.where(np.isnan(got), np.nan, ref)
    ref = ref - np.nanmax(ref)
    np.testing.assert_allclose(got, ref, atol=1e-9, equal_nan=True)
    db_mean = (10 * np.log10(power_at(s, pts, (p1,))) + 10 * np.log10(power_at(s, pts, (p2,)))) / 2
    db_mean = np.where(np.isnan(got.ravel()), np.nan, db_mean)
    assert np.nanmax(np.abs((db_mean - np.nanmax(db_mean)) - got.ravel())) > 0.5


def test_window_longer_than_trajectory():
    with pytest.raises(ValueError):
        time_averaged_map(bracelet(), static_trajectory(BASE, 0.2), 0.4, COARSE)


def test_motion_reduces_blind_spots():
    s = bracelet()
    static = detect_blind_spots(power_map(s, COARSE)).count
    tr = gen_gesture_trajectory("random_rotation", 4.0, 50, 0, BASE)
    moving = detect_blind_spots(time_averaged_map(s, tr, 0.4, COARSE)).count
    assert moving < static


def test_monotone_coverage_in_range():
    s = bracelet()
    counts = []
    for bound in (0.0, 15.0, 30.0, 45.0):
        tr = gen_gesture_trajectory("random_rotation", 4.0, 50, 0, BASE, GestureParams(bound_deg=bound))
        counts.append(detect_blind_spots(time_averaged_map(s, tr, 0.4, COARSE)).count)
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_frame_rate_stability():
    s = bracelet()
    g = GridSpec.square(-0.5, -0.5, 1.0, 0.05)
    a = time_averaged_map(s, gen_gesture_trajectory("random_rotation", 4.0, 100, 0, BASE), 0.4, g).values
    b = time_averaged_map(s, gen_gesture_trajectory("random_rotation", 4.0, 200, 0, BASE), 0.4, g).values
    assert np.nanmax(np.abs(a - b)) <= 0.2


def test_profile_smoothing():
    s = bracelet()
    static = time_averaged_profile(s, static_trajectory(BASE, 4.0), stop=359.0)
    moving = time_averaged_profile(s, gen_gesture_trajectory("random_rotation", 4.0, 50, 0, BASE), stop=359.0)
    assert np.std(moving.values) <= 0.5 * np.std(static.values)


@given(st.floats(-math.pi, math.pi))
def test_energy_conserved_over_yaw(yaw):
    s = bracelet()
    ring = sweep_points(s, 1.0, np.arange(0.0, 360.0, 1.0), WRIST_HEIGHT)
    ref = power_at(s, ring).sum()
    moved = power_at(s, ring, (replace(BASE, yaw=yaw),)).sum()
    assert abs(10 * math.log10(moved / ref)) <= 0.5


def blind_mic_scenario():
    mic = MicPlacement(Pose(Vec3(*deepest_blind_spot())), name="blind")
    return Scenario((Jammer(build_preset("bracelet_24"), BASE),), (mic,), SpeechSource(BASE.position))


def test_sjr_requires_speech():
    s = replace(blind_mic_scenario(), speech=None)
    with pytest.raises(ValueError):
        sjr_timeseries(s, static_trajectory(BASE, 0.5), "blind")


def test_sjr_series_length_and_speech_doubling():
    s = blind_mic_scenario()
    tr = gen_gesture_trajectory("wave", 1.0, 100, 0, BASE)
    a = sjr_timeseries(s, tr, "blind")
    assert len(a) == len(tr.frames)
    louder = replace(s, speech=replace(s.speech, level_dba_at_1m=s.speech.level_dba_at_1m + 20 * math.log10(2)))
    b = sjr_timeseries(louder, tr, "blind")
    np.testing.assert_allclose(b.sjr_db - a.sjr_db, -6.0206, atol=1e-3)


def test_static_blind_spot_below_tau():
    tau = calibrate_tau(onaxis_scenario(0.0))
    ser = sjr_timeseries(blind_mic_scenario(), static_trajectory(BASE, 2.0), "blind")
    assert np.all(ser.sjr_db < tau)


def test_random_rotation_exposes_most_windows():
    tau = calibrate_tau(onaxis_scenario(0.0))
    tr = gen_gesture_trajectory("random_rotation", 8.0, 100, 0, BASE)
    ser = sjr_timeseries(blind_mic_scenario(), tr, "blind")
    hits = [ser.sjr_db[i:i + 40].max() > tau for i in range(0, len(ser) - 39, 40)]
    assert np.mean(hits) >= 0.8


def test_trajectory_csv_roundtrip(tmp_path):
    tr = gen_gesture_trajectory("rotate", 1.0, 50, 0, BASE)
    p = tmp_path / "traj.csv"
    write_trajectory_csv(tr, p)
    assert p.read_text().splitlines()[0] == "t,x,y,z,yaw_deg,pitch_deg"
    back = read_trajectory_csv(p, "rotate")
    assert back.frame_rate == pytest.approx(50.0)
    for a, b in zip(tr.frames, back.frames):
        assert (a.yaw, a.pitch) == pytest.approx((b.yaw, b.pitch), abs=1e-12)
        assert a.position == b.position
