"""Wearer motion: gesture and walking trajectories, time-resolved field, SJR series.

Each frame is a quasi-static snapshot of the field. Gesture rates are a few
hertz at most, which is slow next to both the carrier and the speech band.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .capture import apply_occlusion, linear_speech_power, quadratic_jam_power
from .core import WRIST_HEIGHT, Pose, Scenario, Trajectory, Vec3
from .field import (
    GridSpec,
    PowerMap,
    AngularProfile,
    excluded_mask,
    group_amplitudes,
    normalize_map,
    power_at,
    profile_from_power,
    sweep_angles,
    sweep_points,
)
from .signal import rng_for

__all__ = [
    "GestureParams", "SJRSeries", "Trajectory", "GESTURE_KINDS",
    "gen_gesture_trajectory", "gen_walk_trajectory", "static_trajectory", "pose_at",
    "frame_poses", "time_averaged_map", "time_averaged_profile", "sjr_timeseries",
    "write_trajectory_csv", "read_trajectory_csv",
]

GESTURE_KINDS = ("static", "point", "wave", "rotate", "random_rotation")
DEFAULT_FRAME_RATE = 100.0
WORD_WINDOW = 0.4
# stochastic paths are drawn on this fixed clock and then sampled, so the
# frame rate picks samples from one underlying path instead of a new one
_OU_RATE = 1000.0


@dataclass(frozen=True)
class GestureParams:
    point_amp_deg: float = 30.0
    point_freq: float = 0.5
    wave_amp_deg: float = 45.0
    wave_freq: float = 1.0
    wave_shift: float = 0.02
    rotate_amp_deg: float = 45.0
    rotate_freq: float = 0.5
    bound_deg: float = 45.0
    ou_rate: float = 1.0
    smooth_s: float = 0.05


@dataclass(frozen=True, eq=False)
class SJRSeries:
    times: np.ndarray
    sjr_db: np.ndarray
    jam_db: np.ndarray = field(repr=False)
    speech_db: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.sjr_db.size


def _default_base() -> Pose:
    return Pose(Vec3(0.0, 0.0, WRIST_HEIGHT))


def _frame_times(duration: float, frame_rate: float) -> np.ndarray:
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not frame_rate > 0:
        raise ValueError("frame_rate must be positive")
    n = int(math.floor(duration * frame_rate + 1e-9)) + 1
    return np.arange(n) / frame_rate


def _offset(base: Pose, dyaw, dpitch, lateral=None) -> tuple[Pose, ...]:
    side = np.array([-math.sin(base.yaw), math.cos(base.yaw), 0.0])
    p0 = base.position.as_array()
    lateral = np.zeros_like(dyaw) if lateral is None else lateral
    return tuple(
        Pose(Vec3.of(p0 + side * float(s)), base.yaw + float(y), base.pitch + float(p))
        for y, p, s in zip(dyaw, dpitch, lateral)
    )


def static_trajectory(pose: Pose, duration: float, frame_rate: float = DEFAULT_FRAME_RATE) -> Trajectory:
    n = _frame_times(duration, frame_rate).size
    return Trajectory(frame_rate, (pose,) * n, "static")


def _ou_path(duration: float, rate: float, seed: int, label: str, smooth_s: float = 0.0):
    """Unit-variance Ornstein-Uhlenbeck path started at 0, exact discretization.

    A wrist does not move like Brownian motion, so the path is optionally
    smoothed with a Gaussian kernel of ``smooth_s`` seconds and shifted back to
    start at 0.
    """
    n = int(math.ceil(duration * _OU_RATE)) + 2
    dt = 1.0 / _OU_RATE
    a = math.exp(-rate * dt)
    b = math.sqrt(1.0 - a * a)
    z = rng_for(seed, "trajectory", label).standard_normal(n)
    x = np.empty(n)
    x[0] = 0.0
    for k in range(1, n):
        x[k] = a * x[k - 1] + b * z[k]
    if smooth_s > 0:
        x = gaussian_filter1d(x, smooth_s * _OU_RATE, mode="nearest")
        x = x - x[0]
    return np.arange(n) * dt, x


def gen_gesture_trajectory(kind: str, duration: float, frame_rate: float = DEFAULT_FRAME_RATE, seed: int = 0,
                           base: Pose | None = None, params: GestureParams | None = None) -> Trajectory:
    """Wrist trajectory for a named gesture, as offsets from ``base``.

    point
        Yaw sweep, ``point_amp_deg`` at ``point_freq``.
    wave
        Yaw sweep with a sideways hand translation in step.
    rotate
        Wrist roll: the ring axis precesses, tilting by up to
        ``rotate_amp_deg`` while the heading swings by the same amount.
    random_rotation
        Smoothed Ornstein-Uhlenbeck yaw pushed through ``tanh`` so it never
        leaves ``+-bound_deg``; starts at the base heading.

    The periodic kinds take their starting phase from ``seed``.
    """
    base = base or _default_base()
    params = params or GestureParams()
    t = _frame_times(duration, frame_rate)
    zero = np.zeros_like(t)
    if kind not in GESTURE_KINDS:
        raise ValueError(f"unknown gesture kind {kind!r}")
    if kind == "static":
        return Trajectory(frame_rate, (base,) * t.size, kind)
    if kind == "random_rotation":
        tt, x = _ou_path(duration, params.ou_rate, seed, kind, params.smooth_s)
        yaw = math.radians(params.bound_deg) * np.tanh(np.interp(t, tt, x))
        return Trajectory(frame_rate, _offset(base, yaw, zero), kind)
    phase = rng_for(seed, "trajectory", kind).uniform(0.0, 2 * math.pi)
    if kind == "point":
        yaw = math.radians(params.point_amp_deg) * np.sin(2 * math.pi * params.point_freq * t + phase)
        return Trajectory(frame_rate, _offset(base, yaw, zero), kind)
    if kind == "wave":
        s = np.sin(2 * math.pi * params.wave_freq * t + phase)
        yaw = math.radians(params.wave_amp_deg) * s
        return Trajectory(frame_rate, _offset(base, yaw, zero, params.wave_shift * s), kind)
    w = 2 * math.pi * params.rotate_freq * t + phase
    amp = math.radians(params.rotate_amp_deg)
    return Trajectory(frame_rate, _offset(base, amp * np.sin(w), amp * np.cos(w)), kind)


def gen_walk_trajectory(path_length: float, speed: float, frame_rate: float = DEFAULT_FRAME_RATE,
                        base: Pose | None = None, swing_deg: float = 20.0, stride: float = 0.7,
                        legs: int = 2, max_range: float = 0.8) -> Trajectory:
    """Back-and-forth walk along the base heading, centred on the base position.

    The arm swing is locked to distance travelled (one cycle per ``stride``),
    so a zero-length walk is a static pose.
    """
    base = base or _default_base()
    if not speed > 0:
        raise ValueError("speed must be positive")
    if path_length < 0:
        raise ValueError("path_length must be non-negative")
    if path_length / 2 > max_range:
        raise ValueError(f"a {path_length} m walk leaves the {max_range} m range")
    if path_length == 0:
        return Trajectory(frame_rate, (base,), "walk")
    leg_time = path_length / speed
    t = np.arange(int(math.floor(legs * leg_time * frame_rate + 1e-9)) + 1) / frame_rate
    travelled = speed * t
    u = np.mod(travelled, 2 * path_length)
    s = np.where(u <= path_length, u, 2 * path_length - u) - path_length / 2
    heading = np.array([math.cos(base.yaw), math.sin(base.yaw), 0.0])
    p0 = base.position.as_array()
    yaw = math.radians(swing_deg) * np.sin(2 * math.pi * travelled / stride)
    frames = tuple(Pose(Vec3.of(p0 + heading * float(si)), base.yaw + float(y), base.pitch)
                   for si, y in zip(s, yaw))
    return Trajectory(frame_rate, frames, "walk")


def _boresight(yaw: float, pitch: float) -> np.ndarray:
    return np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)])


def pose_at(traj: Trajectory, t: float) -> Pose:
    """Pose at time ``t``: linear in position, great-circle in heading."""
    if not 0.0 <= t <= traj.duration + 1e-12:
        raise ValueError(f"t = {t} s is outside [0, {traj.duration}] s")
    u = t * traj.frame_rate
    k = min(int(math.floor(u)), len(traj.frames) - 1)
    frac = u - k
    a = traj.frames[k]
    if frac <= 1e-12 or k == len(traj.frames) - 1:
        return a
    b = traj.frames[k + 1]
    pos = Vec3.of(a.position.as_array() * (1 - frac) + b.position.as_array() * frac)
    va, vb = _boresight(a.yaw, a.pitch), _boresight(b.yaw, b.pitch)
    omega = math.acos(float(np.clip(va @ vb, -1.0, 1.0)))
    if omega < 1e-12:
        v = va
    else:
        v = (math.sin((1 - frac) * omega) * va + math.sin(frac * omega) * vb) / math.sin(omega)
    return Pose(pos, math.atan2(v[1], v[0]), math.asin(float(np.clip(v[2], -1.0, 1.0))))


def frame_poses(scenario: Scenario, traj: Trajectory, jammer: int = 0) -> list[tuple[Pose, ...]]:
    """Per-frame pose tuples for all jammers; only ``jammer`` follows ``traj``."""
    static = [j.pose for j in scenario.jammers]
    out = []
    for p in traj.frames:
        poses = list(static)
        poses[jammer] = p
        out.append(tuple(poses))
    return out


def _windows(traj: Trajectory, window: float) -> list[range]:
    if not window > 0:
        raise ValueError("window must be positive")
    per = int(round(window * traj.frame_rate))
    n = len(traj.frames)
    if per < 1 or per > n:
        raise ValueError(f"window {window} s is longer than the {n / traj.frame_rate} s trajectory")
    return [range(s, s + per) for s in range(0, n - per + 1, per)]


def _windowed_power(scenario: Scenario, traj: Trajectory, points: np.ndarray, window: float,
                    jammer: int, threads: int) -> np.ndarray:
    """Mean linear power per window, shape ``(windows, points)``."""
    wins = _windows(traj, window)
    poses = frame_poses(scenario, traj, jammer)
    cache: dict = {}

    def key(k):
        p = traj.frames[k]
        return (p.position.x, p.position.y, p.position.z, p.yaw, p.pitch)

    needed = sorted({key(k): k for w in wins for k in w}.values())
    todo = [k for k in needed if key(k) not in cache]

    def one(k):
        return power_at(scenario, points, poses[k])

    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, todo))
    else:
        results = [one(k) for k in todo]
    cache.update({key(k): r for k, r in zip(todo, results)})
    out = np.empty((len(wins), points.shape[0]))
    for wi, w in enumerate(wins):
        # repeated poses are folded into one weighted term, so a static window
        # returns its frame's power exactly; first-appearance order keeps the
        # sum bit-identical for any thread count
        counts: dict = {}
        for k in w:
            counts[key(k)] = counts.get(key(k), 0) + 1
        acc = np.zeros(points.shape[0])
        for kk, c in counts.items():
            acc = acc + (c / len(w)) * cache[kk]
        out[wi] = acc
    return out


def time_averaged_map(scenario: Scenario, traj: Trajectory, window: float = WORD_WINDOW,
                      grid: GridSpec | None = None, jammer: int = 0, threads: int = 1,
                      statistic: str = "median") -> PowerMap:
    """Max-normalized map of window-averaged linear power.

    Every ``window`` of frames is averaged in linear power; the cell value is
    the median (or mean) of those window averages. Cells within the near-field
    exclusion radius of the jammer at any frame are left unset.
    """
    if grid is None:
        raise ValueError("a grid is required")
    if statistic not in ("median", "mean"):
        raise ValueError(f"unknown statistic {statistic!r}")
    mask = np.zeros((grid.ny, grid.nx), dtype=bool)
    for poses in {tuple(p) for p in frame_poses(scenario, traj, jammer)}:
        mask |= excluded_mask(scenario, grid, poses)
    pts = grid.points()
    keep = ~mask.ravel()
    win = _windowed_power(scenario, traj, pts[keep], window, jammer, threads)
    stat = np.median(win, axis=0) if statistic == "median" else np.mean(win, axis=0)
    lin = np.full(pts.shape[0], np.nan)
    lin[keep] = stat
    return normalize_map(grid, lin.reshape(grid.ny, grid.nx))


def time_averaged_profile(scenario: Scenario, traj: Trajectory, radius: float = 1.0, step: float = 1.0,
                          start: float = 0.0, stop: float = 180.0, window: float = WORD_WINDOW,
                          height: float | None = None, jammer: int = 0, threads: int = 1) -> AngularProfile:
    """Angular profile on a ring fixed to the jammer's rest pose, motion-averaged.

    Same statistic as ``time_averaged_map``: median over windows of the
    window-mean linear power.
    """
    angles = sweep_angles(step, start, stop)
    pts = sweep_points(scenario, radius, angles, height)
    win = _windowed_power(scenario, traj, pts, window, jammer, threads)
    return profile_from_power(radius, angles, np.median(win, axis=0))


def _speech_power(scenario: Scenario, mic_pos: np.ndarray, model) -> float:
    sp = scenario.speech
    d = float(np.linalg.norm(mic_pos - sp.position.as_array()))
    if d <= 0:
        raise ValueError("microphone coincides with the speech source")
    spl = sp.level_dba_at_1m - 20.0 * math.log10(d)
    return spl, model.amplitude(spl)


def sjr_timeseries(scenario: Scenario, traj: Trajectory, mic: str = "mic0", jammer: int = 0) -> SJRSeries:
    """Recorded jam-to-speech ratio per frame.

    Jam: each source group's field level sets a carrier RMS at the mic; the
    recorded part is the closed-form power of the quadratic demodulation term,
    summed over independent groups. Speech: the linear path of the speech
    source's level, spread from 1 m. Occlusions scale each band first.
    """
    if scenario.speech is None:
        raise ValueError("scenario has no speech source")
    placement = scenario.mic(mic)
    model = placement.model
    mic_pos = placement.pose.position.as_array()
    spec = scenario.jammers[jammer].config.signal
    _, speech_rms = _speech_power(scenario, mic_pos, model)
    poses = frame_poses(scenario, traj, jammer)
    jam = np.empty(len(poses))
    for k, p in enumerate(poses):
        amps = group_amplitudes(scenario, mic_pos[None, :], p)[0]
        spl = scenario.reference_level + 10.0 * np.log10(np.maximum(np.abs(amps) ** 2, 1e-300))
        carrier_peak = math.sqrt(2.0) * model.amplitude(spl)
        carrier_peak, _ = apply_occlusion(placement.occlusion, carrier_peak, None)
        jam[k] = float(np.sum(quadratic_jam_power(model, carrier_peak, spec.modulation_depth)))
    _, speech_rms = apply_occlusion(placement.occlusion, None, speech_rms)
    speech = float(linear_speech_power(model, speech_rms))
    jam_db = 10.0 * np.log10(np.maximum(jam, 1e-300))
    speech_db = np.full(jam.size, 10.0 * math.log10(speech))
    return SJRSeries(traj.times, jam_db - speech_db, jam_db, speech_db)


_CSV_HEADER = ["t", "x", "y", "z", "yaw_deg", "pitch_deg"]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_CSV_HEADER)
        for t, p in zip(traj.times, traj.frames):
            w.writerow([f"{t:.6f}", repr(p.position.x), repr(p.position.y), repr(p.position.z),
                        repr(math.degrees(p.yaw)), repr(math.degrees(p.pitch))])


def read_trajectory_csv(path, kind: str = "static") -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("trajectory file has no frames")
    missing = set(_CSV_HEADER) - set(rows[0])
    if missing:
        raise ValueError(f"trajectory file lacks columns {sorted(missing)}")
    t = np.array([float(r["t"]) for r in rows])
    rate = 1.0 / float(np.median(np.diff(t))) if t.size > 1 else DEFAULT_FRAME_RATE
    frames = tuple(Pose(Vec3(float(r["x"]), float(r["y"]), float(r["z"])),
                        math.radians(float(r["yaw_deg"])), math.radians(float(r["pitch_deg"]))) for r in rows)
    return Trajectory(rate, frames, kind)
