"""Geometry, scenario description, jammer presets and scenario validation.

Coordinates are meters with the table plane at ``z = 0``. A pose's boresight
is ``(cos(pitch)cos(yaw), cos(pitch)sin(yaw), sin(pitch))``. Transducer poses
inside a :class:`JammerConfig` are local to the jammer; the jammer's own pose
(static or per trajectory frame) places them in the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .capture import MicrophoneModel, Occlusion
from .signal import SignalSpec

CARRIER_RANGE = (20_000.0, 80_000.0)
BRACELET_RADIUS = 0.035
BRACELET_RING_SPACING = 0.02
WRIST_HEIGHT = 0.10
MIC_HEIGHT = 0.05
ARRAY_PITCH = 0.017
PISTON_RADIUS = 0.008
PRESETS = ("single", "backdoor_3x3", "i4", "bracelet_12", "bracelet_24")


def wrap_angle(a: float) -> float:
    """Map an angle in radians to (-pi, pi]."""
    w = math.remainder(float(a), 2 * math.pi)
    return math.pi if w <= -math.pi else w


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def of(cls, v) -> Vec3:
        x, y, z = (float(c) for c in v)
        return cls(x, y, z)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in (self.x, self.y, self.z))


def rotation(yaw: float, pitch: float) -> np.ndarray:
    """Yaw about +z after raising the local x axis by ``pitch``."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])
    return rz @ ry


@dataclass(frozen=True)
class Pose:
    position: Vec3 = field(default_factory=Vec3)
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))
        object.__setattr__(self, "pitch", wrap_angle(self.pitch))

    @property
    def boresight(self) -> np.ndarray:
        return self.rotation() @ np.array([1.0, 0.0, 0.0])

    def rotation(self) -> np.ndarray:
        return rotation(self.yaw, self.pitch)


@dataclass(frozen=True)
class Piston:
    radius: float = PISTON_RADIUS


@dataclass(frozen=True)
class Tabulated:
    """Measured pattern: (off-axis degrees, linear gain) pairs, renormalized to 1 at 0 deg."""

    angles_deg: tuple[float, ...]
    gains: tuple[float, ...]

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles_deg)
        gains = tuple(float(g) for g in self.gains)
        if gains and angles and angles[0] == 0.0 and gains[0] > 0:
            gains = tuple(g / gains[0] for g in gains)
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "gains", gains)


EmissionPattern = Union[Piston, Tabulated]


def pattern_violations(p: EmissionPattern) -> list[str]:
    if isinstance(p, Piston):
        return [] if p.radius > 0 else ["pattern: piston radius must be positive"]
    out = []
    a = np.asarray(p.angles_deg, dtype=float)
    g = np.asarray(p.gains, dtype=float)
    if a.size == 0 or a.size != g.size:
        return ["pattern: tabulated angles and gains must be non-empty and of equal length"]
    if a[0] != 0.0:
        out.append("pattern: first tabulated angle must be 0 deg")
    if np.any(np.diff(a) <= 0):
        out.append("pattern: tabulated angles must be strictly increasing")
    if a.min() < 0 or a.max() > 180:
        out.append("pattern: tabulated angles must lie in [0, 180]")
    if np.any(g < 0) or np.any(g > 1 + 1e-12):
        out.append("pattern: tabulated gains must lie in [0, 1] after normalization")
    return out


@dataclass(frozen=True)
class Transducer:
    pose: Pose
    pattern: EmissionPattern = field(default_factory=Piston)
    carrier_freq: float = 25_000.0
    source_id: int = 0


@dataclass(frozen=True)
class Medium:
    sound_speed: float = 343.0
    absorption: float = 0.9  # dB/m at the carrier

    def wavenumber(self, freq: float) -> float:
        return 2 * math.pi * freq / self.sound_speed

    def violations(self) -> list[str]:
        out = []
        if not self.sound_speed > 0:
            out.append("medium: sound_speed must be positive")
        if not self.absorption >= 0:
            out.append("medium: absorption must be non-negative")
        return out


def path_gain_db(r: float, medium: Medium) -> float:
    """Level change from the 1 m reference to range ``r`` (spreading plus absorption)."""
    return -20 * math.log10(r) - medium.absorption * (r - 1.0)


def drive_level_from(level_db: float, distance: float, medium: Medium | None = None) -> float:
    """1 m boresight level implied by a level measured at ``distance`` on boresight."""
    return level_db - path_gain_db(distance, medium or Medium())


DEFAULT_DRIVE_LEVEL = drive_level_from(100.0, 0.01)


@dataclass(frozen=True)
class JammerConfig:
    transducers: tuple[Transducer, ...]
    signal: SignalSpec = field(default_factory=SignalSpec)
    drive_level: float = DEFAULT_DRIVE_LEVEL
    name: str = ""

    @property
    def carrier_freq(self) -> float:
        return self.transducers[0].carrier_freq

    @property
    def source_ids(self) -> tuple[int, ...]:
        return tuple(sorted({t.source_id for t in self.transducers}))

    def with_sources(self, n_sources: int) -> JammerConfig:
        """Split the transducers into ``n_sources`` contiguous, equally sized groups.

        For the stacked bracelet, 2 sources means one per ring.
        """
        n = len(self.transducers)
        if not 1 <= n_sources <= n:
            raise ValueError(f"n_sources must lie in [1, {n}]")
        ts = tuple(replace(t, source_id=i * n_sources // n) for i, t in enumerate(self.transducers))
        return replace(self, transducers=ts)


@dataclass(frozen=True)
class Trajectory:
    frame_rate: float
    frames: tuple[Pose, ...]
    kind: str = "static"

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        if not self.frames:
            raise ValueError("trajectory has no frames")
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def duration(self) -> float:
        return (len(self.frames) - 1) / self.frame_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.frames)) / self.frame_rate


@dataclass(frozen=True)
class Jammer:
    config: JammerConfig
    pose: Pose = field(default_factory=Pose)
    trajectory: Trajectory | None = None


@dataclass(frozen=True)
class MicPlacement:
    pose: Pose
    model: MicrophoneModel = field(default_factory=MicrophoneModel)
    occlusion: Occlusion | None = None
    name: str = "mic0"


@dataclass(frozen=True)
class SpeechSource:
    position: Vec3 = field(default_factory=Vec3)
    level_dba_at_1m: float = 57.5
    word_duration: float = 0.4


@dataclass(frozen=True)
class Scenario:
    jammers: tuple[Jammer, ...]
    mics: tuple[MicPlacement, ...] = ()
    speech: SpeechSource | None = None
    medium: Medium = field(default_factory=Medium)
    seed: int = 0
    name: str = ""

    def mic(self, name: str) -> MicPlacement:
        for m in self.mics:
            if m.name == name:
                return m
        raise KeyError(f"no microphone named {name!r}")

    @property
    def reference_level(self) -> float:
        """dB SPL that field amplitude 1.0 stands for (the strongest jammer's drive level)."""
        return max(j.config.drive_level for j in self.jammers)


def _ring(n: int, radius: float, z: float, phase: float, carrier: float, pattern) -> list[Transducer]:
    out = []
    for i in range(n):
        beta = phase + 2 * math.pi * i / n
        pos = Vec3(radius * math.cos(beta), radius * math.sin(beta), z)
        out.append(Transducer(Pose(pos, yaw=beta), pattern, carrier))
    return out


def build_preset(preset_id: str) -> JammerConfig:
    """Jammer geometries in jammer-local coordinates (boresight reference along local +x)."""
    pattern = Piston(PISTON_RADIUS)
    if preset_id == "single":
        return JammerConfig((Transducer(Pose(), pattern, 25_000.0),), SignalSpec(25_000.0), name=preset_id)
    if preset_id == "backdoor_3x3":
        ts = [
            Transducer(Pose(Vec3(0.0, iy * ARRAY_PITCH, iz * ARRAY_PITCH)), pattern, 25_000.0)
            for iz in (-1, 0, 1)
            for iy in (-1, 0, 1)
        ]
        return JammerConfig(tuple(ts), SignalSpec(25_000.0), name=preset_id)
    if preset_id == "i4":
        f = 24_000.0
        ts = [Transducer(Pose(Vec3(0.0, iy * ARRAY_PITCH, 0.0)), pattern, f) for iy in (-2, -1, 0, 1, 2)]
        ts += [
            Transducer(Pose(Vec3(-0.02, iy * ARRAY_PITCH, 0.03), pitch=math.pi / 2), pattern, f)
            for iy in (-0.5, 0.5)
        ]
        return JammerConfig(tuple(ts), SignalSpec(f), name=preset_id)
    if preset_id == "bracelet_12":
        ts = _ring(12, BRACELET_RADIUS, 0.0, 0.0, 25_000.0, pattern)
        return JammerConfig(tuple(ts), SignalSpec(25_000.0), name=preset_id)
    if preset_id == "bracelet_24":
        h = BRACELET_RING_SPACING / 2
        ts = _ring(12, BRACELET_RADIUS, -h, 0.0, 25_000.0, pattern)
        ts += _ring(12, BRACELET_RADIUS, h, 0.0, 25_000.0, pattern)
        return JammerConfig(tuple(ts), SignalSpec(25_000.0), name=preset_id)
    raise ValueError(f"unknown preset {preset_id!r}; expected one of {', '.join(PRESETS)}")


def validate_scenario(s: Scenario) -> list[str]:
    """Every invariant violation in ``s``; an empty list means the scenario is usable."""
    out: list[str] = []
    if not s.jammers:
        out.append("no jammer")
    out += s.medium.violations()
    carriers = set()
    for ji, j in enumerate(s.jammers):
        cfg = j.config
        tag = f"jammer {ji}"
        if not cfg.transducers:
            out.append(f"{tag}: no transducers")
            continue
        out += [f"{tag}: {v}" for v in cfg.signal.violations()]
        freqs = {t.carrier_freq for t in cfg.transducers}
        if len(freqs) > 1:
            out.append(f"{tag}: carrier mismatch between transducers")
        carriers |= freqs
        if cfg.signal.carrier_freq not in freqs:
            out.append(f"{tag}: signal carrier differs from transducer carrier")
        for ti, t in enumerate(cfg.transducers):
            if not CARRIER_RANGE[0] <= t.carrier_freq <= CARRIER_RANGE[1]:
                out.append(f"{tag} transducer {ti}: carrier_freq outside [20 kHz, 80 kHz]")
            if t.source_id < 0:
                out.append(f"{tag} transducer {ti}: negative source_id")
            if not t.pose.position.is_finite():
                out.append(f"{tag} transducer {ti}: non-finite position")
            out += [f"{tag} transducer {ti}: {v}" for v in pattern_violations(t.pattern)]
        if not j.pose.position.is_finite():
            out.append(f"{tag}: non-finite pose")
        if j.trajectory is not None:
            if not j.trajectory.frame_rate > 0:
                out.append(f"{tag}: trajectory frame_rate must be positive")
            if not j.trajectory.frames:
                out.append(f"{tag}: empty trajectory")
    if len(carriers) > 1:
        out.append("carrier mismatch across jammers")
    names = [m.name for m in s.mics]
    if len(set(names)) != len(names):
        out.append("duplicate microphone names")
    for m in s.mics:
        out += m.model.violations()
        if m.occlusion is not None:
            out += m.occlusion.violations()
        if not m.pose.position.is_finite():
            out.append(f"mic {m.name}: non-finite position")
    if s.speech is not None:
        if not 30 <= s.speech.level_dba_at_1m <= 90:
            out.append("speech: level must lie in [30, 90] dB")
        if not s.speech.word_duration > 0:
            out.append("speech: word_duration must be positive")
    return out
