"""Narrowband jamming field: directivity, path model and source-group superposition.

Amplitudes are complex and relative to one transducer's field at 1 m on its
boresight when driven at the scenario's reference level. Transducers that
share a source add coherently; distinct sources and distinct jammers add in
power.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .core import MIC_HEIGHT, Jammer, Medium, Piston, Pose, Scenario, Tabulated, Vec3, drive_level_from

NEAR_FIELD_EXCLUSION = 0.05
CHUNK = 2048
MIN_DB = -300.0


class FieldDomainError(ValueError):
    """The field is undefined at the requested point (e.g. on a transducer)."""


def piston_gain(ka: float, theta) -> np.ndarray:
    """``|2 J1(x) / x|`` with ``x = ka sin(theta)``.

    The element radiates from its front face only: behind the face plane the
    gain is held at its edge-on (90 deg) value.
    """
    theta = np.minimum(np.abs(np.asarray(theta, dtype=float)), np.pi / 2)
    x = ka * np.sin(theta)
    safe = np.where(x < 1e-8, 1.0, x)
    g = np.abs(2.0 * special.j1(safe) / safe)
    return np.where(x < 1e-8, 1.0, g)


def directivity_gain(pattern, theta, carrier_freq: float = 25_000.0, medium: Medium | None = None):
    """Linear gain of one element at off-axis angle ``theta`` (radians, 0..pi)."""
    theta = np.asarray(theta, dtype=float)
    if isinstance(pattern, Piston):
        ka = (medium or Medium()).wavenumber(carrier_freq) * pattern.radius
        return piston_gain(ka, theta)
    if isinstance(pattern, Tabulated):
        # np.interp holds the end values outside the table
        return np.interp(np.degrees(np.abs(theta)), pattern.angles_deg, pattern.gains)
    raise TypeError(f"unsupported emission pattern {pattern!r}")


def path_factor(r, medium: Medium, f: float):
    """Spherical spreading from 1 m, linear dB/m absorption and phase ``-k r``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise FieldDomainError("range must be positive")
    mag = (1.0 / r) * 10.0 ** (-medium.absorption * (r - 1.0) / 20.0)
    return mag * np.exp(-1j * medium.wavenumber(f) * r)


def element_geometry(jammer: Jammer, pose: Pose | None = None):
    """World positions and unit boresights of a jammer's transducers."""
    pose = pose or jammer.pose
    rot = pose.rotation()
    origin = pose.position.as_array()
    ts = jammer.config.transducers
    local = np.array([t.pose.position.as_array() for t in ts])
    local_bore = np.array([t.pose.boresight for t in ts])
    return origin + local @ rot.T, local_bore @ rot.T


def _group_layout(scenario: Scenario):
    """Stable (jammer index, source id) ordering of the source groups."""
    groups = []
    for ji, j in enumerate(scenario.jammers):
        for sid in j.config.source_ids:
            groups.append((ji, sid))
    return groups


def _amplitudes_chunk(scenario: Scenario, points: np.ndarray, poses, groups) -> np.ndarray:
    medium = scenario.medium
    ref = scenario.reference_level
    out = np.zeros((points.shape[0], len(groups)), dtype=complex)
    column = {g: i for i, g in enumerate(groups)}
    for ji, jammer in enumerate(scenario.jammers):
        pos, bore = element_geometry(jammer, poses[ji] if poses is not None else None)
        scale = 10.0 ** ((jammer.config.drive_level - ref) / 20.0)
        for ti, t in enumerate(jammer.config.transducers):
            d = points - pos[ti]
            r = np.sqrt(np.einsum("ij,ij->i", d, d))
            if np.any(r < 1e-9):
                raise FieldDomainError("query point coincides with a transducer")
            cos_t = np.clip((d @ bore[ti]) / r, -1.0, 1.0)
            gain = directivity_gain(t.pattern, np.arccos(cos_t), t.carrier_freq, medium)
            out[:, column[(ji, t.source_id)]] += scale * gain * path_factor(r, medium, t.carrier_freq)
    return out


def group_amplitudes(scenario: Scenario, points, poses=None, threads: int = 1) -> np.ndarray:
    """Complex amplitude per source group at each point, shape ``(N, groups)``.

    Work is split into fixed-size chunks, so the thread count never changes
    any value.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    groups = _group_layout(scenario)
    starts = range(0, pts.shape[0], CHUNK)
    if threads > 1 and pts.shape[0] > CHUNK:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda s: _amplitudes_chunk(scenario, pts[s:s + CHUNK], poses, groups), starts))
    else:
        parts = [_amplitudes_chunk(scenario, pts[s:s + CHUNK], poses, groups) for s in starts]
    if not parts:
        return np.zeros((0, len(groups)), dtype=complex)
    return np.concatenate(parts, axis=0)


def total_power(amps: np.ndarray) -> np.ndarray:
    p = np.zeros(amps.shape[0])
    for g in range(amps.shape[1]):
        p = p + (amps[:, g].real ** 2 + amps[:, g].imag ** 2)
    return p


def power_at(scenario: Scenario, points, poses=None, threads: int = 1) -> np.ndarray:
    """Linear power (relative to the 1 m reference) at each point."""
    return total_power(group_amplitudes(scenario, points, poses, threads))


def to_db(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(p), MIN_DB)


@dataclass(frozen=True)
class FieldPoint:
    amplitudes: tuple[complex, ...]
    total_power_db: float


def field_at_point(scenario: Scenario, point, poses=None) -> FieldPoint:
    p = point.as_array() if isinstance(point, Vec3) else np.asarray(point, dtype=float)
    amps = group_amplitudes(scenario, p[None, :], poses)[0]
    return FieldPoint(tuple(complex(a) for a in amps), float(to_db(total_power(amps[None, :]))[0]))


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred grid: cell ``(j, i)`` sits at ``(x0 + i*dx, y0 + j*dy, z)``."""

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int
    z: float = MIC_HEIGHT

    @classmethod
    def square(cls, x_min: float, y_min: float, size: float = 1.0, res: float = 0.01, z: float = MIC_HEIGHT):
        n = int(round(size / res))
        return cls(x_min + res / 2, y_min + res / 2, res, res, n, n, z)

    def points(self) -> np.ndarray:
        xs = self.x0 + self.dx * np.arange(self.nx)
        ys = self.y0 + self.dy * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, self.z)])

    def refined(self, factor: int = 2) -> GridSpec:
        dx, dy = self.dx / factor, self.dy / factor
        return GridSpec(self.x0 - self.dx / 2 + dx / 2, self.y0 - self.dy / 2 + dy / 2, dx, dy,
                        self.nx * factor, self.ny * factor, self.z)


@dataclass(frozen=True, eq=False)
class PowerMap:
    """dB map normalized to a 0 dB maximum; ``values[j, i]`` is cell (x_i, y_j); NaN = unset."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    @property
    def origin(self) -> Vec3:
        return Vec3(self.grid.x0, self.grid.y0, self.grid.z)

    @property
    def xs(self) -> np.ndarray:
        return self.grid.x0 + self.grid.dx * np.arange(self.grid.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.grid.y0 + self.grid.dy * np.arange(self.grid.ny)


def excluded_mask(scenario: Scenario, grid: GridSpec, poses=None, radius: float = NEAR_FIELD_EXCLUSION):
    """Cells within ``radius`` (horizontally) of any jammer centre."""
    pts = grid.points()
    mask = np.zeros(pts.shape[0], dtype=bool)
    for ji, j in enumerate(scenario.jammers):
        c = (poses[ji] if poses is not None else j.pose).position
        mask |= np.hypot(pts[:, 0] - c.x, pts[:, 1] - c.y) < radius
    return mask.reshape(grid.ny, grid.nx)


def power_grid(scenario: Scenario, grid: GridSpec, poses=None, threads: int = 1,
               exclusion: np.ndarray | None = None) -> np.ndarray:
    """Raw linear power per cell, NaN where excluded."""
    if grid.nx <= 0 or grid.ny <= 0:
        raise ValueError("empty grid")
    mask = excluded_mask(scenario, grid, poses) if exclusion is None else exclusion
    pts = grid.points()
    keep = ~mask.ravel()
    p = np.full(pts.shape[0], np.nan)
    p[keep] = power_at(scenario, pts[keep], poses, threads)
    return p.reshape(grid.ny, grid.nx)


def normalize_map(grid: GridSpec, linear: np.ndarray) -> PowerMap:
    db = to_db(np.where(np.isnan(linear), 1.0, linear))
    db = np.where(np.isnan(linear), np.nan, db)
    if not np.any(np.isfinite(db)):
        raise ValueError("map has no set cells")
    return PowerMap(grid, db - np.nanmax(db))


def power_map(scenario: Scenario, grid: GridSpec, poses=None, threads: int = 1) -> PowerMap:
    return normalize_map(grid, power_grid(scenario, grid, poses, threads))


@dataclass(frozen=True, eq=False)
class AngularProfile:
    radius: float
    angles: np.ndarray
    values: np.ndarray


def ring_points(centre: Vec3, heading: float, radius: float, angles_deg, height: float) -> np.ndarray:
    a = heading + np.radians(np.asarray(angles_deg, dtype=float))
    return np.column_stack([centre.x + radius * np.cos(a), centre.y + radius * np.sin(a), np.full(a.size, height)])


def sweep_angles(step: float, start: float = 0.0, stop: float = 180.0) -> np.ndarray:
    n = int(math.floor((stop - start) / step + 1e-9))
    return start + step * np.arange(n + 1)


def sweep_points(scenario: Scenario, radius: float, angles_deg, height: float | None = None) -> np.ndarray:
    """Ring around the first jammer's centre, alpha measured from its heading."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    j = scenario.jammers[0]
    if height is None:
        height = scenario.mics[0].pose.position.z if scenario.mics else MIC_HEIGHT
    return ring_points(j.pose.position, j.pose.yaw, radius, angles_deg, height)


def angular_sweep(scenario: Scenario, radius: float = 1.0, step: float = 1.0, start: float = 0.0,
                  stop: float = 180.0, height: float | None = None, poses=None) -> AngularProfile:
    """Power on a ring around the jammer, in dB relative to the alpha = 0 sample."""
    angles = sweep_angles(step, start, stop)
    p = power_at(scenario, sweep_points(scenario, radius, angles, height), poses)
    return profile_from_power(radius, angles, p)


def profile_from_power(radius: float, angles, linear) -> AngularProfile:
    db = to_db(linear)
    return AngularProfile(radius, np.asarray(angles, dtype=float), db - db[0])


def spl_at(scenario: Scenario, point, calibration: tuple[float, float] | None = None, poses=None) -> float:
    """Absolute SPL in dB.

    ``calibration = (level_db, distance_m)`` is a single element's boresight
    level at a distance; it replaces every jammer's drive level. Without it the
    configured drive levels are used.
    """
    if calibration is not None:
        level = drive_level_from(calibration[0], calibration[1], scenario.medium)
        scenario = replace(scenario, jammers=tuple(
            replace(j, config=replace(j.config, drive_level=level)) for j in scenario.jammers))
    p = point.as_array() if isinstance(point, Vec3) else np.asarray(point, dtype=float)
    rel = total_power(group_amplitudes(scenario, p[None, :], poses))[0]
    return float(scenario.reference_level + 10 * math.log10(rel))
