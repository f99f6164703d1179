"""Jamming effectiveness scores: blind spots, coverage, word disruption and a WER proxy.

The word-disruption model is a threshold rule standing in for an ASR engine:
a word is lost when at least ``rho`` of its frames have a jam-to-speech ratio
above ``tau``. ``tau`` is calibrated once against an on-axis anchor.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .capture import MicrophoneModel
from .core import MIC_HEIGHT, Jammer, MicPlacement, Pose, Scenario, SpeechSource, Vec3, build_preset
from .field import AngularProfile, PowerMap
from .motion import sjr_timeseries, static_trajectory

BASELINE_WER = 0.30
PESQ_RANGE = (-0.5, 4.5)


@dataclass(frozen=True)
class BlindRegion:
    n_cells: int
    area: float
    centroid: tuple[float, float]
    axis_ratio: float
    max_depth_db: float


@dataclass(frozen=True, eq=False)
class BlindSpotReport:
    cells: list[tuple[float, float, float]]
    regions: list[BlindRegion]
    threshold_db: float
    labels: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.cells)

    def stripes(self, min_ratio: float = 3.0, min_cells: int = 3) -> list[BlindRegion]:
        return [r for r in self.regions if r.axis_ratio >= min_ratio and r.n_cells >= min_cells]


def _footprint(dx: float, dy: float, radius: float) -> list[tuple[int, int]]:
    ri, rj = int(radius // dx), int(radius // dy)
    return [(dj, di) for dj in range(-rj, rj + 1) for di in range(-ri, ri + 1)
            if (dj or di) and math.hypot(di * dx, dj * dy) <= radius + 1e-12]


def neighborhood_median(values: np.ndarray, dx: float, dy: float, radius: float) -> np.ndarray:
    """Median of set cells within ``radius`` of each cell, the cell itself excluded."""
    offsets = _footprint(dx, dy, radius)
    pj = max(abs(o[0]) for o in offsets)
    pi = max(abs(o[1]) for o in offsets)
    padded = np.pad(values, ((pj, pj), (pi, pi)), constant_values=np.nan)
    ny, nx = values.shape
    out = np.empty_like(values)
    rows = max(1, 2_000_000 // (nx * len(offsets)))
    for j0 in range(0, ny, rows):
        j1 = min(ny, j0 + rows)
        stack = np.stack([padded[j0 + pj + dj:j1 + pj + dj, pi + di:pi + di + nx] for dj, di in offsets], axis=-1)
        all_nan = np.all(np.isnan(stack), axis=-1)
        stack = np.where(all_nan[..., None], 0.0, stack)
        med = np.nanmedian(stack, axis=-1)
        out[j0:j1] = np.where(all_nan, np.nan, med)
    return out


def _axis_ratio(xs: np.ndarray, ys: np.ndarray) -> float:
    if xs.size < 2:
        return 1.0
    cov = np.cov(np.vstack([xs, ys]))
    ev = np.sort(np.linalg.eigvalsh(cov))
    # a one-cell-wide line still has the cell-size spread across it
    minor = max(ev[0], 0.0) + 1.0 / 12.0
    return float(math.sqrt((ev[1] + 1.0 / 12.0) / minor))


def detect_blind_spots(pmap: PowerMap, threshold_db: float = 10.0, neighborhood_radius: float = 0.05) -> BlindSpotReport:
    """Cells at least ``threshold_db`` below the median of their neighborhood.

    Unset (near-field excluded) cells are neither candidates nor neighbors.
    Regions are 8-connected components; ``axis_ratio`` is the major/minor
    spread from a PCA of the member cells (in cell units).
    """
    g = pmap.grid
    if pmap.values.size == 0:
        raise ValueError("empty map")
    if neighborhood_radius < min(g.dx, g.dy):
        raise ValueError("neighborhood is smaller than one cell")
    v = pmap.values
    med = neighborhood_median(v, g.dx, g.dy, neighborhood_radius)
    with np.errstate(invalid="ignore"):
        blind = np.isfinite(v) & np.isfinite(med) & (v <= med - threshold_db)
    depth = np.where(blind, med - v, np.nan)
    labels, n = ndimage.label(blind, structure=np.ones((3, 3), dtype=int))
    xs, ys = pmap.xs, pmap.ys
    cells = [(float(xs[i]), float(ys[j]), float(depth[j, i])) for j, i in zip(*np.nonzero(blind))]
    regions = []
    for k in range(1, n + 1):
        jj, ii = np.nonzero(labels == k)
        regions.append(BlindRegion(
            n_cells=int(jj.size),
            area=float(jj.size * g.dx * g.dy),
            centroid=(float(xs[ii].mean()), float(ys[jj].mean())),
            axis_ratio=_axis_ratio(ii.astype(float), jj.astype(float)),
            max_depth_db=float(np.nanmax(depth[jj, ii])),
        ))
    return BlindSpotReport(cells, regions, threshold_db, labels)


def coverage_stats(profile: AngularProfile, floor_db: float = -10.0) -> dict:
    v = np.asarray(profile.values, dtype=float)
    if v.size < 8:
        raise ValueError("coverage statistics need at least 8 samples")
    return {
        "mean_db": float(v.mean()),
        "std_db": float(v.std()),
        "min_db": float(v.min()),
        "frac_above": float(np.mean(v > floor_db)),
    }


def word_disruption(times, sjr_db, word_duration: float = 0.4, tau_db: float = 0.0, rho: float = 0.5) -> np.ndarray:
    """Per-word disruption flags over consecutive ``word_duration`` windows.

    A trailing partial window is dropped.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(sjr_db, dtype=float)
    if s.size == 0:
        raise ValueError("empty SJR series")
    if t.size != s.size:
        raise ValueError("times and SJR values differ in length")
    if len(t) > 1:
        dt = float(np.median(np.diff(t)))
    else:
        dt = word_duration
    span = t[-1] - t[0] + dt
    n_words = int(math.floor(span / word_duration + 1e-9))
    if n_words < 1:
        raise ValueError("series is shorter than one word")
    idx = np.floor((t - t[0]) / word_duration + 1e-9).astype(int)
    flags = np.zeros(n_words, dtype=bool)
    above = s > tau_db
    for w in range(n_words):
        sel = idx == w
        flags[w] = sel.any() and above[sel].mean() >= rho
    return flags


@dataclass(frozen=True)
class WerEstimate:
    wer: float
    disrupted_words: int
    total_words: int
    tau_db: float = float("nan")
    rho: float = 0.5
    baseline: float = BASELINE_WER


def wer_proxy(disruption, baseline: float = BASELINE_WER, tau_db: float = float("nan"), rho: float = 0.5) -> WerEstimate:
    d = np.asarray(disruption, dtype=bool)
    if d.size == 0:
        raise ValueError("no words")
    frac = float(d.mean())
    wer = min(1.0, max(0.0, baseline + (1.0 - baseline) * frac))
    return WerEstimate(wer, int(d.sum()), int(d.size), tau_db, rho, baseline)


def speech_quality_proxy(sjr_mean_db: float) -> float:
    """PESQ-like score from mean SJR. Not ITU-T P.862: a fixed piecewise-linear map.

    4.5 at -40 dB and below, -0.5 at +40 dB and above, with the steep part of
    the curve between -20 and +10 dB where jamming starts to bite.
    """
    knots_x = [-40.0, -20.0, 0.0, 10.0, 40.0]
    knots_y = [4.5, 4.2, 2.0, 1.0, -0.5]
    return float(np.interp(sjr_mean_db, knots_x, knots_y))


class CalibrationError(ValueError):
    def __init__(self, message: str, achievable_wer: float):
        super().__init__(message)
        self.achievable_wer = achievable_wer


def search_tau(wer_of_tau, target_wer: float = 0.95, lo: float = -150.0, hi: float = 150.0,
               resolution: float = 0.1) -> float:
    """Largest threshold (to ``resolution``) whose proxy WER still meets ``target_wer``.

    ``wer_of_tau`` maps a threshold in dB to a proxy WER and must be
    non-increasing in the threshold.
    """
    if wer_of_tau(lo) < target_wer:
        raise CalibrationError(f"target WER {target_wer} unattainable", wer_of_tau(lo))
    if wer_of_tau(hi) >= target_wer:
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if wer_of_tau(mid) >= target_wer:
            lo = mid
        else:
            hi = mid
    # snap down onto the resolution grid so the result stays on the passing side
    return math.floor(lo / resolution) * resolution


def proxy_wer(scenario, traj, tau_db: float, mic: str = "mic0", rho: float = 0.5,
              baseline: float = BASELINE_WER, jammer: int = 0) -> WerEstimate:
    """Proxy WER of one microphone while ``jammer`` follows ``traj``."""
    series = sjr_timeseries(scenario, traj, mic, jammer)
    word = scenario.speech.word_duration
    flags = word_disruption(series.times, series.sjr_db, word, tau_db, rho)
    return wer_proxy(flags, baseline, tau_db, rho)


def onaxis_scenario(alpha_deg: float = 0.0, radius: float = 1.0, speech_level: float = 57.5,
                    model: MicrophoneModel | None = None, preset: str = "backdoor_3x3") -> Scenario:
    """Table-top anchor: jammer and speech source together, one mic at ``alpha_deg`` on a ring."""
    a = math.radians(alpha_deg)
    centre = Vec3(0.0, 0.0, MIC_HEIGHT)
    mic = MicPlacement(Pose(Vec3(radius * math.cos(a), radius * math.sin(a), MIC_HEIGHT)),
                       model or MicrophoneModel())
    return Scenario(jammers=(Jammer(build_preset(preset), Pose(centre)),), mics=(mic,),
                    speech=SpeechSource(centre, speech_level), name=f"{preset}@{alpha_deg:g}deg")


def calibrate_tau(scenario_onaxis, target_wer: float = 0.95, mic: str = "mic0", duration: float = 4.0,
                  rho: float = 0.5, resolution: float = 0.1) -> float:
    """Threshold that puts the static on-axis calibration scenario at ``target_wer``.

    Of all thresholds meeting the target, the largest one is returned: any
    lower threshold also meets it, so only the largest is informative.
    Raises ``CalibrationError`` carrying the achievable WER when the target
    cannot be met.
    """
    j = scenario_onaxis.jammers[0]
    traj = static_trajectory(j.pose, duration)
    series = sjr_timeseries(scenario_onaxis, traj, mic)
    word = scenario_onaxis.speech.word_duration

    def wer_of(tau):
        return wer_proxy(word_disruption(series.times, series.sjr_db, word, tau, rho)).wer

    return search_tau(wer_of, target_wer, resolution=resolution)


def report_json(obj) -> str:
    """Stable-key JSON for metric reports."""
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        raise TypeError(type(o))
    return json.dumps(obj, sort_keys=True, indent=2, default=default)
