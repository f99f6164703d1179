"""Named recipes, each expanding to a concrete run configuration."""

from __future__ import annotations

import copy
from dataclasses import dataclass

from ..capture import OCCLUSIONS
from ..core import MIC_HEIGHT, WRIST_HEIGHT, Jammer, Pose, Scenario, Vec3, build_preset
from ..field import GridSpec, power_map
from ..metrics import detect_blind_spots

TABLE = [0.0, 0.0, MIC_HEIGHT]
WRIST = [0.0, 0.0, WRIST_HEIGHT]
FRONT_GRID = {"x_min": -0.5, "y_min": 0.0, "size": 1.0, "res": 0.01}
CENTRED_GRID = {"x_min": -0.5, "y_min": -0.5, "size": 1.0, "res": 0.01}
GESTURES = ["static", "point", "wave", "rotate"]


@dataclass(frozen=True)
class Recipe:
    id: str
    description: str
    artifacts: tuple[str, ...]


RECIPES = (
    Recipe("fig3", "angular sweep at 1 m for the 3x3 array, the i4 array and a single transducer",
           ("fig3_backdoor.csv", "fig3_i4.csv", "fig3_single.csv", "*_stats.json")),
    Recipe("fig6", "1 m x 1 m power map of the 3x3 array with blind-stripe detection",
           ("fig6_map.csv", "fig6_map.pgm", "fig6_map_blind.json")),
    Recipe("fig7", "bracelet power maps with 1, 2 and 24 independent sources",
           ("fig7_src1.*", "fig7_src2.*", "fig7_src24.*")),
    Recipe("fig9", "bracelet map averaged over random wrist rotation in 0.4 s windows",
           ("fig9_motion.csv", "fig9_motion.pgm", "fig9_motion_blind.json")),
    Recipe("fig11", "bracelet angular coverage at 1 m, static and with random rotation",
           ("fig11_static.csv", "fig11_motion.csv", "fig11_stats.json")),
    Recipe("fig12", "proxy WER for a mic in a bracelet blind spot under gestures",
           ("fig12_wer.json", "fig12_wer_sjr.csv")),
    Recipe("fig14", "proxy WER and recorded levels for covered microphones",
           ("fig14_wer.json", "fig14_wer_sjr.csv", "fig14_tshirt.wav")),
)


def _jammer(preset: str, position, yaw_deg: float = 0.0, **extra) -> dict:
    return {"preset": preset, "position": list(position), "yaw_deg": yaw_deg, **extra}


def deepest_blind_spot(preset: str = "bracelet_24", sources: int = 1, grid: dict = CENTRED_GRID) -> list[float]:
    """Coordinates of the deepest blind cell of a static map, at mic height."""
    cfg = build_preset(preset).with_sources(sources)
    scenario = Scenario(jammers=(Jammer(cfg, Pose(Vec3(*WRIST))),))
    g = GridSpec.square(grid["x_min"], grid["y_min"], grid["size"], grid["res"])
    report = detect_blind_spots(power_map(scenario, g))
    if not report.cells:
        raise ValueError("the static map has no blind spot")
    # ties broken by position so the choice never depends on scan order
    x, y, _ = min(report.cells, key=lambda c: (-round(c[2], 6), c[0], c[1]))
    return [round(x, 6), round(y, 6), MIC_HEIGHT]


def _fig3() -> dict:
    sweep = {"radius": 1.0, "step": 1.0, "start": 0.0, "stop": 180.0}
    return {
        "scenario": {"jammers": [_jammer("backdoor_3x3", TABLE)]},
        "outputs": [
            {"kind": "sweep", "path": "fig3_backdoor", "params": sweep},
            {"kind": "sweep", "path": "fig3_i4", "params": {**sweep, "jammers": [_jammer("i4", TABLE)]}},
            {"kind": "sweep", "path": "fig3_single", "params": {**sweep, "jammers": [_jammer("single", TABLE)]}},
        ],
    }


def _fig6() -> dict:
    # jammer at the middle of the near edge, aimed across the grid along +y
    return {
        "scenario": {"jammers": [_jammer("backdoor_3x3", TABLE, 90.0)]},
        "outputs": [{"kind": "map", "path": "fig6_map", "params": {"grid": FRONT_GRID}}],
    }


def _fig7() -> dict:
    return {
        "scenario": {"jammers": [_jammer("bracelet_24", WRIST)]},
        "outputs": [
            {"kind": "map", "path": f"fig7_src{n}",
             "params": {"grid": CENTRED_GRID, "jammers": [_jammer("bracelet_24", WRIST, sources=n)]}}
            for n in (1, 2, 24)
        ],
    }


def _fig9() -> dict:
    traj = {"kind": "random_rotation", "duration": 4.0, "frame_rate": 100.0}
    return {
        "scenario": {"jammers": [_jammer("bracelet_24", WRIST, trajectory=traj)]},
        "outputs": [{"kind": "timesim", "path": "fig9_motion",
                     "params": {"mode": "map", "window": 0.4, "grid": CENTRED_GRID}}],
    }


def _fig11() -> dict:
    traj = {"kind": "random_rotation", "duration": 10.0, "frame_rate": 100.0}
    return {
        "scenario": {"jammers": [_jammer("bracelet_24", WRIST, trajectory=traj)]},
        "outputs": [{"kind": "timesim", "path": "fig11",
                     "params": {"mode": "profile", "window": 0.4, "radius": 1.0, "step": 1.0,
                                "start": 0.0, "stop": 359.0}}],
    }


def _fig12() -> dict:
    return {
        "scenario": {
            "jammers": [_jammer("bracelet_24", WRIST)],
            "mics": [{"name": "blind", "position": deepest_blind_spot()}],
            "speech": {"position": WRIST, "level_dba_at_1m": 57.5},
        },
        "outputs": [{"kind": "wer", "path": "fig12_wer",
                     "params": {"mics": ["blind"], "kinds": GESTURES, "duration": 8.0}}],
    }


def _fig14() -> dict:
    mics = [{"name": name, "position": [1.0, 0.0, MIC_HEIGHT], "occlusion": name} for name in OCCLUSIONS]
    return {
        "scenario": {
            "jammers": [_jammer("backdoor_3x3", TABLE)],
            "mics": mics,
            "speech": {"position": TABLE, "level_dba_at_1m": 57.5},
        },
        "outputs": [
            {"kind": "wer", "path": "fig14_wer",
             "params": {"mics": list(OCCLUSIONS), "kinds": ["static"], "duration": 4.0}},
            {"kind": "recording", "path": "fig14_tshirt", "params": {"mic": "tshirt", "duration": 0.5}},
        ],
    }


_BUILDERS = {"fig3": _fig3, "fig6": _fig6, "fig7": _fig7, "fig9": _fig9, "fig11": _fig11,
             "fig12": _fig12, "fig14": _fig14}


def recipe_ids() -> list[str]:
    return [r.id for r in RECIPES]


def expand_recipe(recipe_id: str, seed: int = 0) -> dict:
    if recipe_id not in _BUILDERS:
        raise KeyError(recipe_id)
    cfg = copy.deepcopy(_BUILDERS[recipe_id]())
    return {"name": recipe_id, "recipe": recipe_id, "seed": seed, **cfg}
