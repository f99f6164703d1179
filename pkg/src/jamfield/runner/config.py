"""Run configuration: strict JSON schema, parsing into domain objects."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from ..capture import MIC_PROFILES, OCCLUSIONS
from ..core import (
    PRESETS,
    Jammer,
    Medium,
    MicPlacement,
    Piston,
    Pose,
    Scenario,
    SpeechSource,
    Vec3,
    build_preset,
)
from ..motion import GESTURE_KINDS, GestureParams, gen_gesture_trajectory, gen_walk_trajectory
from ..signal import SignalSpec

OUTPUT_KINDS = ("map", "sweep", "timesim", "wer", "spl", "recording")


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending key path."""


def _at(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _check_keys(obj, path: str, required: set[str], optional: set[str]) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    for k in obj:
        if k not in required and k not in optional:
            raise ConfigError(f"{_at(path, k)}: unknown key")
    for k in sorted(required):
        if k not in obj:
            raise ConfigError(f"{_at(path, k)}: missing required key")


def _num(obj, key: str, path: str, default=None, positive: bool = False, integer: bool = False):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{_at(path, key)}: missing required key")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        raise ConfigError(f"{_at(path, key)}: expected {'an integer' if integer else 'a number'}")
    if not math.isfinite(v):
        raise ConfigError(f"{_at(path, key)}: must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{_at(path, key)}: must be positive")
    return v


def _str(obj, key: str, path: str, choices=None, default=None) -> str:
    if key not in obj:
        if default is None:
            raise ConfigError(f"{_at(path, key)}: missing required key")
        return default
    v = obj[key]
    if not isinstance(v, str):
        raise ConfigError(f"{_at(path, key)}: expected a string")
    if choices is not None and v not in choices:
        raise ConfigError(f"{_at(path, key)}: {v!r} is not one of {', '.join(choices)}")
    return v


def _vec(obj, key: str, path: str, default=None) -> Vec3:
    if key not in obj:
        if default is None:
            raise ConfigError(f"{_at(path, key)}: missing required key")
        return default
    v = obj[key]
    if (not isinstance(v, list) or len(v) != 3
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c) for c in v)):
        raise ConfigError(f"{_at(path, key)}: expected three finite numbers")
    return Vec3(*(float(c) for c in v))


_TRAJ_KEYS = {"duration", "frame_rate", "params", "path_length", "speed"}


def parse_trajectory(obj, path: str, base: Pose, seed: int):
    _check_keys(obj, path, {"kind"}, _TRAJ_KEYS)
    kind = _str(obj, "kind", path, GESTURE_KINDS + ("walk",))
    rate = _num(obj, "frame_rate", path, 100.0, positive=True)
    if kind == "walk":
        return gen_walk_trajectory(_num(obj, "path_length", path, 1.0), _num(obj, "speed", path, 0.5, positive=True),
                                   rate, base)
    params = obj.get("params", {})
    fields = set(GestureParams.__dataclass_fields__)
    _check_keys(params, f"{path}.params", set(), fields)
    gp = GestureParams(**{k: float(_num(params, k, f"{path}.params")) for k in params})
    return gen_gesture_trajectory(kind, _num(obj, "duration", path, 4.0, positive=True), rate, seed, base, gp)


_JAMMER_KEYS = {"sources", "position", "yaw_deg", "pitch_deg", "drive_level_db", "signal", "piston_radius",
                "trajectory", "name"}


def parse_jammer(obj, path: str, seed: int) -> Jammer:
    _check_keys(obj, path, {"preset"}, _JAMMER_KEYS)
    cfg = build_preset(_str(obj, "preset", path, PRESETS))
    n = len(cfg.transducers)
    sources = _num(obj, "sources", path, 1, integer=True)
    if not 1 <= sources <= n:
        raise ConfigError(f"{path}.sources: must lie in [1, {n}]")
    cfg = cfg.with_sources(sources)
    if "piston_radius" in obj:
        pat = Piston(float(_num(obj, "piston_radius", path, positive=True)))
        cfg = replace(cfg, transducers=tuple(replace(t, pattern=pat) for t in cfg.transducers))
    if "drive_level_db" in obj:
        cfg = replace(cfg, drive_level=float(_num(obj, "drive_level_db", path)))
    if "signal" in obj:
        sp = obj["signal"]
        sig_path = f"{path}.signal"
        _check_keys(sp, sig_path, set(), {"noise_bandwidth", "modulation_depth"})
        cfg = replace(cfg, signal=SignalSpec(
            cfg.carrier_freq,
            float(_num(sp, "noise_bandwidth", sig_path, cfg.signal.noise_bandwidth, positive=True)),
            float(_num(sp, "modulation_depth", sig_path, cfg.signal.modulation_depth, positive=True)),
            seed,
        ))
    else:
        cfg = replace(cfg, signal=replace(cfg.signal, seed=seed))
    if "name" in obj:
        cfg = replace(cfg, name=_str(obj, "name", path))
    pose = Pose(_vec(obj, "position", path, Vec3()), math.radians(_num(obj, "yaw_deg", path, 0.0)),
                math.radians(_num(obj, "pitch_deg", path, 0.0)))
    traj = parse_trajectory(obj["trajectory"], f"{path}.trajectory", pose, seed) if "trajectory" in obj else None
    return Jammer(cfg, pose, traj)


def parse_jammers(items, path: str, seed: int) -> tuple[Jammer, ...]:
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{path}: expected a non-empty list")
    return tuple(parse_jammer(j, f"{path}[{i}]", seed) for i, j in enumerate(items))


def parse_scenario(obj, seed: int, path: str = "scenario") -> Scenario:
    _check_keys(obj, path, {"jammers"}, {"mics", "speech", "medium", "name"})
    jammers = parse_jammers(obj["jammers"], f"{path}.jammers", seed)
    mics = []
    raw_mics = obj.get("mics", [])
    if not isinstance(raw_mics, list):
        raise ConfigError(f"{path}.mics: expected a list")
    for i, m in enumerate(raw_mics):
        mp = f"{path}.mics[{i}]"
        _check_keys(m, mp, {"position"}, {"name", "profile", "occlusion", "a2"})
        model = MIC_PROFILES[_str(m, "profile", mp, tuple(MIC_PROFILES), "default")]
        if "a2" in m:
            model = replace(model, a2=float(_num(m, "a2", mp)))
        occ_name = _str(m, "occlusion", mp, tuple(OCCLUSIONS), "none")
        mics.append(MicPlacement(Pose(_vec(m, "position", mp)), model,
                                 None if occ_name == "none" else OCCLUSIONS[occ_name],
                                 _str(m, "name", mp, default=f"mic{i}")))
    names = [m.name for m in mics]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}.mics: duplicate microphone names")
    speech = None
    if "speech" in obj:
        sp = obj["speech"]
        spp = f"{path}.speech"
        _check_keys(sp, spp, set(), {"position", "level_dba_at_1m", "word_duration"})
        speech = SpeechSource(_vec(sp, "position", spp, Vec3()), float(_num(sp, "level_dba_at_1m", spp, 57.5)),
                              float(_num(sp, "word_duration", spp, 0.4, positive=True)))
    medium = Medium()
    if "medium" in obj:
        md = obj["medium"]
        mdp = f"{path}.medium"
        _check_keys(md, mdp, set(), {"sound_speed", "absorption"})
        medium = Medium(float(_num(md, "sound_speed", mdp, 343.0, positive=True)),
                        float(_num(md, "absorption", mdp, 0.9)))
    name = _str(obj, "name", path, default="")
    return Scenario(jammers, tuple(mics), speech, medium, seed, name)


# per-kind parameter keys; values are checked where they are used
OUTPUT_PARAMS: dict[str, set[str]] = {
    "map": {"grid", "jammers", "threshold_db"},
    "sweep": {"radius", "step", "start", "stop", "jammers"},
    "timesim": {"mode", "window", "grid", "radius", "step", "start", "stop", "threshold_db"},
    "wer": {"mics", "kinds", "duration", "rho", "tau_db", "target_wer"},
    "spl": {"points", "calibration"},
    "recording": {"mic", "duration", "format"},
}


@dataclass(frozen=True)
class OutputSpec:
    kind: str
    path: str
    params: dict


@dataclass(frozen=True)
class RunConfig:
    name: str
    seed: int
    scenario: Scenario
    outputs: tuple[OutputSpec, ...]
    raw: dict
    recipe: str | None = None

    def inputs_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def parse_outputs(items) -> tuple[OutputSpec, ...]:
    if not isinstance(items, list) or not items:
        raise ConfigError("outputs: expected a non-empty list")
    out = []
    for i, o in enumerate(items):
        p = f"outputs[{i}]"
        _check_keys(o, p, {"kind", "path"}, {"params"})
        kind = _str(o, "kind", p, OUTPUT_KINDS)
        path = _str(o, "path", p)
        if not path or "/" in path or "\\" in path or path.startswith("."):
            raise ConfigError(f"{p}.path: must be a plain file stem")
        params = o.get("params", {})
        _check_keys(params, f"{p}.params", set(), OUTPUT_PARAMS[kind])
        out.append(OutputSpec(kind, path, params))
    paths = [o.path for o in out]
    if len(set(paths)) != len(paths):
        raise ConfigError("outputs: paths must be distinct")
    return tuple(out)


def parse_config(raw, seed_override: int | None = None) -> RunConfig:
    """Validate a config dictionary (already recipe-expanded) into a ``RunConfig``."""
    _check_keys(raw, "", {"scenario", "outputs"}, {"name", "seed", "recipe"})
    raw = dict(raw)
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    seed = _num(raw, "seed", "", 0, integer=True) if "seed" in raw else 0
    if seed < 0:
        raise ConfigError("seed: must be non-negative")
    name = _str(raw, "name", "", default="run")
    scenario = parse_scenario(raw["scenario"], seed)
    outputs = parse_outputs(raw["outputs"])
    recipe = raw.get("recipe")
    return RunConfig(name, seed, scenario, outputs, raw, recipe)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
