"""Output producers and atomic artifact commit."""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..capture import apply_occlusion, mix_and_record, synth_speech
from ..core import Scenario
from ..field import GridSpec, PowerMap, angular_sweep, group_amplitudes, power_map, spl_at
from ..metrics import (
    calibrate_tau,
    coverage_stats,
    detect_blind_spots,
    onaxis_scenario,
    speech_quality_proxy,
    word_disruption,
    wer_proxy,
)
from ..motion import gen_gesture_trajectory, sjr_timeseries, static_trajectory, time_averaged_map, time_averaged_profile
from ..signal import DEFAULT_PASSBAND_RATE, am_modulate, gen_bandlimited_noise, write_wav
from .config import ConfigError, OutputSpec, RunConfig, parse_jammers

PGM_RANGE_DB = (-40.0, 0.0)


def _fmt(v: float) -> str:
    # unset cells are written as empty fields
    return "" if not math.isfinite(v) else f"{v:.6f}"


def map_csv(pmap: PowerMap) -> bytes:
    lines = ["x,y,db"]
    xs, ys = pmap.xs, pmap.ys
    for j in range(pmap.grid.ny):
        for i in range(pmap.grid.nx):
            lines.append(f"{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(pmap.values[j, i])}")
    return ("\n".join(lines) + "\n").encode()


def map_pgm(pmap: PowerMap) -> bytes:
    """ASCII greymap, -40 dB black to 0 dB white, top row = largest y. Unset cells are black."""
    lo, hi = PGM_RANGE_DB
    v = np.nan_to_num(pmap.values, nan=lo)
    g = np.round((np.clip(v, lo, hi) - lo) / (hi - lo) * 255).astype(int)[::-1]
    rows = [" ".join(str(x) for x in row) for row in g]
    head = f"P2\n{pmap.grid.nx} {pmap.grid.ny}\n255\n"
    return (head + "\n".join(rows) + "\n").encode()


def profile_csv(profile) -> bytes:
    lines = ["alpha_deg,db"] + [f"{_fmt(a)},{_fmt(v)}" for a, v in zip(profile.angles, profile.values)]
    return ("\n".join(lines) + "\n").encode()


def json_bytes(obj) -> bytes:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, (np.floating, float)):
            f = float(o)
            return round(f, 9) if math.isfinite(f) else None
        if isinstance(o, np.integer):
            return int(o)
        return o
    return (json.dumps(clean(obj), sort_keys=True, indent=2) + "\n").encode()


def blind_summary(pmap: PowerMap, threshold_db: float = 10.0) -> dict:
    rep = detect_blind_spots(pmap, threshold_db)
    return {
        "threshold_db": threshold_db,
        "blind_cells": rep.count,
        "regions": [
            {"n_cells": r.n_cells, "area_m2": r.area, "centroid": list(r.centroid),
             "axis_ratio": r.axis_ratio, "max_depth_db": r.max_depth_db}
            for r in rep.regions
        ],
        "stripes": len(rep.stripes()),
    }


def _grid(params: dict, key: str = "grid") -> GridSpec:
    g = params.get(key)
    if not isinstance(g, dict) or set(g) - {"x_min", "y_min", "size", "res"}:
        raise ConfigError(f"params.{key}: expected an object with x_min, y_min, size, res")
    try:
        return GridSpec.square(float(g["x_min"]), float(g["y_min"]), float(g.get("size", 1.0)), float(g.get("res", 0.01)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"params.{key}: incomplete grid") from exc


def _scenario_for(cfg: RunConfig, spec: OutputSpec) -> Scenario:
    if "jammers" in spec.params:
        return replace(cfg.scenario, jammers=parse_jammers(spec.params["jammers"], f"{spec.path}.params.jammers",
                                                            cfg.seed))
    return cfg.scenario


def _trajectory(scenario: Scenario):
    j = scenario.jammers[0]
    if j.trajectory is None:
        raise ConfigError("scenario.jammers[0].trajectory: required for this output")
    return j.trajectory


def out_map(cfg, spec, threads):
    s = _scenario_for(cfg, spec)
    pmap = power_map(s, _grid(spec.params), threads=threads)
    thr = float(spec.params.get("threshold_db", 10.0))
    return {f"{spec.path}.csv": map_csv(pmap), f"{spec.path}.pgm": map_pgm(pmap),
            f"{spec.path}_blind.json": json_bytes(blind_summary(pmap, thr))}


def _sweep_args(p: dict, default_stop: float = 180.0) -> dict:
    return {"radius": float(p.get("radius", 1.0)), "step": float(p.get("step", 1.0)),
            "start": float(p.get("start", 0.0)), "stop": float(p.get("stop", default_stop))}


def out_sweep(cfg, spec, threads):
    s = _scenario_for(cfg, spec)
    prof = angular_sweep(s, **_sweep_args(spec.params))
    return {f"{spec.path}.csv": profile_csv(prof), f"{spec.path}_stats.json": json_bytes(coverage_stats(prof))}


def out_timesim(cfg, spec, threads):
    s = cfg.scenario
    traj = _trajectory(s)
    p = spec.params
    window = float(p.get("window", 0.4))
    mode = p.get("mode", "map")
    if mode == "map":
        g = _grid(p)
        thr = float(p.get("threshold_db", 10.0))
        moving = time_averaged_map(s, traj, window, g, threads=threads)
        static = power_map(s, g, threads=threads)
        summary = blind_summary(moving, thr)
        summary["static_blind_cells"] = detect_blind_spots(static, thr).count
        return {f"{spec.path}.csv": map_csv(moving), f"{spec.path}.pgm": map_pgm(moving),
                f"{spec.path}_blind.json": json_bytes(summary)}
    if mode == "profile":
        args = _sweep_args(p, 359.0)
        static = angular_sweep(s, **args)
        moving = time_averaged_profile(s, traj, window=window, threads=threads, **args)
        st, mv = coverage_stats(static), coverage_stats(moving)
        stats = {"static": st, "motion": mv, "std_ratio": mv["std_db"] / st["std_db"] if st["std_db"] > 0 else None,
                 "trajectory": traj.kind, "window_s": window}
        return {f"{spec.path}_static.csv": profile_csv(static), f"{spec.path}_motion.csv": profile_csv(moving),
                f"{spec.path}_stats.json": json_bytes(stats)}
    raise ConfigError(f"{spec.path}.params.mode: {mode!r} is not one of map, profile")


def calibrated_tau(cfg: RunConfig, spec: OutputSpec, speech_level: float) -> float:
    if "tau_db" in spec.params:
        return float(spec.params["tau_db"])
    target = float(spec.params.get("target_wer", 0.95))
    return calibrate_tau(onaxis_scenario(speech_level=speech_level), target)


def out_wer(cfg, spec, threads):
    s = cfg.scenario
    if s.speech is None:
        raise ConfigError("scenario.speech: required for wer outputs")
    p = spec.params
    mics = p.get("mics", [m.name for m in s.mics])
    kinds = p.get("kinds", ["static"])
    duration = float(p.get("duration", 8.0))
    rho = float(p.get("rho", 0.5))
    for name in mics:
        try:
            s.mic(name)
        except KeyError as exc:
            raise ConfigError(f"{spec.path}.params.mics: no microphone named {name!r}") from exc
    tau = calibrated_tau(cfg, spec, s.speech.level_dba_at_1m)
    base = s.jammers[0].pose
    results = {}
    columns = []
    times = None
    for kind in kinds:
        traj = (static_trajectory(base, duration) if kind == "static"
                else gen_gesture_trajectory(kind, duration, seed=cfg.seed, base=base))
        for name in mics:
            series = sjr_timeseries(s, traj, name)
            flags = word_disruption(series.times, series.sjr_db, s.speech.word_duration, tau, rho)
            est = wer_proxy(flags, tau_db=tau, rho=rho)
            mean_sjr = float(10 * np.log10(np.mean(10 ** (series.sjr_db / 10))))
            results.setdefault(name, {})[kind] = {
                "wer": est.wer, "disrupted_words": est.disrupted_words, "total_words": est.total_words,
                "sjr_mean_db": mean_sjr, "sjr_median_db": float(np.median(series.sjr_db)),
                "jam_db": float(np.median(series.jam_db)), "speech_db": float(series.speech_db[0]),
                "speech_quality": speech_quality_proxy(mean_sjr),
            }
            columns.append((f"{name}:{kind}", series.sjr_db))
            times = series.times
    report = {"tau_db": tau, "rho": rho, "baseline": 0.30, "target_wer": float(p.get("target_wer", 0.95)),
              "results": results}
    lines = ["t," + ",".join(c[0] for c in columns)]
    for k in range(len(times)):
        lines.append(_fmt(times[k]) + "," + ",".join(_fmt(c[1][k]) for c in columns))
    return {f"{spec.path}.json": json_bytes(report), f"{spec.path}_sjr.csv": ("\n".join(lines) + "\n").encode()}


def out_spl(cfg, spec, threads):
    s = cfg.scenario
    p = spec.params
    cal = p.get("calibration")
    calibration = None
    if cal is not None:
        if not isinstance(cal, dict) or set(cal) - {"level_db", "distance"}:
            raise ConfigError(f"{spec.path}.params.calibration: expected level_db and distance")
        calibration = (float(cal["level_db"]), float(cal["distance"]))
    points = p.get("points", [[m.pose.position.x, m.pose.position.y, m.pose.position.z] for m in s.mics])
    rows = [{"point": [float(c) for c in pt], "spl_db": spl_at(s, np.asarray(pt, dtype=float), calibration)}
            for pt in points]
    return {f"{spec.path}.json": json_bytes({"calibration": cal, "points": rows})}


def simulate_recording(s: Scenario, mic_name: str, duration: float, seed: int, fs: float = DEFAULT_PASSBAND_RATE):
    """Time-domain capture at a mic: every source group gets its own noise stream."""
    placement = s.mic(mic_name)
    model = placement.model
    pos = placement.pose.position.as_array()
    amps = group_amplitudes(s, pos[None, :])[0]
    jam = None
    groups = [(ji, sid) for ji, j in enumerate(s.jammers) for sid in j.config.source_ids]
    for (ji, sid), a in zip(groups, amps):
        if abs(a) == 0:
            continue
        spec = s.jammers[ji].config.signal
        env_rate = 48.0 * spec.noise_bandwidth
        env = gen_bandlimited_noise(spec.noise_bandwidth, duration, env_rate, hash_seed(seed, ji, sid))
        peak = math.sqrt(2.0) * float(model.amplitude(s.reference_level + 20 * math.log10(abs(a))))
        part = am_modulate(env, spec, fs, peak, float(np.angle(a)))
        jam = part if jam is None else replace(jam, samples=jam.samples + part.samples)
    speech = None
    if s.speech is not None:
        d = float(np.linalg.norm(pos - s.speech.position.as_array()))
        rms = float(model.amplitude(s.speech.level_dba_at_1m - 20 * math.log10(d)))
        speech = synth_speech(duration, fs, seed, rms, s.speech.word_duration)
        if jam is not None and len(speech) != len(jam):
            n = min(len(speech), len(jam))
            speech = replace(speech, samples=speech.samples[:n])
            jam = replace(jam, samples=jam.samples[:n])
    jam, speech = apply_occlusion(placement.occlusion, jam, speech)
    return mix_and_record(model, jam, speech, seed=seed, scenario_id=s.name, mic_id=mic_name)


def hash_seed(seed: int, *parts: int) -> int:
    h = hashlib.sha256(repr((seed,) + parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def out_recording(cfg, spec, threads):
    p = spec.params
    name = p.get("mic", cfg.scenario.mics[0].name if cfg.scenario.mics else None)
    if name is None:
        raise ConfigError(f"{spec.path}.params.mic: scenario has no microphone")
    try:
        cfg.scenario.mic(name)
    except KeyError as exc:
        raise ConfigError(f"{spec.path}.params.mic: no microphone named {name!r}") from exc
    fmt = p.get("format", "pcm16")
    if fmt not in ("pcm16", "float32"):
        raise ConfigError(f"{spec.path}.params.format: {fmt!r} is not one of pcm16, float32")
    rec = simulate_recording(cfg.scenario, name, float(p.get("duration", 1.0)), cfg.seed)
    buf = io.BytesIO()
    write_wav(buf, rec.signal, fmt)
    return {f"{spec.path}.wav": buf.getvalue()}


PRODUCERS = {"map": out_map, "sweep": out_sweep, "timesim": out_timesim, "wer": out_wer,
             "spl": out_spl, "recording": out_recording}


def produce(cfg: RunConfig, threads: int = 1) -> dict[str, bytes]:
    artifacts: dict[str, bytes] = {}
    for spec in cfg.outputs:
        for name, data in PRODUCERS[spec.kind](cfg, spec, threads).items():
            if name in artifacts:
                raise ConfigError(f"outputs: artifact {name} produced twice")
            artifacts[name] = data
    return artifacts


def manifest(cfg: RunConfig, artifacts: dict[str, bytes]) -> bytes:
    return json_bytes({
        "name": cfg.name,
        "recipe": cfg.recipe,
        "seed": cfg.seed,
        "inputs_sha256": cfg.inputs_hash(),
        "versions": {"jamfield": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "artifacts": {k: hashlib.sha256(v).hexdigest() for k, v in sorted(artifacts.items())},
    })


def commit(out_dir, artifacts: dict[str, bytes]) -> list[Path]:
    """Write every artifact to a temp name first, then rename them all into place."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, data in artifacts.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=out)
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, out / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def run(cfg: RunConfig, out_dir, threads: int = 1) -> list[Path]:
    artifacts = produce(cfg, threads)
    artifacts[f"{cfg.name}.manifest.json"] = manifest(cfg, artifacts)
    return commit(out_dir, artifacts)


