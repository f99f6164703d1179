"""Microphone capture chain: polynomial nonlinearity, anti-alias low-pass, sampling.

Pressures are normalized so that ``ref_spl_db`` (94 dB SPL by default) maps to
amplitude 1.0. The low-pass is a linear-phase Kaiser windowed-sinc whose
stopband begins at the nominal cutoff, so nothing above the cutoff survives
into the recording at more than -60 dB.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .signal import SampledSignal, SignalError, rng_for

LPF_ORDER = 1024
LPF_STOPBAND_DB = 80.0


@dataclass(frozen=True)
class MicrophoneModel:
    a1: float = 1.0
    a2: float = 0.05
    a3: float = 0.001
    lpf_cutoff: float = 20_000.0
    fs_record: float = 48_000.0
    noise_floor_db: float = -70.0
    ref_spl_db: float = 94.0
    name: str = "default"

    def violations(self) -> list[str]:
        out = []
        if not self.a1 > 0:
            out.append(f"mic {self.name}: a1 must be positive")
        if self.lpf_cutoff > self.fs_record / 2:
            out.append(f"mic {self.name}: lpf_cutoff exceeds fs_record/2")
        return out

    def amplitude(self, spl_db):
        """Normalized pressure amplitude for an SPL in dB."""
        return 10.0 ** ((np.asarray(spl_db, dtype=float) - self.ref_spl_db) / 20.0)


# Only the ordering between phones is meaningful; mi6 is the most nonlinear.
MIC_PROFILES: dict[str, MicrophoneModel] = {
    "default": MicrophoneModel(),
    "iphone_x": MicrophoneModel(a2=0.05, name="iphone_x"),
    "iphone_se": MicrophoneModel(a2=0.04, name="iphone_se"),
    "mi6": MicrophoneModel(a2=0.10, name="mi6"),
    "linear": MicrophoneModel(a2=0.0, a3=0.0, name="linear"),
}


@dataclass(frozen=True)
class Occlusion:
    name: str
    atten_audible_db: float = 0.0
    atten_ultrasonic_db: float = 0.0

    def violations(self) -> list[str]:
        if self.atten_audible_db < 0 or self.atten_ultrasonic_db < 0:
            return [f"occlusion {self.name}: attenuations must be non-negative"]
        return []


OCCLUSIONS: dict[str, Occlusion] = {
    o.name: o
    for o in (
        Occlusion("none", 0.0, 0.0),
        Occlusion("zipbag", 0.5, 1.0),
        Occlusion("tissue", 0.5, 1.0),
        Occlusion("tshirt", 1.0, 2.0),
        Occlusion("a4paper", 2.0, 6.0),
        Occlusion("plastic_case", 6.0, 12.0),
        Occlusion("paper_box", 8.0, 14.0),
    )
}


def load_occlusions(path) -> dict[str, Occlusion]:
    """Read ``{"name": {"atten_audible_db": .., "atten_ultrasonic_db": ..}}``."""
    raw = json.loads(Path(path).read_text())
    table = {}
    for name, entry in raw.items():
        unknown = set(entry) - {"atten_audible_db", "atten_ultrasonic_db"}
        if unknown:
            raise ValueError(f"occlusion {name}: unknown keys {sorted(unknown)}")
        table[name] = Occlusion(name, float(entry["atten_audible_db"]), float(entry["atten_ultrasonic_db"]))
    return table


@dataclass(frozen=True, eq=False)
class Recording:
    signal: SampledSignal
    scenario_id: str = ""
    mic_id: str = ""
    seed: int = 0
    components: dict = field(default_factory=dict, repr=False)


def nonlinear_transform(mic: MicrophoneModel, s_in: SampledSignal) -> SampledSignal:
    x = s_in.samples
    y = mic.a1 * x + mic.a2 * x**2 + mic.a3 * x**3
    # squaring and cubing widen the band; the declared edge no longer applies
    return SampledSignal(s_in.sample_rate, y, s_in.t0)


def design_lowpass(cutoff: float, fs: float, order: int = LPF_ORDER) -> np.ndarray:
    if not 0 < cutoff < fs / 2:
        raise SignalError(f"cutoff {cutoff} Hz must lie below Nyquist {fs / 2} Hz")
    transition = (LPF_STOPBAND_DB - 7.95) / (2.285 * order) * fs / (2 * math.pi)
    design_cutoff = cutoff - 0.55 * transition
    return sps.firwin(order + 1, design_cutoff, window=("kaiser", sps.kaiser_beta(LPF_STOPBAND_DB)), fs=fs)


def lowpass_filter(s: SampledSignal, cutoff: float) -> SampledSignal:
    """Zero-delay linear-phase FIR low-pass (the group delay is compensated)."""
    taps = design_lowpass(cutoff, s.sample_rate)
    y = sps.fftconvolve(s.samples, taps, mode="same")
    return SampledSignal(s.sample_rate, y, s.t0, band_edge=cutoff)


def _decimate(s: SampledSignal, fs_out: float) -> SampledSignal:
    if fs_out == s.sample_rate:
        return s
    ratio = Fraction(fs_out / s.sample_rate).limit_denominator(10_000)
    up, down = ratio.numerator, ratio.denominator
    if up == 1:
        # already band-limited below fs_out/2, so plain polyphase decimation
        y = s.samples[::down]
    else:
        taps = design_lowpass(min(s.band_edge or fs_out / 2, 0.45 * fs_out), s.sample_rate * up) * up
        y = sps.resample_poly(s.samples, up, down, window=taps)
    return SampledSignal(fs_out, y, s.t0, band_edge=s.band_edge)


def _check_rate(mic: MicrophoneModel, incident: SampledSignal) -> None:
    fs = incident.sample_rate
    if incident.band_edge is not None and fs <= 2 * incident.band_edge:
        raise SignalError("incident signal is sampled below its Nyquist rate")
    if fs < mic.fs_record:
        raise SignalError(f"incident rate {fs} Hz is below the recording rate {mic.fs_record} Hz")


def capture_recording(mic: MicrophoneModel, incident: SampledSignal, seed: int = 0,
                      scenario_id: str = "", mic_id: str = "", add_noise: bool = True) -> Recording:
    """Nonlinearity, self-noise, anti-alias low-pass, decimation, AC coupling.

    Self-noise is injected ahead of the low-pass so the recording stays
    band-limited to ``lpf_cutoff``.
    """
    _check_rate(mic, incident)
    y = nonlinear_transform(mic, incident)
    if add_noise:
        # noise_floor_db is the in-band (0..lpf_cutoff) noise power in dBFS
        bandwidth_share = mic.lpf_cutoff / (y.sample_rate / 2)
        sigma = 10.0 ** (mic.noise_floor_db / 20.0) / math.sqrt(bandwidth_share)
        noise = rng_for(seed, "mic-noise", mic_id).standard_normal(len(y)) * sigma
        y = SampledSignal(y.sample_rate, y.samples + noise, y.t0)
    y = lowpass_filter(y, mic.lpf_cutoff)
    y = _decimate(y, mic.fs_record)
    # AC coupling: microphones do not pass DC
    y = SampledSignal(y.sample_rate, y.samples - y.samples.mean(), y.t0, band_edge=mic.lpf_cutoff)
    return Recording(y, scenario_id, mic_id, seed)


def mix_and_record(mic: MicrophoneModel, jam_incident: SampledSignal | None,
                   speech_incident: SampledSignal | None, **kwargs) -> Recording:
    if jam_incident is None and speech_incident is None:
        raise SignalError("nothing to record")
    if jam_incident is None:
        total = speech_incident
    elif speech_incident is None:
        total = jam_incident
    else:
        if jam_incident.sample_rate != speech_incident.sample_rate:
            raise SignalError("jam and speech incidents must share a sample rate")
        if len(jam_incident) != len(speech_incident):
            raise SignalError("jam and speech incidents must have equal length")
        edges = [e for e in (jam_incident.band_edge, speech_incident.band_edge) if e is not None]
        total = SampledSignal(jam_incident.sample_rate, jam_incident.samples + speech_incident.samples,
                              jam_incident.t0, max(edges) if edges else None)
    return capture_recording(mic, total, **kwargs)


def apply_occlusion(occ: Occlusion | None, jam_incident, speech_incident):
    """Scale jam by the ultrasonic and speech by the audible attenuation.

    Accepts ``SampledSignal`` objects or plain amplitudes.
    """
    if occ is None:
        return jam_incident, speech_incident
    g_jam = 10.0 ** (-occ.atten_ultrasonic_db / 20.0)
    g_speech = 10.0 ** (-occ.atten_audible_db / 20.0)

    def scale(x, g):
        if x is None:
            return None
        return x.scaled(g) if isinstance(x, SampledSignal) else x * g

    return scale(jam_incident, g_jam), scale(speech_incident, g_speech)


# coarse long-term speech spectrum: flat to 500 Hz, rolling off to 8 kHz
_SPEECH_FREQS = (0.0, 100.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0, 8500.0)
_SPEECH_GAINS = (0.0, 1.0, 1.0, 0.6, 0.3, 0.15, 0.07, 0.0)
SPEECH_BAND_EDGE = 8500.0


def synth_speech(duration: float, fs: float, seed: int = 0, rms: float = 1.0,
                 word_duration: float = 0.4, ramp: float = 0.02) -> SampledSignal:
    """Speech-shaped noise gated word by word.

    Each ``word_duration`` slot is one word with raised-cosine on/off ramps, so
    the level dips between words. ``rms`` is the level inside a word.
    """
    if duration <= 0:
        raise SignalError("duration must be positive")
    if fs <= 2 * SPEECH_BAND_EDGE:
        raise SignalError(f"fs {fs} Hz is too low for speech")
    n = int(round(duration * fs))
    freqs = np.array(_SPEECH_FREQS + (fs / 2,))
    gains = np.array(_SPEECH_GAINS + (0.0,))
    numtaps = 1025
    taps = sps.firwin2(numtaps, freqs, gains, fs=fs)
    white = rng_for(seed, "speech").standard_normal(n + numtaps - 1)
    x = np.convolve(white, taps, mode="valid")
    x = x / math.sqrt(np.mean(x**2))
    t = np.arange(n) / fs
    pos = np.mod(t, word_duration)
    r = min(ramp, word_duration / 2)
    gate = np.ones(n)
    rise = pos < r
    fall = pos > word_duration - r
    gate[rise] = 0.5 - 0.5 * np.cos(np.pi * pos[rise] / r)
    gate[fall] = 0.5 - 0.5 * np.cos(np.pi * (word_duration - pos[fall]) / r)
    # normalise to the in-word level, where the gate is fully open
    y = x * gate * rms
    return SampledSignal(fs, y, 0.0, band_edge=SPEECH_BAND_EDGE)


def quadratic_jam_power(mic: MicrophoneModel, amplitude, modulation_depth: float, noise_rms: float = 1.0):
    """Closed-form recorded (AC) power of the a2 demodulation term.

    For ``A(1 + m n)cos(wt)`` with Gaussian ``n``, the baseband part of
    ``a2 * s**2`` is ``a2 A^2 (m n + m^2 (n^2 - 1) / 2)``, whose variance is
    ``a2^2 A^4 (m^2 s^2 + m^4 s^4 / 2)``.
    """
    m2s2 = (modulation_depth * noise_rms) ** 2
    return mic.a2**2 * np.asarray(amplitude, dtype=float) ** 4 * (m2s2 + 0.5 * m2s2**2)


def linear_speech_power(mic: MicrophoneModel, amplitude_rms):
    return mic.a1**2 * np.asarray(amplitude_rms, dtype=float) ** 2
