"""Jamming waveform synthesis: band-limited noise, AM onto the carrier, envelope recovery."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

DEFAULT_PASSBAND_RATE = 192_000.0
NOISE_FILTER_ORDER = 512
NOISE_STOPBAND_DB = 60.0


class SignalError(ValueError):
    """Raised when a sample-rate or duration precondition is violated."""


def rng_for(seed: int, *labels: str | int) -> np.random.Generator:
    """Philox stream keyed by ``seed`` and a label path.

    Streams for different labels are independent, so the order in which
    consumers draw from them never changes any result.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        if isinstance(label, str):
            words.append(zlib.crc32(label.encode("utf-8")))
        else:
            words.append(int(label) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class SignalSpec:
    carrier_freq: float = 25_000.0
    noise_bandwidth: float = 1_000.0
    modulation_depth: float = 1.0
    seed: int = 0

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.noise_bandwidth < self.carrier_freq:
            out.append("signal: noise_bandwidth must lie in (0, carrier_freq)")
        if not 0 < self.modulation_depth <= 1:
            out.append("signal: modulation_depth must lie in (0, 1]")
        return out


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled real signal.

    ``band_edge`` is the declared highest frequency present; it is what the
    Nyquist checks downstream are made against.
    """

    sample_rate: float
    samples: np.ndarray = field(repr=False)
    t0: float = 0.0
    band_edge: float | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise SignalError("sample_rate must be positive")
        if samples.ndim != 1:
            raise SignalError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise SignalError("samples must be finite")
        if self.band_edge is not None and self.sample_rate <= 2 * self.band_edge:
            raise SignalError(
                f"sample_rate {self.sample_rate} Hz does not exceed twice the band edge {self.band_edge} Hz"
            )

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(self.samples**2)) if self.samples.size else 0.0

    def scaled(self, gain: float) -> SampledSignal:
        return SampledSignal(self.sample_rate, self.samples * gain, self.t0, self.band_edge)


def noise_filter_order(bw: float, fs: float) -> int:
    # 512 taps keeps the transition band narrow relative to bw up to fs = 48*bw;
    # above that the order grows with the oversampling ratio
    ratio = fs / (48.0 * bw)
    if ratio <= 1.0:
        return NOISE_FILTER_ORDER
    return 2 * int(math.ceil(NOISE_FILTER_ORDER * ratio / 2))


def gen_bandlimited_noise(bw: float, dur: float, fs: float, seed: int) -> SampledSignal:
    """Zero-mean, unit-RMS Gaussian noise confined to ``[0, bw]``.

    White Gaussian samples go through a Kaiser windowed-sinc low-pass whose
    stopband starts at ``bw``, so the declared band really is the band.
    """
    if dur <= 0:
        raise SignalError("duration must be positive")
    if bw <= 0:
        raise SignalError("bandwidth must be positive")
    if fs <= 2 * bw:
        raise SignalError(f"fs {fs} Hz is too low for a {bw} Hz band")
    order = noise_filter_order(bw, fs)
    beta = sps.kaiser_beta(NOISE_STOPBAND_DB)
    # transition width of a Kaiser design with this order and attenuation
    transition = (NOISE_STOPBAND_DB - 7.95) / (2.285 * order) * fs / (2 * math.pi)
    cutoff = bw - 0.6 * transition
    if cutoff <= 0:
        raise SignalError("filter order too small for the requested bandwidth")
    taps = sps.firwin(order + 1, cutoff, window=("kaiser", beta), fs=fs)
    n = int(round(dur * fs))
    white = rng_for(seed, "bandlimited-noise").standard_normal(n + order)
    shaped = np.convolve(white, taps, mode="valid")
    shaped = shaped - shaped.mean()
    shaped = shaped / np.sqrt(np.mean(shaped**2))
    return SampledSignal(fs, shaped, 0.0, band_edge=bw)


def resample(s: SampledSignal, fs_out: float) -> SampledSignal:
    if fs_out == s.sample_rate:
        return s
    ratio = Fraction(fs_out / s.sample_rate).limit_denominator(10_000)
    y = sps.resample_poly(s.samples, ratio.numerator, ratio.denominator)
    return SampledSignal(fs_out, y, s.t0, s.band_edge)


def am_modulate(envelope: SampledSignal, spec: SignalSpec, fs_out: float = DEFAULT_PASSBAND_RATE,
                amplitude: float = 1.0, phase: float = 0.0) -> SampledSignal:
    """``amplitude * (1 + m*n(t)) * cos(2*pi*f_c*t + phase)`` at ``fs_out``."""
    edge = spec.carrier_freq + spec.noise_bandwidth
    if fs_out <= 2 * edge:
        raise SignalError(f"fs_out {fs_out} Hz must exceed {2 * edge} Hz")
    if envelope.band_edge is not None and envelope.band_edge >= spec.carrier_freq:
        raise SignalError("envelope must be band-limited below the carrier")
    n = resample(envelope, fs_out)
    t = n.t0 + np.arange(len(n)) / fs_out
    s = amplitude * (1.0 + spec.modulation_depth * n.samples) * np.cos(2 * np.pi * spec.carrier_freq * t + phase)
    return SampledSignal(fs_out, s, n.t0, band_edge=edge)


def jamming_signal(spec: SignalSpec, dur: float, fs_out: float = DEFAULT_PASSBAND_RATE,
                   amplitude: float = 1.0) -> SampledSignal:
    envelope_rate = 48.0 * spec.noise_bandwidth
    n = gen_bandlimited_noise(spec.noise_bandwidth, dur, envelope_rate, spec.seed)
    return am_modulate(n, spec, fs_out, amplitude)


def envelope_of(s: SampledSignal, f_c: float, bandwidth: float | None = None) -> SampledSignal:
    """Instantaneous amplitude by I/Q demodulation at ``f_c``.

    The magnitude of the low-passed baseband carries the sign of the in-phase
    arm, so a coherent AM signal ``(1 + m*n)cos`` comes back as ``1 + m*n``
    even where it is over-modulated.
    """
    fs = s.sample_rate
    if fs <= 2 * f_c:
        raise SignalError(f"sample rate {fs} Hz cannot carry a {f_c} Hz carrier")
    x = s.samples
    if x.size == 0:
        raise SignalError("empty signal")
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1 / fs)
    near = (freqs >= 0.5 * f_c) & (freqs <= 1.5 * f_c)
    total = spectrum.sum()
    if total == 0 or spectrum[near].sum() < 0.01 * total:
        raise SignalError(f"no carrier detected near {f_c} Hz")
    if bandwidth is None:
        bandwidth = 0.5 * f_c
    t = s.t0 + np.arange(x.size) / fs
    phase = 2 * np.pi * f_c * t
    taps = sps.firwin(1025, bandwidth, window=("kaiser", sps.kaiser_beta(80.0)), fs=fs)
    i = sps.fftconvolve(2 * x * np.cos(phase), taps, mode="same")
    q = sps.fftconvolve(-2 * x * np.sin(phase), taps, mode="same")
    mag = np.hypot(i, q) * np.where(i < 0, -1.0, 1.0)
    return SampledSignal(fs, mag, s.t0, band_edge=bandwidth)


def write_wav(path, s: SampledSignal, fmt: str = "pcm16") -> None:
    """Mono WAV; ``pcm16`` clips to [-1, 1] full scale."""
    rate = int(round(s.sample_rate))
    if fmt == "pcm16":
        data = np.round(np.clip(s.samples, -1.0, 1.0) * 32767).astype("<i2")
    elif fmt == "float32":
        data = s.samples.astype("<f4")
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(path, rate, data)


def read_wav(path) -> SampledSignal:
    rate, data = wavfile.read(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype.kind == "i":
        data = data / float(np.iinfo(data.dtype).max)
    return SampledSignal(float(rate), data.astype(float))
