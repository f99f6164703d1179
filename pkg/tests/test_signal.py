import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jamfield.signal import (
    SampledSignal,
    SignalError,
    SignalSpec,
    am_modulate,
    envelope_of,
    gen_bandlimited_noise,
    jamming_signal,
    read_wav,
    rng_for,
    write_wav,
)

FS = 192_000.0
TRIM = 2048


def band_power(s, lo, hi):
    spec = np.abs(np.fft.rfft(s.samples)) ** 2
    f = np.fft.rfftfreq(len(s), 1 / s.sample_rate)
    return spec[(f >= lo) & (f <= hi)].sum() / spec.sum()


def test_noise_deterministic():
    a = gen_bandlimited_noise(1000, 1.0, 48_000, 7)
    b = gen_bandlimited_noise(1000, 1.0, 48_000, 7)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, gen_bandlimited_noise(1000, 1.0, 48_000, 8).samples)


def test_noise_rms_and_mean():
    n = gen_bandlimited_noise(1000, 1.0, 48_000, 7)
    assert np.sqrt(np.mean(n.samples**2)) == pytest.approx(1.0, abs=0.01)
    assert abs(n.samples.mean()) < 1e-12


def test_noise_out_of_band_periodogram():
    n = gen_bandlimited_noise(1000, 1.0, 48_000, 7)
    spec = np.abs(np.fft.rfft(n.samples)) ** 2
    f = np.fft.rfftfreq(len(n), 1 / 48_000)
    assert spec[f > 2000].sum() / spec[f < 1000].sum() <= 1e-4
    # outside [0, bw] at least 40 dB down; a Hann window keeps the estimator's
    # own leakage from the band edge well below that level
    hann = np.abs(np.fft.rfft(n.samples * np.hanning(len(n)))) ** 2
    assert hann[f > 1000].sum() / hann[f <= 1000].sum() <= 1e-4


def test_noise_preconditions():
    with pytest.raises(SignalError):
        gen_bandlimited_noise(1000, 1.0, 2000, 0)
    with pytest.raises(SignalError):
        gen_bandlimited_noise(1000, 0.0, 48_000, 0)


def test_rng_streams_independent_of_order():
    a1 = rng_for(3, "x").standard_normal(4)
    rng_for(3, "y").standard_normal(100)
    a2 = rng_for(3, "x").standard_normal(4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, rng_for(3, "y").standard_normal(4))


def test_zero_envelope_is_pure_carrier():
    env = SampledSignal(48_000, np.zeros(48_000), band_edge=1000)
    s = am_modulate(env, SignalSpec(), FS)
    spec = np.abs(np.fft.rfft(s.samples))
    f = np.fft.rfftfreq(len(s), 1 / FS)
    assert f[np.argmax(spec)] == pytest.approx(25_000, abs=1.0)


def test_default_spectrum_inside_band():
    s = jamming_signal(SignalSpec(), 1.0, FS)
    assert band_power(s, 24_000, 26_000) >= 0.99


def test_envelope_recovers_am():
    spec = SignalSpec(modulation_depth=0.5, seed=3)
    n = gen_bandlimited_noise(1000, 0.5, 48_000, 3)
    s = am_modulate(n, spec, FS)
    env = envelope_of(s, 25_000)
    ref = 1 + 0.5 * np.interp(s.times, n.times, n.samples)
    err = np.abs(env.samples - ref)[TRIM:-TRIM]
    assert err.max() <= 0.02


def test_envelope_pure_carrier_constant():
    t = np.arange(int(FS * 0.2)) / FS
    env = envelope_of(SampledSignal(FS, 0.7 * np.cos(2 * np.pi * 25_000 * t)), 25_000)
    np.testing.assert_allclose(env.samples[TRIM:-TRIM], 0.7, rtol=0.01)


def test_envelope_slow_sinusoid():
    t = np.arange(int(FS * 0.5)) / FS
    env_in = SampledSignal(FS, np.sin(2 * np.pi * 20 * t), band_edge=20)
    s = am_modulate(env_in, SignalSpec(modulation_depth=0.5), FS)
    env = envelope_of(s, 25_000)
    ref = 1 + 0.5 * np.sin(2 * np.pi * 20 * t)
    assert (np.abs(env.samples - ref) / ref)[TRIM:-TRIM].max() <= 0.02


def test_envelope_rejects_dc():
    with pytest.raises(SignalError):
        envelope_of(SampledSignal(FS, np.ones(4096)), 25_000)


def test_am_rejects_low_rate():
    env = SampledSignal(48_000, np.zeros(100), band_edge=1000)
    with pytest.raises(SignalError):
        am_modulate(env, SignalSpec(), 48_000)


def test_sampled_signal_nyquist_and_finite():
    with pytest.raises(SignalError):
        SampledSignal(1000, np.zeros(4), band_edge=600)
    with pytest.raises(SignalError):
        SampledSignal(1000, np.array([0.0, np.nan]))


@given(st.floats(0.1, 1.0), st.floats(0.2, 3.0), st.integers(0, 2**32))
def test_parseval(m, amp, seed):
    n = gen_bandlimited_noise(1000, 0.25, 48_000, seed)
    s = am_modulate(n, SignalSpec(modulation_depth=m), FS, amplitude=amp)
    expected = (1 + m**2 * np.mean(n.samples**2)) / 2 * amp**2
    assert s.power() == pytest.approx(expected, rel=0.01)


def test_carrier_does_not_change_envelope():
    n = gen_bandlimited_noise(1000, 0.3, 48_000, 11)
    envs = []
    for fc in (24_000, 25_000, 30_000):
        s = am_modulate(n, SignalSpec(carrier_freq=fc, modulation_depth=0.8), FS)
        envs.append(envelope_of(s, fc).samples[TRIM:-TRIM])
    for e in envs[1:]:
        assert np.max(np.abs(e - envs[0])) <= 0.02 * np.max(np.abs(envs[0]))


@pytest.mark.parametrize("fmt", ["pcm16", "float32"])
def test_wav_roundtrip(fmt):
    t = np.arange(4800) / 48_000
    s = SampledSignal(48_000, 0.5 * np.sin(2 * np.pi * 440 * t))
    buf = io.BytesIO()
    write_wav(buf, s, fmt)
    buf.seek(0)
    back = read_wav(buf)
    assert back.sample_rate == 48_000
    np.testing.assert_allclose(back.samples, s.samples, atol=1 / 32767 if fmt == "pcm16" else 1e-7)
