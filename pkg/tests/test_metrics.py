import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jamfield.core import WRIST_HEIGHT, Jammer, Pose, Scenario, Vec3, build_preset
from jamfield.field import AngularProfile, GridSpec, PowerMap, power_map
from jamfield.metrics import (
    CalibrationError,
    calibrate_tau,
    coverage_stats,
    detect_blind_spots,
    onaxis_scenario,
    proxy_wer,
    report_json,
    search_tau,
    speech_quality_proxy,
    wer_proxy,
    word_disruption,
)
from jamfield.motion import static_trajectory

GRID = GridSpec.square(0.0, 0.0, 0.3, 0.01)


def flat(value=-5.0):
    return PowerMap(GRID, np.full((GRID.ny, GRID.nx), value))


def test_uniform_map_has_no_blind_cells():
    assert detect_blind_spots(flat()).count == 0


def test_block_is_one_region():
    v = flat(0.0).values.copy()
    v[10:13, 14:17] = -15.0
    rep = detect_blind_spots(PowerMap(GRID, v))
    assert rep.count == 9
    assert len(rep.regions) == 1 and rep.regions[0].n_cells == 9
    assert rep.regions[0].area == pytest.approx(9e-4)
    assert rep.regions[0].axis_ratio == pytest.approx(1.0)


def test_line_is_a_stripe():
    v = flat(0.0).values.copy()
    v[15, 5:25] = -20.0
    rep = detect_blind_spots(PowerMap(GRID, v))
    assert len(rep.stripes()) == 1 and rep.stripes()[0].axis_ratio >= 3


def test_report_invariants():
    s = Scenario((Jammer(build_preset("bracelet_24"), Pose(Vec3(0, 0, WRIST_HEIGHT))),))
    rep = detect_blind_spots(power_map(s, GridSpec.square(-0.5, -0.5, 1.0, 0.01)))
    assert rep.count > 0
    assert all(d >= rep.threshold_db for _, _, d in rep.cells)
    assert sum(r.n_cells for r in rep.regions) == rep.count
    assert np.count_nonzero(rep.labels) == rep.count


def test_unset_cells_ignored():
    v = flat(0.0).values.copy()
    v[:, :5] = np.nan
    v[20, 20] = -30.0
    rep = detect_blind_spots(PowerMap(GRID, v))
    assert rep.count == 1


def test_detector_preconditions():
    with pytest.raises(ValueError):
        detect_blind_spots(flat(), neighborhood_radius=0.005)
    with pytest.raises(ValueError):
        detect_blind_spots(PowerMap(GridSpec(0, 0, 0.01, 0.01, 0, 0), np.zeros((0, 0))))


@given(st.floats(-80, 80))
def test_detector_offset_invariant(offset):
    rng = np.random.default_rng(1)
    v = rng.normal(0, 6, (GRID.ny, GRID.nx))
    a = detect_blind_spots(PowerMap(GRID, v))
    b = detect_blind_spots(PowerMap(GRID, v + offset))
    np.testing.assert_array_equal(a.labels, b.labels)


def test_backdoor_fig6_stripes():
    s = Scenario((Jammer(build_preset("backdoor_3x3"), Pose(Vec3(0, 0, 0.05), math.pi / 2)),))
    rep = detect_blind_spots(power_map(s, GridSpec.square(-0.5, 0.0, 1.0, 0.01)))
    assert len([r for r in rep.regions if r.axis_ratio >= 3]) >= 2


def test_source_count_ordering():
    g = GridSpec.square(-0.5, -0.5, 1.0, 0.01)
    counts = []
    for n in (1, 2, 24):
        cfg = build_preset("bracelet_24").with_sources(n)
        counts.append(detect_blind_spots(power_map(Scenario((Jammer(cfg, Pose(Vec3(0, 0, WRIST_HEIGHT))),)), g)).count)
    assert counts[0] >= counts[1] >= counts[2] == 0


def profile(values):
    v = np.asarray(values, dtype=float)
    return AngularProfile(1.0, np.arange(v.size, dtype=float), v)


def test_coverage_examples():
    c = coverage_stats(profile(np.zeros(16)))
    assert c["std_db"] == 0 and c["frac_above"] == 1.0
    c = coverage_stats(profile([0, -20] * 8))
    assert c["min_db"] == -20 and c["frac_above"] == 0.5
    with pytest.raises(ValueError):
        coverage_stats(profile(np.zeros(7)))


T = np.arange(400) / 100.0  # 4 s at 100 Hz, ten words


def test_disruption_all_or_nothing():
    assert word_disruption(T, np.full(T.size, 10.0), tau_db=0.0).all()
    assert not word_disruption(T, np.full(T.size, -10.0), tau_db=0.0).any()
    assert word_disruption(T, np.zeros(T.size)).size == 10


@pytest.mark.parametrize("rho,expected", [(0.5, True), (0.51, False)])
def test_square_wave_duty_boundary(rho, expected):
    # 50 % duty inside each word
    sjr = np.where(np.arange(T.size) % 40 < 20, 10.0, -10.0)
    flags = word_disruption(T, sjr, 0.4, 0.0, rho)
    assert np.all(flags == expected)


def test_disruption_errors():
    with pytest.raises(ValueError):
        word_disruption([], [])
    with pytest.raises(ValueError):
        word_disruption(T[:10], np.zeros(10))


# quarter-dB steps keep the shifted comparisons free of rounding
quarter = st.integers(-240, 240).map(lambda k: k / 4)


@given(st.lists(quarter, min_size=40, max_size=200), quarter, quarter)
def test_disruption_shift_invariant(values, tau, shift):
    t = np.arange(len(values)) / 100.0
    v = np.asarray(values)
    np.testing.assert_array_equal(word_disruption(t, v, 0.4, tau), word_disruption(t, v + shift, 0.4, tau + shift))


def test_wer_examples():
    assert wer_proxy([False] * 10).wer == pytest.approx(0.30)
    assert wer_proxy([True] * 10).wer == pytest.approx(1.0)
    assert wer_proxy([True, False] * 5).wer == pytest.approx(0.65)
    with pytest.raises(ValueError):
        wer_proxy([])


@given(st.integers(1, 50), st.data())
def test_wer_monotone_and_bounded(n, data):
    k1 = data.draw(st.integers(0, n))
    k2 = data.draw(st.integers(k1, n))
    w1 = wer_proxy([True] * k1 + [False] * (n - k1)).wer
    w2 = wer_proxy([True] * k2 + [False] * (n - k2)).wer
    assert 0.30 <= w1 <= w2 <= 1.0


def test_speech_quality_proxy():
    assert speech_quality_proxy(-40) == 4.5
    assert speech_quality_proxy(40) == -0.5
    xs = np.linspace(-60, 60, 241)
    assert np.all(np.diff([speech_quality_proxy(x) for x in xs]) <= 0)


def test_search_tau_largest_passing():
    tau = search_tau(lambda t: 1.0 if t <= 3.27 else 0.3, 0.95)
    assert tau == pytest.approx(3.2)
    with pytest.raises(CalibrationError) as exc:
        search_tau(lambda t: 0.5, 0.95)
    assert exc.value.achievable_wer == 0.5


def test_calibration_anchor():
    s = onaxis_scenario(0.0)
    tau = calibrate_tau(s)
    assert round(tau * 10) == pytest.approx(tau * 10, abs=1e-9)
    traj = static_trajectory(s.jammers[0].pose, 4.0)
    assert proxy_wer(s, traj, tau).wer >= 0.95


def test_report_json_stable():
    rep = {"b": np.float64(1.5), "a": wer_proxy([True, False])}
    text = report_json(rep)
    assert text == report_json(rep)
    assert list(json.loads(text)) == ["a", "b"]
