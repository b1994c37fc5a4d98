import math
import os
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from wtqkd.errors import BelowThresholdError, ConfigError, FitError, InsufficientDataError
from wtqkd.harness.bridge import calibration_drive
from wtqkd.laser import metrics
from wtqkd.laser.dynamics import FieldTrace, simulate, tec_setting
from wtqkd.laser.params import DriveSignal, InjectionParams, LaserParams, load_preset

PRESET = load_preset()
LASER, OP = PRESET.laser, PRESET.drive
CLOCK = OP.pulse_rate_ghz
DISCARD = OP.discard_pulses * 1e3 / CLOCK


def injection(power_uw, **kw):
    return replace(PRESET.injection, power_uw=power_uw, **kw)


def pulsed(power_uw, seed=1, n_pulses=128, **kw):
    return simulate(LASER, calibration_drive(OP, n_pulses), injection(power_uw), seed, **kw)


def synthetic_trace(field, side):
    n = len(field)
    side = np.asarray(side, dtype=float)
    return FieldTrace(np.arange(n, dtype=float), np.asarray(field, dtype=complex), side, np.zeros(n), 0, 0,
                      np.arange(side.shape[1], dtype=float) + 1550.0, 1550.0)


# parameters ---------------------------------------------------------------

@pytest.mark.parametrize("kw,key", [
    ({"mode_count": 80}, "laser.mode_count"),
    ({"photon_lifetime_ps": 0.0}, "laser.photon_lifetime_ps"),
    ({"mode_spacing_nm": -1.0}, "laser.mode_spacing_nm"),
    ({"threshold_current_ma": 0.0}, "laser.threshold_current_ma"),
])
def test_laser_params_validation(kw, key):
    with pytest.raises(ConfigError) as exc:
        LaserParams(**kw)
    assert exc.value.key == key


def test_injection_params_validation():
    with pytest.raises(ConfigError):
        InjectionParams(power_uw=-1.0)
    with pytest.raises(ConfigError):
        InjectionParams(wavelength_nm=1620.0)


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveSignal(10.0, np.array([1.0, -1.0]), 1.0)
    with pytest.raises(ValueError):
        DriveSignal(10.0, np.array([1.0, 1.0]), 0.0)
    d = DriveSignal.gain_switched(14.8, 60.0, 2.0, 4)
    assert np.all(d.samples >= 0)
    assert d.duration_ps == pytest.approx(2000.0)


def test_tec_setting_slides_grid_onto_injection():
    tec = tec_setting(LASER, 1550.12)
    assert tec.injected_mode == LASER.mode_count // 2
    assert tec.temperature_offset_k == pytest.approx(1.2)
    assert abs(tec.detuning_nm) < LASER.temperature_tuning_nm_per_k * 0.01
    edge = tec_setting(LASER, 1585.0)
    assert edge.injected_mode == LASER.mode_count // 2 + 28
    with pytest.raises(ValueError):
        tec_setting(LaserParams(mode_count=3), 1560.0)


# modulation bandwidth -----------------------------------------------------

def test_modulation_bandwidth_zero_at_threshold():
    assert metrics.modulation_bandwidth(LASER, LASER.threshold_current_ma) == 0.0
    with pytest.raises(BelowThresholdError):
        metrics.modulation_bandwidth(LASER, LASER.threshold_current_ma - 0.1)


@given(st.floats(1e-3, 100.0))
def test_modulation_bandwidth_linear(delta):
    ith = LASER.threshold_current_ma
    one = metrics.modulation_bandwidth(LASER, ith + delta)
    assert metrics.modulation_bandwidth(LASER, ith + 2 * delta) == pytest.approx(2 * one, rel=1e-12)


def test_modulation_bandwidth_golden():
    # 3/(4 pi^2 q) * (0.2 * c/3.6 * 2.5e-20 / 4e-17) * 0.8e-3 A, in GHz^2
    golden = 3 / (4 * math.pi**2 * 1.602176634e-19) * (0.2 * 299792458 / 3.6 * 2.5e-20 / 4e-17) * 0.8e-3 * 1e-18
    assert metrics.modulation_bandwidth(LASER, 14.8) == pytest.approx(golden, rel=1e-12)
    assert metrics.modulation_bandwidth(LASER, 14.8) == pytest.approx(3.9497, rel=1e-4)
    assert metrics.modulation_bandwidth_3db(LASER, 14.8) == pytest.approx(math.sqrt(golden))


# extinction ratio ---------------------------------------------------------

def hist(counts):
    return metrics.PulseHistogram(np.arange(len(counts) + 1) * 5.0, np.asarray(counts))


@pytest.mark.parametrize("counts,db", [([1000, 1], 30.0), ([100, 100], 0.0), ([2000, 1], 33.0103)])
def test_extinction_ratio_examples(counts, db):
    er = metrics.extinction_ratio(hist(counts))
    assert er.value == pytest.approx(db, abs=1e-4)
    assert not er.censored


def test_extinction_ratio_censored():
    er = metrics.extinction_ratio(hist([1000, 0, 5]))
    assert er.censored and er.value == pytest.approx(30.0)
    with pytest.raises(InsufficientDataError):
        metrics.extinction_ratio(hist([0, 0]))


def test_histogram_validation():
    with pytest.raises(ValueError):
        metrics.PulseHistogram(np.array([0.0, 1.0]), np.array([1, 2]))
    with pytest.raises(ValueError):
        metrics.PulseHistogram(np.array([0.0, 1.0, 1.0]), np.array([1, 2]))


# Gaussian fit -------------------------------------------------------------

def test_gaussian_fit_round_trip():
    t = np.arange(0.0, 500.0, 1.0)
    y = oracles.gaussian(t, 3.0, 240.0, 69.8, 0.01)
    assert metrics.fit_gaussian_fwhm(y, t) == pytest.approx(69.8, rel=1e-3)


@settings(max_examples=30)
@given(st.floats(20.0, 200.0), st.floats(150.0, 350.0))
def test_gaussian_fit_round_trip_property(fwhm, centre):
    t = np.arange(0.0, 500.0, 0.5)
    fit = metrics.fit_gaussian(oracles.gaussian(t, 1.0, centre, fwhm, 0.0), t)
    assert fit.fwhm_ps == pytest.approx(fwhm, rel=1e-3)
    assert fit.center_ps == pytest.approx(centre, abs=0.05)


def test_gaussian_fit_with_noise():
    t = np.arange(0.0, 500.0, 1.0)
    y = np.asarray(oracles.gaussian(t, 1.0, 250.0, 100.0, 0.0))
    y = y + 0.01 * np.random.default_rng(5).standard_normal(t.size)
    assert metrics.fit_gaussian_fwhm(y, t) == pytest.approx(100.0, abs=2.0)


def test_gaussian_fit_rejects_constant():
    t = np.arange(100.0)
    with pytest.raises(FitError):
        metrics.fit_gaussian_fwhm(np.ones(100), t)


# phases, visibility, SMSR, spectrum -----------------------------------------

def test_interference_visibility_examples():
    assert metrics.interference_visibility(np.zeros(10)) == pytest.approx(1.0)
    assert metrics.interference_visibility(np.tile([0.0, math.pi], 5)) == pytest.approx(1.0)
    u = np.random.default_rng(0).uniform(-math.pi, math.pi, 10**4)
    assert metrics.interference_visibility(u) < 0.05
    with pytest.raises(InsufficientDataError):
        metrics.interference_visibility([0.3])


def test_single_pulse_phase():
    field = np.zeros(1000, dtype=complex)
    field[200:300] = 5.0 * np.exp(0.7j)
    tr = synthetic_trace(field, np.zeros((1000, 3)))
    ph = metrics.pulse_phases(tr, 1.0, discard_ps=0.0)
    assert ph.shape == (1,) and ph[0] == pytest.approx(0.7)


def test_mode_suppression_ratio_arithmetic():
    n = 50
    field = np.full(n, math.sqrt(1000.0), dtype=complex)
    side = np.zeros((n, 4))
    side[:, 2] = 1.0
    side[:, 3] = 0.5
    assert metrics.mode_suppression_ratio(synthetic_trace(field, side)).value == pytest.approx(30.0)
    empty = metrics.mode_suppression_ratio(synthetic_trace(field, np.zeros((n, 4))))
    assert empty.censored


def test_spectrum_of_pure_tone():
    t = np.arange(4000.0)
    f0 = 10.0  # GHz
    tr = synthetic_trace(np.exp(2j * math.pi * f0 * 1e-3 * t), np.zeros((t.size, 3)))
    sp = metrics.optical_spectrum(tr)
    assert sp.freq_offset_ghz[np.argmax(sp.power)] == pytest.approx(f0, abs=0.25)


# simulation -----------------------------------------------------------------

def test_simulation_deterministic_and_nonnegative():
    a = pulsed(80.0, seed=3, n_pulses=16)
    b = pulsed(80.0, seed=3, n_pulses=16)
    assert np.array_equal(a.field, b.field)
    assert np.array_equal(a.side_mode_photons, b.side_mode_photons)
    assert np.all(a.side_mode_photons >= 0)
    assert a.field.size == a.time_ps.size == a.carrier_density.size
    assert not np.array_equal(a.field, pulsed(80.0, seed=4, n_pulses=16).field)


def test_simulation_rejects_short_or_coarse_drive():
    with pytest.raises(ValueError):
        simulate(LASER, DriveSignal.constant(20.0, 500.0), injection(0.0), 1)
    with pytest.raises(ValueError):
        simulate(LASER, DriveSignal.constant(20.0, 2000.0, 2.0), injection(0.0), 1)


def test_threshold_behaviour():
    below = simulate(LASER, DriveSignal.constant(0.8 * LASER.threshold_current_ma, 3000.0), injection(0.0), 1)
    above = simulate(LASER, DriveSignal.constant(1.5 * LASER.threshold_current_ma, 3000.0), injection(0.0), 1)
    p_below = below.window(2000.0).total_photons.mean()
    p_above = above.window(2000.0).total_photons.mean()
    assert 10 * math.log10(p_above / p_below) >= 20.0


def test_unlocked_pulses_are_incoherent():
    # the phase estimator's floor for N random phases is ~0.9/sqrt(N)
    tr = pulsed(0.0, n_pulses=512)
    ph = metrics.pulse_phases(tr, CLOCK, discard_ps=DISCARD)
    assert np.isfinite(ph).sum() >= 100
    assert metrics.interference_visibility(ph) < 0.1
    assert metrics.circular_std(ph) > 1.0
    assert abs(metrics.mode_suppression_ratio(tr, DISCARD).value) < 3.0


def test_locked_pulses_are_coherent():
    tr = pulsed(80.0, n_pulses=128)
    ph = metrics.pulse_phases(tr, CLOCK, discard_ps=DISCARD)
    assert metrics.circular_std(ph) < 0.1
    assert metrics.mode_suppression_ratio(tr, DISCARD).value >= 30.0


def test_cw_injection_suppresses_side_modes():
    tr = simulate(LASER, DriveSignal.constant(OP.dc_bias_ma, 12000.0), injection(80.0), 2)
    assert metrics.mode_suppression_ratio(tr, 2000.0).value >= 30.0
    sp = metrics.optical_spectrum(tr.window(2000.0), segment_ps=2000.0)
    assert abs(sp.freq_offset_ghz[np.argmax(sp.power)]) < 1.0


def test_locking_phase_offset_stable_across_seeds():
    means = []
    for seed in (1, 2, 3):
        tr = pulsed(80.0, seed=seed, n_pulses=48)
        means.append(metrics.circular_mean(metrics.pulse_phases(tr, CLOCK, discard_ps=DISCARD)))
    spread = np.angle(np.exp(1j * (np.array(means) - means[0])))
    assert np.max(np.abs(spread)) < 0.05
    shifted = simulate(LASER, calibration_drive(OP, 48), injection(80.0, phase=1.0), 1)
    moved = metrics.circular_mean(metrics.pulse_phases(shifted, CLOCK, discard_ps=DISCARD))
    assert np.angle(np.exp(1j * (moved - means[0] - 1.0))) == pytest.approx(0.0, abs=0.05)


def test_integrator_convergence():
    drive = calibration_drive(OP, 24)
    e1 = metrics.mean_pulse(simulate(LASER, drive, injection(80.0), 5, time_step_ps=0.2), CLOCK, DISCARD)[1].sum()
    e2 = metrics.mean_pulse(simulate(LASER, drive, injection(80.0), 5, time_step_ps=0.1), CLOCK, DISCARD)[1].sum()
    assert e2 == pytest.approx(e1, rel=0.01)


def test_backends_agree():
    drive = calibration_drive(OP, 12)
    a = simulate(LASER, drive, injection(80.0), 9, backend="loops")
    b = simulate(LASER, drive, injection(80.0), 9, backend="numpy")
    scale = np.abs(a.field).max()
    assert np.max(np.abs(a.field - b.field)) < 1e-6 * scale
    assert np.allclose(a.carrier_density, b.carrier_density, rtol=1e-9)


def test_disable_flag_selects_numpy_backend():
    env = dict(os.environ, WTQKD_DISABLE_NUMBA="1")
    code = "from wtqkd.laser import kernels; print(kernels.NUMBA_ENABLED, kernels.default_backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "numpy"]


def test_field_trace_csv(tmp_path):
    tr = pulsed(80.0, n_pulses=2).window(0.0, 50.0)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:3] == ["time_ps", "re_E", "im_E"] and header[-1] == "N"
    assert len(header) == 3 + LASER.mode_count + 1
    assert len(lines) == tr.time_ps.size + 1
    first = [float(v) for v in lines[1].split(",")]
    assert first[1] == tr.field[0].real and first[-1] == tr.carrier_density[0]
