"""Laser-to-link bridge: short calibration runs reduced to link figures.

Each operating point (laser, drive, injection power and wavelength) is
simulated once for ``calibration_pulses`` pulses and reduced to the numbers
the link model needs.  Results are memoised per process, so sweeps that
revisit a point (optimisation followed by the row itself) pay once.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from ..channel import LinkExtras
from ..errors import FitError, InsufficientDataError
from ..laser import metrics
from ..laser.dynamics import simulate
from ..laser.params import DriveSignal, InjectionParams, LaserParams, OperatingPoint


@dataclass(frozen=True)
class LaserPoint:
    injection_uw: float
    wavelength_nm: float
    er_db: float
    er_censored: bool
    visibility: float  # fringe visibility of adjacent pulses
    phase_visibility: float
    smsr_db: float
    pulse_fwhm_ps: float
    spectral_fwhm_ghz: float
    pulse_photons: float  # mean intracavity photon-samples per pulse

    def locked(self, min_smsr_db: float) -> bool:
        return self.injection_uw > 0 and self.smsr_db >= min_smsr_db

    def link(self) -> LinkExtras:
        return LinkExtras(er_db=self.er_db, visibility=min(max(self.visibility, 0.0), 1.0))


def point_seed(base_seed: int, wavelength_nm: float) -> int:
    """Noise seed for a wavelength; shared by all injection powers there."""
    key = [int(base_seed), int(round(wavelength_nm * 100))]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0])


def calibration_drive(op: OperatingPoint, n_pulses: int) -> DriveSignal:
    return DriveSignal.gain_switched(
        op.dc_bias_ma, op.rf_amplitude_ma, op.pulse_rate_ghz, n_pulses + op.discard_pulses,
        op.pulse_fwhm_ps, sample_interval_ps=op.sample_interval_ps,
    )


@functools.lru_cache(maxsize=4096)
def laser_point(
    laser: LaserParams,
    op: OperatingPoint,
    injection: InjectionParams,
    n_pulses: int,
    seed: int,
) -> LaserPoint:
    """Simulate one operating point and extract its link-level figures."""
    drive = calibration_drive(op, n_pulses)
    trace = simulate(laser, drive, injection, seed, time_step_ps=op.time_step_ps)
    clock = op.pulse_rate_ghz
    discard = op.discard_pulses * 1e3 / clock
    er = metrics.extinction_ratio(metrics.pulse_histogram(trace, clock, discard_ps=discard))
    phases = metrics.pulse_phases(trace, clock, discard_ps=discard)
    try:
        phase_vis = metrics.interference_visibility(phases)
    except InsufficientDataError:  # no pulse above the photon floor
        phase_vis = 0.0
    try:
        fwhm = metrics.pulse_fwhm(trace, clock, discard)
    except FitError:
        fwhm = math.nan
    window = trace.window(discard)
    spectrum = metrics.optical_spectrum(window, segment_ps=1e3 / clock)
    t, mean = metrics.mean_pulse(trace, clock, discard)
    return LaserPoint(
        injection_uw=injection.power_uw,
        wavelength_nm=injection.wavelength_nm,
        er_db=er.value,
        er_censored=er.censored,
        visibility=metrics.fringe_visibility(trace, clock, discard),
        phase_visibility=phase_vis,
        smsr_db=metrics.mode_suppression_ratio(trace, discard).value,
        pulse_fwhm_ps=float(fwhm),
        spectral_fwhm_ghz=spectrum.fwhm_ghz(),
        pulse_photons=float(mean.sum()),
    )


def config_point(config, power_uw: float, wavelength_nm: float | None = None) -> LaserPoint:
    """:func:`laser_point` for an :class:`ExperimentConfig` operating point."""
    wl = config.injection.wavelength_nm if wavelength_nm is None else wavelength_nm
    inj = replace(config.injection, power_uw=float(power_uw), wavelength_nm=float(wl))
    return laser_point(config.laser, config.drive, inj, int(config.calibration_pulses),
                       point_seed(config.seed, wl))


def clear_cache() -> None:
    laser_point.cache_clear()
