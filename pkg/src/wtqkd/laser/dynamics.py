"""Time-domain simulation of the injection-locked, gain-switched FP laser."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from ..errors import NumericalInstabilityError
from . import kernels
from .params import DriveSignal, InjectionParams, LaserParams

TEC_RESOLUTION_K = 0.01
CHUNK_SAMPLES = 2000


@dataclass(frozen=True)
class TecSetting:
    temperature_offset_k: float
    injected_mode: int
    detuning_nm: float  # mode wavelength minus injection wavelength


def tec_setting(params: LaserParams, wavelength_nm: float) -> TecSetting:
    """Temperature offset that slides the mode grid onto ``wavelength_nm``.

    The offset is confined to half a mode spacing either way and rounded to
    the TEC resolution; the nearest mode after the shift is the injected one.
    """
    half = params.mode_count // 2
    rel = (wavelength_nm - params.center_wavelength_nm) / params.mode_spacing_nm
    idx = int(round(rel))
    if abs(idx) > half:
        raise ValueError(f"{wavelength_nm} nm lies outside the {params.mode_count}-mode grid")
    shift_nm = wavelength_nm - (params.center_wavelength_nm + idx * params.mode_spacing_nm)
    dt_k = round(shift_nm / params.temperature_tuning_nm_per_k / TEC_RESOLUTION_K) * TEC_RESOLUTION_K
    mode_nm = params.mode_wavelengths(dt_k)[idx + half]
    return TecSetting(dt_k, idx + half, mode_nm - wavelength_nm)


@dataclass(frozen=True, eq=False)
class FieldTrace:
    """Sampled output of one simulation run.

    ``side_mode_photons`` has one column per mode of the grid; the column of
    the injected mode is identically zero because that mode is carried by the
    complex ``field`` instead.
    """

    time_ps: np.ndarray
    field: np.ndarray
    side_mode_photons: np.ndarray
    carrier_density: np.ndarray
    rng_seed: int
    injected_mode: int
    mode_wavelengths_nm: np.ndarray
    injection_wavelength_nm: float
    injection_phase: float = 0.0

    def __post_init__(self):
        for name in ("time_ps", "field", "side_mode_photons", "carrier_density", "mode_wavelengths_nm"):
            getattr(self, name).setflags(write=False)

    @property
    def sample_interval_ps(self) -> float:
        return float(self.time_ps[1] - self.time_ps[0])

    @property
    def injected_power(self) -> np.ndarray:
        return np.abs(self.field) ** 2

    @property
    def total_photons(self) -> np.ndarray:
        return self.injected_power + self.side_mode_photons.sum(axis=1)

    def window(self, start_ps: float, stop_ps: float | None = None) -> FieldTrace:
        """Sub-trace with ``start_ps <= t < stop_ps``."""
        mask = self.time_ps >= start_ps
        if stop_ps is not None:
            mask &= self.time_ps < stop_ps
        return FieldTrace(
            self.time_ps[mask], self.field[mask], self.side_mode_photons[mask],
            self.carrier_density[mask], self.rng_seed, self.injected_mode,
            self.mode_wavelengths_nm, self.injection_wavelength_nm, self.injection_phase,
        )

    def to_csv(self, path) -> None:
        """Columns: ``time_ps, re_E, im_E, S_m0..S_m{M-1}, N``."""
        m = self.side_mode_photons.shape[1]
        header = ["time_ps", "re_E", "im_E"] + [f"S_m{j}" for j in range(m)] + ["N"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.time_ps.size):
                row = [self.time_ps[k], self.field[k].real, self.field[k].imag, *self.side_mode_photons[k], self.carrier_density[k]]
                w.writerow([repr(float(x)) for x in row])


def _coefficients(params: LaserParams, injection: InjectionParams, tec: TecSetting) -> np.ndarray:
    lam_inj = injection.wavelength_nm * 1e-9
    lam_mode = lam_inj + tec.detuning_nm * 1e-9
    d_omega = 2.0 * math.pi * constants.c * (1.0 / lam_mode - 1.0 / lam_inj)
    drive = injection.coupling_rate_per_ns * 1e9 * injection.photon_amplitude(params.round_trip_time_ps)
    wl = params.mode_wavelengths(tec.temperature_offset_k)
    p = np.array([
        params.gain_coefficient,
        params.transparency_density,
        1.0 / (params.photon_lifetime_ps * 1e-12),
        1.0 / (params.carrier_lifetime_ns * 1e-9),
        params.linewidth_enhancement,
        params.spont_emission_fraction,
        params.gain_compression,
        params.elementary_charge * params.active_volume,
        params.active_volume,
        drive * math.cos(injection.phase),
        drive * math.sin(injection.phase),
        d_omega,
        float(params.gain_envelope(wl[tec.injected_mode])),
    ])
    assert p.size == kernels.N_PARAMS
    return p


def simulate(
    params: LaserParams,
    drive: DriveSignal,
    injection: InjectionParams,
    seed: int,
    *,
    time_step_ps: float = 0.2,
    backend: str | None = None,
) -> FieldTrace:
    """Integrate the rate equations over the whole drive record.

    The output is sampled at the drive's sample instants.  Noise comes from a
    Philox stream keyed by ``seed`` and is drawn in fixed-size chunks, so the
    result does not depend on the backend beyond floating-point rounding.
    """
    if drive.duration_ps < 1000.0:
        raise ValueError("drive must cover at least 1 ns")
    if drive.sample_interval_ps > 1.0:
        raise ValueError("drive sample interval must be <= 1 ps")
    substeps = max(1, int(round(drive.sample_interval_ps / time_step_ps)))
    dt = drive.sample_interval_ps / substeps * 1e-12

    tec = tec_setting(params, injection.wavelength_nm)
    wl = params.mode_wavelengths(tec.temperature_offset_k)
    lside = params.gain_envelope(wl)
    lside[tec.injected_mode] = 0.0
    p = _coefficients(params, injection, tec)
    advance = kernels.get_advance(backend)

    m = params.mode_count
    n_samples = drive.samples.size
    currents = drive.samples * 1e-3
    out_fields = np.empty((n_samples, 3))
    out_s = np.empty((n_samples, m))
    state = np.zeros(3 + m)
    state[2] = params.transparency_density
    out_fields[0] = state[:3]
    out_s[0] = state[3:]

    rng = np.random.Generator(np.random.Philox(seed))
    start = 0
    while start < n_samples - 1:
        stop = min(start + CHUNK_SAMPLES, n_samples - 1)
        xi_e = rng.standard_normal((stop - start, 2))
        xi_s = rng.standard_normal((stop - start, m))
        bad = advance(
            state, currents[start:stop + 1], substeps, dt, p, lside, xi_e, xi_s,
            out_fields[start + 1:stop + 1], out_s[start + 1:stop + 1],
        )
        if bad >= 0:
            global_step = start * substeps + bad
            raise NumericalInstabilityError(global_step, global_step * dt * 1e12)
        start = stop

    t = np.arange(n_samples) * drive.sample_interval_ps
    return FieldTrace(
        time_ps=t,
        field=out_fields[:, 0] + 1j * out_fields[:, 1],
        side_mode_photons=out_s,
        carrier_density=out_fields[:, 2].copy(),
        rng_seed=int(seed),
        injected_mode=tec.injected_mode,
        mode_wavelengths_nm=wl,
        injection_wavelength_nm=injection.wavelength_nm,
        injection_phase=injection.phase,
    )
