"""Parameter containers for the injection-locked Fabry-Perot laser model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import numpy as np
from scipy import constants

from ..errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

WT_RANGE_NM = (1500.0, 1600.0)


@dataclass(frozen=True)
class LaserParams:
    """Physical constants of the FP laser.

    Units follow the attribute suffixes: currents in mA, carrier lifetime in
    ns, photon lifetime in ps, wavelengths in nm.  ``gain_compression`` is per
    intracavity photon and ``spont_emission_fraction`` is the fraction of
    spontaneous recombination coupled into the gain-peak mode.
    """

    elementary_charge: float = constants.e
    confinement: float = 0.2
    group_velocity: float = constants.c / 3.6
    differential_gain: float = 2.5e-20
    active_volume: float = 4.0e-17
    threshold_current_ma: float = 14.0
    carrier_lifetime_ns: float = 1.0
    photon_lifetime_ps: float = 2.0
    linewidth_enhancement: float = 3.0
    spont_emission_fraction: float = 1e-5
    gain_compression: float = 1e-6
    transparency_density: float = 1.0e24
    mode_count: int = 81
    mode_spacing_nm: float = 1.25
    center_wavelength_nm: float = 1550.0
    gain_width_nm: float = 40.0
    temperature_tuning_nm_per_k: float = 0.1

    def __post_init__(self):
        positive = (
            "elementary_charge", "confinement", "group_velocity", "differential_gain",
            "active_volume", "threshold_current_ma", "carrier_lifetime_ns",
            "photon_lifetime_ps", "transparency_density", "mode_spacing_nm",
            "center_wavelength_nm", "gain_width_nm",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"laser.{name}", f"must be finite and > 0, got {value!r}")
        for name in ("spont_emission_fraction", "gain_compression"):
            if getattr(self, name) < 0:
                raise ConfigError(f"laser.{name}", "must be >= 0")
        if int(self.mode_count) != self.mode_count or self.mode_count < 3 or self.mode_count % 2 == 0:
            raise ConfigError("laser.mode_count", f"must be an odd integer >= 3, got {self.mode_count!r}")

    @property
    def gain_coefficient(self) -> float:
        """Gamma * v_g * sigma_g in m^3/s."""
        return self.confinement * self.group_velocity * self.differential_gain

    @property
    def threshold_density(self) -> float:
        """Carrier density at which the gain-peak mode reaches threshold."""
        return self.transparency_density + 1.0 / (self.gain_coefficient * self.photon_lifetime_ps * 1e-12)

    @property
    def model_threshold_current_ma(self) -> float:
        """Threshold current implied by the rate-equation parameters."""
        n_th = self.threshold_density
        return self.elementary_charge * self.active_volume * n_th / (self.carrier_lifetime_ns * 1e-9) * 1e3

    @property
    def round_trip_time_ps(self) -> float:
        lam = self.center_wavelength_nm * 1e-9
        return lam**2 / (constants.c * self.mode_spacing_nm * 1e-9) * 1e12

    def mode_offsets(self) -> np.ndarray:
        """Mode index offsets from the grid centre, e.g. -40..40 for M = 81."""
        half = self.mode_count // 2
        return np.arange(-half, half + 1)

    def mode_wavelengths(self, temperature_offset_k: float = 0.0) -> np.ndarray:
        shift = self.temperature_tuning_nm_per_k * temperature_offset_k
        return self.center_wavelength_nm + shift + self.mode_offsets() * self.mode_spacing_nm

    def gain_envelope(self, wavelengths_nm) -> np.ndarray:
        d = np.asarray(wavelengths_nm, dtype=float) - self.center_wavelength_nm
        return np.exp(-(d**2) / (2.0 * self.gain_width_nm**2))

    def replace(self, **changes) -> LaserParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class InjectionParams:
    power_uw: float = 80.0
    wavelength_nm: float = 1550.12
    coupling_rate_per_ns: float = 100.0
    phase: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.power_uw) and self.power_uw >= 0):
            raise ConfigError("injection.power_uw", "must be >= 0")
        lo, hi = WT_RANGE_NM
        if not (lo <= self.wavelength_nm <= hi):
            raise ConfigError("injection.wavelength_nm", f"must lie in [{lo}, {hi}] nm")
        if self.coupling_rate_per_ns < 0:
            raise ConfigError("injection.coupling_rate_per_ns", "must be >= 0")

    def photon_amplitude(self, round_trip_time_ps: float) -> float:
        """Square root of the injected photon number per cavity round trip."""
        nu = constants.c / (self.wavelength_nm * 1e-9)
        photons_per_s = self.power_uw * 1e-6 / (constants.h * nu)
        return math.sqrt(photons_per_s * round_trip_time_ps * 1e-12)


@dataclass(frozen=True)
class DriveSignal:
    """Sampled injection current.  ``samples`` holds the total current in mA."""

    dc_bias: float
    samples: np.ndarray
    sample_interval_ps: float
    pattern_description: str = ""

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.sample_interval_ps > 0:
            raise ValueError("sample_interval_ps must be > 0")
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("drive needs at least two samples")
        if np.any(samples < 0) or not np.all(np.isfinite(samples)):
            raise ValueError("drive currents must be finite and >= 0")

    @property
    def duration_ps(self) -> float:
        return (self.samples.size - 1) * self.sample_interval_ps

    @classmethod
    def constant(cls, current_ma: float, duration_ps: float, sample_interval_ps: float = 1.0) -> DriveSignal:
        n = int(round(duration_ps / sample_interval_ps)) + 1
        return cls(current_ma, np.full(n, float(current_ma)), sample_interval_ps, "cw")

    @classmethod
    def gain_switched(
        cls,
        dc_bias: float,
        rf_amplitude: float,
        rate_ghz: float,
        n_slots: int,
        pulse_fwhm_ps: float = 120.0,
        pattern=None,
        sample_interval_ps: float = 1.0,
    ) -> DriveSignal:
        """AC-coupled train of Gaussian current pulses on top of ``dc_bias``.

        ``pattern`` selects which of the ``n_slots`` time slots carry a pulse
        (all of them by default).  The RF part has zero mean over the record,
        as after a DC block, and the total is floored at 0 mA.
        """
        period = 1e3 / rate_ghz
        if pattern is None:
            pattern = np.ones(n_slots, dtype=bool)
        pattern = np.asarray(pattern, dtype=bool)
        if pattern.size != n_slots:
            raise ValueError("pattern length must equal n_slots")
        n = int(round(n_slots * period / sample_interval_ps)) + 1
        t = np.arange(n) * sample_interval_ps
        s = pulse_fwhm_ps / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        # pulse centred mid-slot; periodic wrap keeps the first slot's leading edge
        phase = np.mod(t, period) - 0.5 * period
        slot = np.minimum((t // period).astype(int), n_slots - 1)
        shape = np.exp(-0.5 * (phase / s) ** 2) * pattern[slot]
        rf = rf_amplitude * (shape - shape.mean())
        desc = f"gain-switched {rate_ghz:g} GHz, {int(pattern.sum())}/{n_slots} slots"
        return cls(dc_bias, np.maximum(dc_bias + rf, 0.0), sample_interval_ps, desc)


@dataclass(frozen=True)
class OperatingPoint:
    """Drive settings used by the calibration simulations."""

    dc_bias_ma: float = 14.8
    rf_amplitude_ma: float = 60.0
    pulse_fwhm_ps: float = 120.0
    pulse_rate_ghz: float = 2.0
    n_pulses: int = 128
    discard_pulses: int = 8
    time_step_ps: float = 0.2
    sample_interval_ps: float = 1.0


@dataclass(frozen=True)
class LaserPreset:
    laser: LaserParams = field(default_factory=LaserParams)
    injection: InjectionParams = field(default_factory=InjectionParams)
    drive: OperatingPoint = field(default_factory=OperatingPoint)


def _build(cls, table: dict, prefix: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}", "unknown key")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(prefix, str(exc)) from None


def preset_from_mapping(data: dict) -> LaserPreset:
    return LaserPreset(
        laser=_build(LaserParams, data.get("laser", {}), "laser"),
        injection=_build(InjectionParams, data.get("injection", {}), "injection"),
        drive=_build(OperatingPoint, data.get("drive", {}), "drive"),
    )


def load_preset(path=None) -> LaserPreset:
    """Read a laser preset TOML file; the shipped calibrated preset by default."""
    if path is None:
        text = resources.files("wtqkd.data").joinpath("laser_default.toml").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return preset_from_mapping(tomllib.loads(text))


def preset_to_mapping(preset: LaserPreset) -> dict:
    return {"laser": asdict(preset.laser), "injection": asdict(preset.injection), "drive": asdict(preset.drive)}
