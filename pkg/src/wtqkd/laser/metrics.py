"""Pulse and spectrum metrics computed from simulated traces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import least_squares

from ..errors import BelowThresholdError, FitError, InsufficientDataError
from .dynamics import FieldTrace
from .params import LaserParams

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class CensoredDb:
    """A dB ratio; ``censored`` marks a lower bound from an empty denominator."""

    value: float
    censored: bool = False

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class PulseHistogram:
    bin_edges_ps: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges_ps, dtype=float)
        counts = np.asarray(self.counts)
        if edges.size != counts.size + 1:
            raise ValueError("need len(bin_edges) == len(counts) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be >= 0")
        object.__setattr__(self, "bin_edges_ps", edges)
        object.__setattr__(self, "counts", counts)


def modulation_bandwidth(params: LaserParams, bias_ma: float) -> float:
    """Small-signal modulation-bandwidth estimate, linear in the overdrive.

    Evaluates ``3/(4 pi^2 q) * Gamma v_g sigma_g / V * (I_b - I_th)`` with SI
    inputs.  That product carries units of Hz^2 (it is the square of the
    3 dB frequency), so the value is returned in GHz^2; see
    :func:`modulation_bandwidth_3db` for the frequency itself.
    """
    if bias_ma < params.threshold_current_ma:
        raise BelowThresholdError(
            f"bias {bias_ma} mA is below threshold {params.threshold_current_ma} mA"
        )
    pref = 3.0 / (4.0 * math.pi**2 * params.elementary_charge)
    rate = params.gain_coefficient / params.active_volume
    return pref * rate * (bias_ma - params.threshold_current_ma) * 1e-3 * 1e-18


def modulation_bandwidth_3db(params: LaserParams, bias_ma: float) -> float:
    """3 dB modulation bandwidth in GHz."""
    return math.sqrt(modulation_bandwidth(params, bias_ma))


def extinction_ratio(hist: PulseHistogram) -> CensoredDb:
    """Peak-to-minimum count ratio in dB; an empty minimum bin counts as 1."""
    counts = hist.counts
    n_max = float(counts.max())
    n_min = float(counts.min())
    if n_max <= 0:
        raise InsufficientDataError("histogram is empty")
    if n_min <= 0:
        return CensoredDb(10.0 * math.log10(n_max), True)
    return CensoredDb(10.0 * math.log10(n_max / n_min))


def _pulse_slots(trace: FieldTrace, clock_ghz: float, discard_ps: float):
    """Sample indices of the complete clock periods after ``discard_ps``."""
    period = 1e3 / clock_ghz
    per = int(round(period / trace.sample_interval_ps))
    if abs(per * trace.sample_interval_ps - period) > 1e-6 * period:
        raise ValueError("clock period must be a whole number of samples")
    first = int(math.ceil((discard_ps - trace.time_ps[0]) / trace.sample_interval_ps))
    first = max(first, 0)
    # align slot starts to absolute multiples of the period
    first += (-int(round(trace.time_ps[first] / trace.sample_interval_ps))) % per
    n_slots = (trace.time_ps.size - first) // per
    return first, per, n_slots


def pulse_histogram(
    trace: FieldTrace,
    clock_ghz: float,
    *,
    bin_ps: float = 5.0,
    peak_counts: float = 1e6,
    discard_ps: float = 2000.0,
) -> PulseHistogram:
    """Fold the total output power at the clock period into a count histogram.

    Counts are the expected detections scaled so the peak bin holds
    ``peak_counts`` and rounded to integers, i.e. a noiseless stand-in for a
    long photon-counting acquisition.
    """
    first, per, n_slots = _pulse_slots(trace, clock_ghz, discard_ps)
    if n_slots < 1:
        raise InsufficientDataError("trace shorter than one clock period")
    power = trace.total_photons[first:first + n_slots * per].reshape(n_slots, per).sum(axis=0)
    per_bin = max(1, int(round(bin_ps / trace.sample_interval_ps)))
    n_bins = per // per_bin
    folded = power[: n_bins * per_bin].reshape(n_bins, per_bin).sum(axis=1)
    counts = np.rint(folded * (peak_counts / folded.max())).astype(np.int64)
    edges = np.arange(n_bins + 1) * per_bin * trace.sample_interval_ps
    return PulseHistogram(edges, counts)


def _gauss(theta, t):
    a, t0, s, c = theta
    return a * np.exp(-0.5 * ((t - t0) / s) ** 2) + c


@dataclass(frozen=True)
class GaussianFit:
    fwhm_ps: float
    center_ps: float
    amplitude: float
    offset: float
    residual: float  # rms of the fit residual relative to the peak height


def fit_gaussian(intensity, time_ps, *, max_nfev: int = 2000) -> GaussianFit:
    """Least-squares fit of ``A exp(-(t - t0)^2 / 2s^2) + c``."""
    y = np.asarray(intensity, dtype=float)
    t = np.asarray(time_ps, dtype=float)
    span = float(y.max() - y.min())
    if y.size < 5 or not span > 0:
        raise FitError("no peak to fit", residual=float(np.std(y)) if y.size else float("nan"))
    base = float(np.median(y))
    i_pk = int(np.argmax(y))
    above = t[y - y.min() >= 0.5 * span]
    s0 = max((above.max() - above.min()) / FWHM_PER_SIGMA, np.min(np.diff(t)))
    theta0 = [y[i_pk] - base, t[i_pk], s0, base]
    res = least_squares(lambda th: _gauss(th, t) - y, theta0, x_scale="jac", max_nfev=max_nfev)
    resid = float(np.sqrt(np.mean(res.fun**2)) / span)
    if not res.success or res.x[0] <= 0:
        raise FitError("Gaussian fit did not converge", residual=resid)
    a, t0, s, c = res.x
    return GaussianFit(FWHM_PER_SIGMA * abs(s), t0, a, c, resid)


def fit_gaussian_fwhm(intensity, time_ps) -> float:
    return fit_gaussian(intensity, time_ps).fwhm_ps


def mean_pulse(trace: FieldTrace, clock_ghz: float, discard_ps: float = 2000.0):
    """Average total-power pulse over complete clock periods, with its time axis."""
    first, per, n_slots = _pulse_slots(trace, clock_ghz, discard_ps)
    if n_slots < 1:
        raise InsufficientDataError("trace shorter than one clock period")
    power = trace.total_photons[first:first + n_slots * per].reshape(n_slots, per).mean(axis=0)
    return np.arange(per) * trace.sample_interval_ps, power


def pulse_fwhm(trace: FieldTrace, clock_ghz: float, discard_ps: float = 2000.0) -> float:
    t, p = mean_pulse(trace, clock_ghz, discard_ps)
    return fit_gaussian_fwhm(p, t)


def mode_suppression_ratio(trace: FieldTrace, discard_ps: float = 0.0) -> CensoredDb:
    """Injected-mode over strongest side-mode time-averaged power, in dB."""
    tr = trace.window(discard_ps) if discard_ps > 0 else trace
    main = float(tr.injected_power.mean())
    side = tr.side_mode_photons.mean(axis=0)
    side[tr.injected_mode] = 0.0
    strongest = float(side.max())
    if strongest <= 0:
        return CensoredDb(10.0 * math.log10(max(main, 1.0)), True)
    return CensoredDb(10.0 * math.log10(main / strongest))


def pulse_phases(
    trace: FieldTrace,
    clock_ghz: float,
    *,
    discard_ps: float = 2000.0,
    min_photons: float = 1.0,
) -> np.ndarray:
    """Energy-weighted mean phase of the injected-mode field in each period.

    Periods whose integrated photon number is below ``min_photons`` (in
    photon-samples) are returned as NaN.
    """
    first, per, n_slots = _pulse_slots(trace, clock_ghz, discard_ps)
    e = trace.field[first:first + n_slots * per].reshape(n_slots, per)
    weighted = (np.abs(e) * e).sum(axis=1)
    energy = (np.abs(e) ** 2).sum(axis=1)
    phases = np.angle(weighted)
    phases[energy < min_photons] = np.nan
    return phases


def interference_visibility(phases) -> float:
    """|mean_k exp(i (phi_k - phi_{k+1}))| over adjacent pairs, skipping NaNs."""
    ph = np.asarray(phases, dtype=float)
    if ph.size < 2:
        raise InsufficientDataError("need at least two phases")
    d = ph[:-1] - ph[1:]
    d = d[np.isfinite(d)]
    if d.size == 0:
        raise InsufficientDataError("no adjacent pair with both phases present")
    return float(abs(np.mean(np.exp(1j * d))))


def circular_std(phases) -> float:
    ph = np.asarray(phases, dtype=float)
    ph = ph[np.isfinite(ph)]
    r = abs(np.mean(np.exp(1j * ph)))
    return float(math.sqrt(-2.0 * math.log(max(r, 1e-300))))


def circular_mean(phases) -> float:
    ph = np.asarray(phases, dtype=float)
    ph = ph[np.isfinite(ph)]
    return float(np.angle(np.mean(np.exp(1j * ph))))


def fringe_visibility(trace: FieldTrace, clock_ghz: float, discard_ps: float = 2000.0) -> float:
    """Fringe visibility of adjacent pulses overlapped in a delay interferometer.

    Ratio of the coherent cross term between consecutive periods of the
    injected-mode field to the mean total energy (injected plus side modes)
    of the two periods.  Side-mode light adds energy but, being seeded by
    spontaneous emission, no average interference.
    """
    first, per, n_slots = _pulse_slots(trace, clock_ghz, discard_ps)
    if n_slots < 2:
        raise InsufficientDataError("need at least two periods")
    sl = slice(first, first + n_slots * per)
    e = trace.field[sl].reshape(n_slots, per)
    tot = trace.total_photons[sl].reshape(n_slots, per).sum(axis=1)
    cross = np.sum(np.conj(e[:-1]) * e[1:])
    norm = 0.5 * np.sum(tot[:-1] + tot[1:])
    return float(min(1.0, abs(cross) / norm))


@dataclass(frozen=True)
class Spectrum:
    """Optical power spectrum; offsets relative to the injection frequency."""

    freq_offset_ghz: np.ndarray
    wavelength_nm: np.ndarray
    power: np.ndarray
    side_mode_wavelength_nm: np.ndarray
    side_mode_power: np.ndarray

    def fwhm_ghz(self) -> float:
        """Width between the outermost half-maximum crossings of the line."""
        p = self.power
        f = self.freq_offset_ghz
        half = 0.5 * p.max()
        idx = np.flatnonzero(p >= half)
        lo, hi = idx[0], idx[-1]

        def cross(a, b):
            return f[a] + (half - p[a]) * (f[b] - f[a]) / (p[b] - p[a])

        left = cross(lo - 1, lo) if lo > 0 else f[lo]
        right = cross(hi + 1, hi) if hi < p.size - 1 else f[hi]
        return float(right - left)


def optical_spectrum(trace: FieldTrace, segment_ps: float | None = None) -> Spectrum:
    """Power spectrum of the injected-mode field.

    With ``segment_ps`` the record is cut into consecutive segments of that
    length whose periodograms are averaged (resolution 1/segment); otherwise a
    single periodogram of the whole record is returned.  Side modes appear as
    lines at their grid wavelengths with their mean photon numbers.
    """
    dt = trace.sample_interval_ps * 1e-12
    e = np.asarray(trace.field)
    if segment_ps is None:
        segs = e[None, :]
    else:
        n = int(round(segment_ps / trace.sample_interval_ps))
        k = e.size // n
        if k < 1:
            raise InsufficientDataError("trace shorter than one segment")
        segs = e[: k * n].reshape(k, n)
    spec = np.mean(np.abs(np.fft.fft(segs, axis=1)) ** 2, axis=0)
    freq = np.fft.fftfreq(segs.shape[1], dt)
    order = np.argsort(freq)
    freq = freq[order]
    spec = spec[order] / segs.shape[1] ** 2
    nu0 = constants.c / (trace.injection_wavelength_nm * 1e-9)
    wl = constants.c / (nu0 + freq) * 1e9
    side = trace.side_mode_photons.mean(axis=0).copy()
    keep = np.arange(side.size) != trace.injected_mode
    return Spectrum(freq * 1e-9, wl, spec, trace.mode_wavelengths_nm[keep], side[keep])
