"""Sifting, decoy-state bounds and the asymptotic secure key rate."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .channel import DetectionRecords, ExpectedDetections
from .errors import DecoyEstimationError, MalformedRecordError
from .protocol import BASIS_NAMES, CLASS_NAMES, Basis, IntensityClass, ProtocolConfig, SymbolBatch

ERROR_CORRECTION_EFFICIENCY = 1.16


@dataclass(frozen=True, eq=False)
class DetectionTally:
    """Counts indexed ``[class, basis]`` (classes signal/decoy/vacuum; bases Z/X)."""

    sent: np.ndarray
    detected: np.ndarray
    errors: np.ndarray

    def __post_init__(self):
        for name in ("sent", "detected", "errors"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(3, 2)
            if np.any(arr < 0):
                raise ValueError(f"{name} counts must be >= 0")
            object.__setattr__(self, name, arr)
        if np.any(self.errors > self.detected):
            raise ValueError("error count exceeds detected count")
        if np.any((self.sent == 0) & (self.detected > 0)):
            raise ValueError("detections recorded for a class that was never sent")

    def __add__(self, other: DetectionTally) -> DetectionTally:
        return DetectionTally(self.sent + other.sent, self.detected + other.detected, self.errors + other.errors)

    def __eq__(self, other):
        if not isinstance(other, DetectionTally):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("sent", "detected", "errors"))

    @classmethod
    def empty(cls) -> DetectionTally:
        z = np.zeros((3, 2), dtype=np.int64)
        return cls(z, z, z)

    def gains(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.sent > 0, self.detected / np.maximum(self.sent, 1), np.nan)

    def qbers(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.detected > 0, self.errors / np.maximum(self.detected, 1), np.nan)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "basis", "sent", "detected", "errors"])
            for c in range(3):
                for b in range(2):
                    w.writerow([CLASS_NAMES[c], BASIS_NAMES[b], int(self.sent[c, b]),
                                int(self.detected[c, b]), int(self.errors[c, b])])

    @classmethod
    def from_csv(cls, path) -> DetectionTally:
        sent = np.zeros((3, 2), dtype=np.int64)
        det = np.zeros_like(sent)
        err = np.zeros_like(sent)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                c = CLASS_NAMES.index(row["class"])
                b = BASIS_NAMES.index(row["basis"])
                sent[c, b] = int(row["sent"])
                det[c, b] = int(row["detected"])
                err[c, b] = int(row["errors"])
        return cls(sent, det, err)


def sift(sent: SymbolBatch, records: DetectionRecords) -> DetectionTally:
    """Score basis-matched records against the transmitted symbols.

    D1 records count for Z symbols (error when the bin differs from the bit);
    D2/D3 records count for X symbols (phase 0 should reach D2, pi D3).
    Records in the other basis are sifted out.  Every record is scored on its
    own, so a double click contributes two detections.
    """
    n = len(sent)
    idx = records.symbol_index
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise MalformedRecordError("record refers to a symbol index outside the sent sequence")
    basis = sent.basis[idx]
    bit = sent.bit[idx]
    klass = sent.intensity_class[idx].astype(np.int64)
    is_z_rec = records.detector == 0
    z_ok = is_z_rec & (basis == Basis.Z)
    x_ok = ~is_z_rec & (basis == Basis.X)
    z_err = z_ok & (records.bin != bit)
    x_err = x_ok & ((records.detector - 1) != bit)

    sent_counts = np.zeros((3, 2), dtype=np.int64)
    np.add.at(sent_counts, (sent.intensity_class.astype(np.int64), sent.basis.astype(np.int64)), 1)
    detected = np.zeros((3, 2), dtype=np.int64)
    errors = np.zeros((3, 2), dtype=np.int64)
    for b, ok, err in ((0, z_ok, z_err), (1, x_ok, x_err)):
        detected[:, b] = np.bincount(klass[ok], minlength=3)
        errors[:, b] = np.bincount(klass[err], minlength=3)
    return DetectionTally(sent_counts, detected, errors)


def binary_entropy(p):
    """h2(p) in bits, with h2(0) = h2(1) = 0."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("binary entropy needs p in [0, 1]")
    inside = (arr > 0) & (arr < 1)
    q = np.where(inside, arr, 0.5)
    h = np.where(inside, -q * np.log2(q) - (1 - q) * np.log2(1 - q), 0.0)
    return float(h) if h.ndim == 0 else h


def analytic_gain_qber(intensity: float, eta_total: float, y0: float, e_opt: float) -> tuple[float, float]:
    """Gain and QBER of a Poissonian source through transmittance ``eta_total``.

    Dark/background clicks (``y0``) are random, i.e. wrong half the time.
    """
    signal = -math.expm1(-eta_total * intensity)
    q = y0 + signal
    if q <= 0:
        return 0.0, 0.5
    return q, (0.5 * y0 + e_opt * signal) / q


@dataclass(frozen=True)
class DecoyGains:
    """Gain and QBER per intensity class in one basis, with the class intensities."""

    q_signal: float
    q_decoy: float
    q_vacuum: float
    e_signal: float
    e_decoy: float
    mu: float
    nu: float

    @classmethod
    def from_arrays(cls, gains, qbers, config: ProtocolConfig, basis: Basis) -> DecoyGains:
        mu = config.symbol_intensities(basis)
        s, d, v = IntensityClass.SIGNAL, IntensityClass.DECOY, IntensityClass.VACUUM
        return cls(float(gains[s, basis]), float(gains[d, basis]), float(gains[v, basis]),
                   float(qbers[s, basis]), float(qbers[d, basis]), float(mu[s]), float(mu[d]))


def decoy_bounds(g: DecoyGains) -> tuple[float, float]:
    """Vacuum + weak-decoy lower bound on Y1 and upper bound on e1.

    Raises :class:`DecoyEstimationError` when the yield bound is not positive.
    """
    mu, nu, y0 = g.mu, g.nu, g.q_vacuum
    if not 0 < nu < mu:
        raise ValueError("need 0 < nu < mu")
    y1 = (mu / (mu * nu - nu * nu)) * (
        g.q_decoy * math.exp(nu)
        - g.q_signal * math.exp(mu) * (nu * nu) / (mu * mu)
        - ((mu * mu - nu * nu) / (mu * mu)) * y0
    )
    if not y1 > 0:
        raise DecoyEstimationError(f"single-photon yield bound is {y1:.3g}")
    y1 = min(y1, 1.0)
    e1 = (g.e_decoy * g.q_decoy * math.exp(nu) - 0.5 * y0) / (y1 * nu)
    return y1, min(max(e1, 0.0), 1.0)


@dataclass(frozen=True)
class SkrResult:
    skr: float  # bits/s
    q_sift: float
    Q_mu: float
    E_mu: float
    Y1_lower: float
    e1_upper: float
    Q1_lower: float

    def as_dict(self) -> dict:
        return asdict(self)


def secure_key_rate(
    Q_mu: float,
    E_mu: float,
    Y1_lower: float,
    e1_upper: float,
    config: ProtocolConfig,
    clock_ghz: float | None = None,
    ec_efficiency: float = ERROR_CORRECTION_EFFICIENCY,
    sift_factor: float | None = None,
) -> SkrResult:
    """Asymptotic decoy-state key rate in bits/s, clamped at zero.

    ``sift_factor`` defaults to the squared Z-basis probability.
    """
    for name, v in (("Q_mu", Q_mu), ("E_mu", E_mu), ("Y1_lower", Y1_lower), ("e1_upper", e1_upper)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if ec_efficiency < 1.0:
        raise ValueError("error-correction efficiency must be >= 1")
    clock = config.symbol_rate_ghz if clock_ghz is None else clock_ghz
    q_sift = config.z_basis_probability**2 if sift_factor is None else sift_factor
    mu = config.symbol_intensities(Basis.Z)[IntensityClass.SIGNAL]
    q1 = Y1_lower * mu * math.exp(-mu)
    per_symbol = q1 * (1.0 - binary_entropy(e1_upper)) - ec_efficiency * Q_mu * binary_entropy(E_mu)
    p_signal = config.intensity_probabilities[IntensityClass.SIGNAL]
    skr = clock * 1e9 * p_signal * q_sift * max(0.0, per_symbol)
    return SkrResult(skr, q_sift, Q_mu, E_mu, Y1_lower, e1_upper, q1)


def key_rate_from_stats(
    gains,
    qbers,
    config: ProtocolConfig,
    ec_efficiency: float = ERROR_CORRECTION_EFFICIENCY,
    sift_factor: float | None = None,
) -> SkrResult:
    """Key rate from per-class, per-basis gains and QBERs.

    The key is drawn from Z-basis signal detections; the single-photon yield
    is bounded from the Z-basis decoy statistics and the single-photon phase
    error from the X-basis ones.  A failed decoy estimate yields zero rate.
    """
    gz = DecoyGains.from_arrays(gains, qbers, config, Basis.Z)
    gx = DecoyGains.from_arrays(gains, qbers, config, Basis.X)
    q_mu = min(max(gz.q_signal, 0.0), 1.0)
    e_mu = min(max(gz.e_signal, 0.0), 1.0)
    try:
        y1, _ = decoy_bounds(gz)
        _, e1 = decoy_bounds(gx)
    except DecoyEstimationError:
        return SkrResult(0.0, config.z_basis_probability**2 if sift_factor is None else sift_factor,
                         q_mu, e_mu, 0.0, 0.5, 0.0)
    return secure_key_rate(q_mu, e_mu, y1, e1, config, ec_efficiency=ec_efficiency, sift_factor=sift_factor)


def key_rate_from_tally(tally: DetectionTally, config: ProtocolConfig, **kw) -> SkrResult:
    return key_rate_from_stats(tally.gains(), np.nan_to_num(tally.qbers(), nan=0.5), config, **kw)


def key_rate_from_expected(expected: ExpectedDetections, config: ProtocolConfig, **kw) -> SkrResult:
    return key_rate_from_stats(expected.gain, expected.qber, config, **kw)
