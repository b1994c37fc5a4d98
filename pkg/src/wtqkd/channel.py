"""Attenuating channel, passive-basis receiver and SNSPD detection models.

Receiver layout: a beamsplitter sends light either straight to detector D1
(time of arrival, Z basis) or through a delay interferometer whose arm
difference equals one time bin, followed by detectors D2 and D3 (X basis).

Per symbol every detector is watched in two gates spaced half a symbol apart.
D1 has an ``early`` and a ``late`` gate.  D2/D3 have an ``interference`` gate,
where the two pulses of the same symbol overlap, and a ``boundary`` gate,
where the late pulse of the previous symbol meets the early pulse of this one.
Boundary clicks are never scored but they do load the detector (dead time).

Photon splitting at the beamsplitter and interferometer is treated at the
coherent-state level: every gate receives an independent Poisson photon
number whose mean follows from the pulse amplitudes.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._accel import njit
from .errors import ConfigError
from .protocol import Basis, ProtocolConfig, SymbolBatch

SATURATION_RATE_CPS = 10e6
DETECTOR_NAMES = ("D1", "D2", "D3")
BIN_NAMES = ("early", "late", "interference")


@dataclass(frozen=True)
class ChannelParams:
    attenuation_db: float = 0.0

    def __post_init__(self):
        if not self.attenuation_db >= 0:
            raise ConfigError("channel.attenuation_db", "must be >= 0")


@dataclass(frozen=True)
class ReceiverParams:
    bs_z_fraction: float = 0.5
    amzi_visibility: float = 0.99
    amzi_insertion_loss_db: float = 2.0
    receiver_insertion_loss_db: float = 1.0
    detector_efficiency: float = 0.33
    dark_count_rate_hz: float = 1.0
    gate_window_ps: float = 500.0
    dead_time_ns: float = 20.0
    efficiency_envelope_width_nm: float = 35.0 / math.sqrt(2.0 * math.log(1.0 / 0.9))

    def __post_init__(self):
        for name in ("bs_z_fraction", "amzi_visibility", "detector_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"receiver.{name}", "must lie in [0, 1]")
        for name in ("amzi_insertion_loss_db", "receiver_insertion_loss_db", "dark_count_rate_hz",
                     "gate_window_ps", "dead_time_ns"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"receiver.{name}", "must be >= 0")
        if not self.efficiency_envelope_width_nm > 0:
            raise ConfigError("receiver.efficiency_envelope_width_nm", "must be > 0")

    @property
    def dark_probability(self) -> float:
        """Dark-click probability per detector per gate."""
        return min(1.0, self.dark_count_rate_hz * self.gate_window_ps * 1e-12)


@dataclass(frozen=True)
class LinkExtras:
    """Transmitter imperfections carried into the link model.

    ``er_db`` sets the fraction ``10^(-ER/10)`` of each pulse that lands in the
    opposite time bin; ``visibility`` is the pulse-to-pulse coherence.
    """

    er_db: float = math.inf
    visibility: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError("link.visibility", "must lie in [0, 1]")

    @property
    def leakage(self) -> float:
        return 0.0 if math.isinf(self.er_db) else 10.0 ** (-self.er_db / 10.0)


def channel_transmittance(attenuation_db: float) -> float:
    if attenuation_db < 0:
        raise ValueError("attenuation must be >= 0 dB")
    return 10.0 ** (-attenuation_db / 10.0)


def amzi_output_probs(relative_phase, visibility):
    """Probabilities of leaving the interferometer towards D2 and D3."""
    c = np.multiply(visibility, np.cos(relative_phase))
    return 0.5 * (1.0 + c), 0.5 * (1.0 - c)


def click_probability(mean_photons, efficiency, dark_prob):
    """Threshold-detector click probability for a coherent pulse."""
    return 1.0 - (1.0 - np.asarray(dark_prob)) * np.exp(-np.multiply(efficiency, mean_photons))


@dataclass(frozen=True)
class PathTransmittance:
    """Factors of the two receiver paths, detector efficiency included.

    ``z`` is the mean-photon transmittance to D1.  ``x_arm`` is the
    transmittance to the D2+D3 pair; only half of that light arrives in the
    interference gate, so ``x_gate = x_arm / 2``.
    """

    channel: float
    receiver: float
    bs_z: float
    amzi: float
    detector: float

    @property
    def z(self) -> float:
        return self.channel * self.receiver * self.bs_z * self.detector

    @property
    def x_arm(self) -> float:
        return self.channel * self.receiver * (1.0 - self.bs_z) * self.amzi * self.detector

    @property
    def x_gate(self) -> float:
        return 0.5 * self.x_arm


def path_transmittance(channel: ChannelParams, receiver: ReceiverParams) -> PathTransmittance:
    return PathTransmittance(
        channel_transmittance(channel.attenuation_db),
        channel_transmittance(receiver.receiver_insertion_loss_db),
        receiver.bs_z_fraction,
        channel_transmittance(receiver.amzi_insertion_loss_db),
        receiver.detector_efficiency,
    )


def dead_gates(receiver: ReceiverParams, symbol_rate_ghz: float) -> int:
    """Gates blocked after an accepted click (gates are half a symbol apart)."""
    spacing_ns = 0.5 / symbol_rate_ghz
    return max(0, math.ceil(receiver.dead_time_ns / spacing_ns - 1e-9) - 1)


@dataclass(frozen=True)
class ExpectedDetections:
    """Expected per-symbol gains and QBERs, indexed ``[class, basis]``.

    ``gain[c, b]`` is the expected number of scored records per symbol sent
    in class ``c`` and basis ``b`` (detections in the matching receiver
    path); ``qber`` the expected fraction of those records in error.
    ``click_rate_cps`` and ``live_fraction`` describe detector loading for
    D1, D2, D3.
    """

    gain: np.ndarray
    qber: np.ndarray
    click_rate_cps: np.ndarray
    live_fraction: np.ndarray


def detect_analytic(
    config: ProtocolConfig,
    channel: ChannelParams,
    receiver: ReceiverParams,
    link: LinkExtras | None = None,
    *,
    dead_time: bool = True,
) -> ExpectedDetections:
    """Poissonian expected-value model of the receiver.

    Z errors come from pulse leakage into the wrong bin plus dark counts; X
    errors from the combined transmitter and interferometer visibility plus
    dark counts.  Dead time scales every gain of a detector by its live
    fraction ``1 / (1 + p D)`` for per-gate click probability ``p`` and ``D``
    blocked gates.
    """
    from .keyrate import analytic_gain_qber

    link = link or LinkExtras()
    eta = path_transmittance(channel, receiver)
    pd = receiver.dark_probability
    y0 = 1.0 - (1.0 - pd) ** 2
    v_total = link.visibility * receiver.amzi_visibility
    e_x = 0.5 * (1.0 - v_total)

    gain = np.empty((3, 2))
    qber = np.empty((3, 2))
    mu_z = config.symbol_intensities(Basis.Z)
    mu_x = config.symbol_intensities(Basis.X)
    for c in range(3):
        gain[c, 0], qber[c, 0] = analytic_gain_qber(mu_z[c], eta.z, y0, link.leakage)
        gain[c, 1], qber[c, 1] = analytic_gain_qber(mu_x[c], eta.x_gate, y0, e_x)

    # mean per-gate click probability of each detector, averaged over symbol mix
    p_gate = np.empty(3)
    # D1 splits each symbol's light over its two gates
    p_gate[0] = _mean_gate_click(config, eta.z, pd, share=0.5)
    # each of D2/D3 receives a quarter of the arm light per gate on average
    p_gate[1] = p_gate[2] = _mean_gate_click(config, eta.x_arm, pd, share=0.25)
    rate = p_gate * 2.0 * config.symbol_rate_ghz * 1e9
    n_dead = dead_gates(receiver, config.symbol_rate_ghz) if dead_time else 0
    live = 1.0 / (1.0 + p_gate * n_dead)
    gain[:, 0] *= live[0]
    gain[:, 1] *= live[1]
    if np.any(rate > SATURATION_RATE_CPS):
        warnings.warn(
            f"detector click rate {rate.max():.3g} cps exceeds {SATURATION_RATE_CPS:.0e} cps; "
            "SNSPD saturation expected",
            RuntimeWarning,
            stacklevel=2,
        )
    return ExpectedDetections(gain, qber, rate * live, live)


def _mean_gate_click(config: ProtocolConfig, eta: float, pd: float, share: float) -> float:
    """Average click probability of one gate receiving ``share`` of a symbol."""
    total = 0.0
    for b, pb in enumerate(config.basis_probabilities):
        mu = config.symbol_intensities(b)
        for c, pc in enumerate(config.intensity_probabilities):
            if b == Basis.Z and share == 0.5:
                # all light in one of the two gates
                p = 0.5 * (click_probability(mu[c], eta, pd) + pd)
            else:
                p = click_probability(share * mu[c], eta, pd)
            total += pb * pc * float(p)
    return total


@dataclass(frozen=True, eq=False)
class DetectionRecords:
    """Scored clicks as parallel arrays (struct of arrays).

    ``detector``: 0=D1, 1=D2, 2=D3; ``bin``: 0=early, 1=late, 2=interference.
    """

    symbol_index: np.ndarray
    detector: np.ndarray
    bin: np.ndarray
    is_dark: np.ndarray

    def __len__(self) -> int:
        return self.symbol_index.size

    def take(self, order) -> DetectionRecords:
        return DetectionRecords(self.symbol_index[order], self.detector[order], self.bin[order], self.is_dark[order])

    @classmethod
    def concatenate(cls, parts, offsets) -> DetectionRecords:
        """Merge shards; ``offsets[k]`` is added to the symbol indices of shard k."""
        parts = list(parts)
        idx = np.concatenate([p.symbol_index + off for p, off in zip(parts, offsets)])
        rec = cls(idx, np.concatenate([p.detector for p in parts]), np.concatenate([p.bin for p in parts]),
                  np.concatenate([p.is_dark for p in parts]))
        return rec.take(np.lexsort((rec.bin, rec.detector, rec.symbol_index)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["symbol_index", "detector", "bin", "is_dark"])
            for i in range(len(self)):
                w.writerow([int(self.symbol_index[i]), DETECTOR_NAMES[self.detector[i]],
                            BIN_NAMES[self.bin[i]], int(self.is_dark[i])])

    @classmethod
    def from_csv(cls, path) -> DetectionRecords:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([int(r["symbol_index"]) for r in rows], dtype=np.int64),
            np.array([DETECTOR_NAMES.index(r["detector"]) for r in rows], dtype=np.int8),
            np.array([BIN_NAMES.index(r["bin"]) for r in rows], dtype=np.int8),
            np.array([bool(int(r["is_dark"])) for r in rows]),
        )


@njit
def live_mask(gate_index, n_dead):
    """Non-paralysable dead time over sorted click gate indices.

    A click is kept when it comes more than ``n_dead`` gates after the last
    kept click.
    """
    keep = np.zeros(gate_index.shape[0], dtype=np.bool_)
    last = -(n_dead + 1)
    for i in range(gate_index.shape[0]):
        if gate_index[i] - last > n_dead:
            keep[i] = True
            last = gate_index[i]
    return keep


def _sample_gate(rng, mean, pd):
    """Clicks and dark flags for gates with Poisson mean ``mean``."""
    photon = rng.random(mean.size) < -np.expm1(-mean)
    dark = rng.random(mean.size) < pd
    click = photon | dark
    return click, dark & ~photon


def detect_monte_carlo(
    symbols: SymbolBatch,
    channel: ChannelParams,
    receiver: ReceiverParams,
    seed: int,
    link: LinkExtras | None = None,
    symbol_rate_ghz: float = 1.0,
) -> DetectionRecords:
    """Sample detector clicks for a symbol sequence.

    Gates are sampled independently, dead time is applied per detector in
    gate order, and only scored gates (D1 early/late, D2/D3 interference) are
    returned, sorted by symbol index.
    """
    link = link or LinkExtras()
    rng = np.random.Generator(np.random.Philox(seed))
    eta = path_transmittance(channel, receiver)
    pd = receiver.dark_probability
    n = len(symbols)
    pe = np.abs(symbols.early) ** 2
    pl = np.abs(symbols.late) ** 2
    leak = link.leakage

    # D1: gate 2k early, 2k+1 late
    d1_mean = np.empty(2 * n)
    d1_mean[0::2] = eta.z * ((1.0 - leak) * pe + leak * pl)
    d1_mean[1::2] = eta.z * ((1.0 - leak) * pl + leak * pe)

    # D2/D3: gate 2k boundary, 2k+1 interference
    total = pe + pl
    with np.errstate(invalid="ignore", divide="ignore"):
        coherence = np.where(total > 0, 2.0 * np.sqrt(pe * pl) / total, 0.0)
    rel = np.angle(symbols.late * np.conj(symbols.early))
    p2, p3 = amzi_output_probs(rel, link.visibility * receiver.amzi_visibility * coherence)
    prev_late = np.concatenate(([0.0], pl[:-1]))
    boundary = 0.25 * eta.x_arm * (prev_late + pe)
    x_mean = []
    for p_port in (p2, p3):
        m = np.empty(2 * n)
        m[0::2] = boundary
        m[1::2] = 0.5 * eta.x_arm * total * p_port
        x_mean.append(m)

    n_dead = dead_gates(receiver, symbol_rate_ghz)
    idx, det, bins, dark = [], [], [], []
    for d, mean in enumerate((d1_mean, *x_mean)):
        click, is_dark = _sample_gate(rng, mean, pd)
        gates = np.flatnonzero(click)
        if n_dead > 0 and gates.size:
            gates = gates[live_mask(gates, n_dead)]
        if d > 0:
            gates = gates[gates % 2 == 1]
            b = np.full(gates.size, 2, dtype=np.int8)
        else:
            b = (gates % 2).astype(np.int8)
        idx.append(gates // 2)
        det.append(np.full(gates.size, d, dtype=np.int8))
        bins.append(b)
        dark.append(is_dark[gates])
    rec = DetectionRecords(np.concatenate(idx).astype(np.int64), np.concatenate(det),
                           np.concatenate(bins), np.concatenate(dark))
    return rec.take(np.lexsort((rec.bin, rec.detector, rec.symbol_index)))


def wavelength_adjusted_receiver(receiver: ReceiverParams, wavelength_nm: float) -> ReceiverParams:
    """Scale detector efficiency by a Gaussian roll-off centred on 1550 nm."""
    if not 1500.0 <= wavelength_nm <= 1600.0:
        raise ValueError("wavelength must lie in [1500, 1600] nm")
    w = receiver.efficiency_envelope_width_nm
    factor = math.exp(-((wavelength_nm - 1550.0) ** 2) / (2.0 * w * w))
    return replace(receiver, detector_efficiency=receiver.detector_efficiency * factor)
