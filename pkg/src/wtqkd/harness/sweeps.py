"""Operating-point optimisation and the injection, attenuation and wavelength sweeps."""

from __future__ import annotations

import csv
import math
from contextlib import nullcontext
from dataclasses import astuple, dataclass, fields

import numpy as np

from ..channel import (
    ChannelParams, LinkExtras, detect_analytic, detect_monte_carlo, wavelength_adjusted_receiver,
)
from ..errors import ConfigError, NoLockError
from ..keyrate import SkrResult, key_rate_from_expected, key_rate_from_tally, sift
from ..protocol import Basis, IntensityClass, sample_symbols
from .bridge import LaserPoint, config_point
from .config import ExperimentConfig

VARIABLES = ("injection_uw", "attenuation_db", "wavelength_nm")
MC_SHARD = 250_000


@dataclass(frozen=True)
class SweepRow:
    """One plotted point.

    ``x`` is the independent variable of the sweep; ``injection_uw`` the
    injection power the row was evaluated at.  ``e_z``/``e_x`` and ``Q_mu``
    refer to signal-class symbols.  ``locked`` is False for wavelengths where
    no injection power locked the laser; such rows carry NaN figures and zero
    key rate.
    """

    x: float
    injection_uw: float
    er_db: float
    visibility: float
    e_z: float
    e_x: float
    Q_mu: float
    skr_bits_per_s: float
    locked: bool = True

    def __post_init__(self):
        for name in ("visibility", "e_z", "e_x", "Q_mu"):
            v = getattr(self, name)
            if not (math.isnan(v) or 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.skr_bits_per_s >= 0:
            raise ValueError("skr must be >= 0")


COLUMNS = tuple(f.name for f in fields(SweepRow))


@dataclass(frozen=True)
class SweepTable:
    variable: str
    rows: tuple

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r.x)))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return repr(float(v))


def emit_csv(table: SweepTable, path) -> None:
    """Write a sweep table.

    Columns: the sweep variable, then ``injection_power_uw, er_db,
    visibility, e_z, e_x, Q_mu, skr_bits_per_s, locked``.  Floats use the
    shortest decimal that round-trips exactly.  ``path`` may be an open text
    stream.
    """
    header = [table.variable, "injection_power_uw"] + list(COLUMNS[2:])
    sink = nullcontext(path) if hasattr(path, "write") else open(path, "w", newline="")
    with sink as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in table.rows:
            w.writerow([_fmt(v) for v in astuple(r)])


def load_csv(path) -> SweepTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for rec in reader:
            vals = [float(v) for v in rec[:-1]] + [rec[-1] == "1"]
            rows.append(SweepRow(*vals))
    return SweepTable(header[0], tuple(rows))


# link evaluation ---------------------------------------------------------


@dataclass(frozen=True)
class LinkResult:
    gain: np.ndarray  # [class, basis]
    qber: np.ndarray
    key: SkrResult


def _kr_kwargs(config: ExperimentConfig) -> dict:
    return {"ec_efficiency": config.ec_efficiency, "sift_factor": config.sift_factor}


def evaluate_link(
    config: ExperimentConfig,
    attenuation_db: float,
    link: LinkExtras,
    receiver=None,
    *,
    fidelity: str | None = None,
    seed: int | None = None,
) -> LinkResult:
    """Gains, QBERs and key rate of the protocol over one channel setting."""
    receiver = receiver or config.receiver
    fidelity = fidelity or config.fidelity
    channel = ChannelParams(attenuation_db)
    if fidelity == "analytic":
        exp = detect_analytic(config.protocol, channel, receiver, link)
        return LinkResult(exp.gain, exp.qber, key_rate_from_expected(exp, config.protocol, **_kr_kwargs(config)))
    ss = np.random.SeedSequence([config.seed if seed is None else seed, int(round(attenuation_db * 1000))])
    n = int(config.monte_carlo_symbols)
    tally = None
    for k, child in enumerate(ss.spawn(math.ceil(n / MC_SHARD))):
        size = min(MC_SHARD, n - k * MC_SHARD)
        sym_seed, det_seed = child.generate_state(2, dtype=np.uint64)
        symbols = sample_symbols(np.random.Generator(np.random.Philox(int(sym_seed))), config.protocol, size)
        records = detect_monte_carlo(symbols, channel, receiver, int(det_seed), link,
                                     config.protocol.symbol_rate_ghz)
        part = sift(symbols, records)
        tally = part if tally is None else tally + part
    key = key_rate_from_tally(tally, config.protocol, **_kr_kwargs(config))
    return LinkResult(tally.gains(), np.nan_to_num(tally.qbers(), nan=0.5), key)


def _row(x: float, power: float, point: LaserPoint | None, link: LinkExtras, res: LinkResult,
         locked: bool = True) -> SweepRow:
    s, z, xb = IntensityClass.SIGNAL, Basis.Z, Basis.X
    return SweepRow(
        x=float(x),
        injection_uw=float(power),
        er_db=link.er_db if point is None else point.er_db,
        visibility=link.visibility,
        e_z=float(res.qber[s, z]),
        e_x=float(res.qber[s, xb]),
        Q_mu=float(res.gain[s, z]),
        skr_bits_per_s=float(res.key.skr),
        locked=locked,
    )


# optimisation ------------------------------------------------------------


def injection_metric(config: ExperimentConfig, link: LinkExtras, receiver) -> float:
    """Score of one operating point; lower is better."""
    if config.optimize_metric == "skr":
        res = evaluate_link(config, config.wavelength_attenuation_db, link, receiver, fidelity="analytic")
        return -res.key.skr
    res = evaluate_link(config, config.operating_attenuation_db, link, receiver, fidelity="analytic")
    s = IntensityClass.SIGNAL
    e_z, e_x = res.qber[s, Basis.Z], res.qber[s, Basis.X]
    if config.optimize_metric == "qber":
        return float(0.5 * (e_z + e_x))
    # weight each basis by its sifted detections
    pz = config.protocol.z_basis_probability
    wz = pz * pz * res.gain[s, Basis.Z]
    wx = (1.0 - pz) ** 2 * res.gain[s, Basis.X]
    return float((wz * e_z + wx * e_x) / (wz + wx))


def optimize_injection(config: ExperimentConfig, wavelength_nm: float) -> float:
    """Injection power from the grid that minimises the configured metric.

    Points whose side-mode suppression falls below ``lock_smsr_db`` are
    treated as unlocked and skipped.  Ties go to the lower power.
    """
    grid = config.injection_grid_uw
    if len(grid) == 1:
        return grid[0]
    if config.injection_span_decades < 1.0:
        raise ConfigError("grids.injection_uw", "must span at least one decade of nonzero powers")
    receiver = wavelength_adjusted_receiver(config.receiver, wavelength_nm)
    best, best_score = None, math.inf
    for power in grid:
        point = config_point(config, power, wavelength_nm)
        if not point.locked(config.lock_smsr_db):
            continue
        score = injection_metric(config, point.link(), receiver)
        if score < best_score:
            best, best_score = power, score
    if best is None:
        raise NoLockError(f"no injection power locks the laser at {wavelength_nm} nm")
    return best


# sweeps ------------------------------------------------------------------


def run_injection_sweep(config: ExperimentConfig) -> SweepTable:
    """ER, visibility and QBERs against injection power at the configured wavelength."""
    wl = config.injection.wavelength_nm
    receiver = wavelength_adjusted_receiver(config.receiver, wl)
    rows = []
    for power in config.injection_grid_uw:
        point = config_point(config, power, wl)
        link = point.link()
        res = evaluate_link(config, config.operating_attenuation_db, link, receiver)
        rows.append(_row(power, power, point, link, res, point.locked(config.lock_smsr_db)))
    return SweepTable("injection_uw", tuple(rows))


def run_attenuation_sweep(config: ExperimentConfig) -> SweepTable:
    """Key rate against channel attenuation using the configured link figures."""
    rows = []
    for att in config.attenuation_grid_db:
        res = evaluate_link(config, att, config.link)
        rows.append(_row(att, config.injection.power_uw, None, config.link, res))
    return SweepTable("attenuation_db", tuple(rows))


def run_wavelength_sweep(config: ExperimentConfig) -> SweepTable:
    """Key rate against wavelength at ``wavelength_attenuation_db``.

    At each wavelength the injection power is re-optimised and the detector
    efficiency adjusted; wavelengths that never lock give a zero-rate row
    with ``locked`` False.
    """
    rows = []
    for wl in config.wavelength_grid_nm:
        receiver = wavelength_adjusted_receiver(config.receiver, wl)
        try:
            power = optimize_injection(config, wl)
        except NoLockError:
            nan = math.nan
            rows.append(SweepRow(wl, nan, nan, nan, nan, nan, nan, 0.0, False))
            continue
        point = config_point(config, power, wl)
        link = point.link()
        res = evaluate_link(config, config.wavelength_attenuation_db, link, receiver)
        rows.append(_row(wl, power, point, link, res))
    return SweepTable("wavelength_nm", tuple(rows))

