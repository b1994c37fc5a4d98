"""Efficient-BB84 time-bin/phase symbols with decoy intensities.

Each symbol occupies two time bins (early, late).  Z symbols put all their
light in one bin; X symbols split it evenly with a relative phase of 0 or pi
on the late bin.  A global phase from a discrete grid of
``phase_randomization_levels`` values rotates the whole pulse pair.

Symbols are generated in bulk as a :class:`SymbolBatch` (one array per field);
:class:`Symbol` is the single-symbol view used by the scalar API.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

CLASS_NAMES = ("signal", "decoy", "vacuum")
BASIS_NAMES = ("Z", "X")


class Basis(enum.IntEnum):
    Z = 0
    X = 1


class IntensityClass(enum.IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


@dataclass(frozen=True)
class ProtocolConfig:
    """Transmitter-side protocol settings.

    ``intensity_per`` selects whether the class intensities are mean photon
    numbers per symbol (pulse pair, the default) or per optical pulse, in
    which case X symbols carry twice the class intensity.
    """

    symbol_rate_ghz: float = 1.0
    z_basis_probability: float = 0.9375
    signal_intensity: float = 0.4
    decoy_intensity: float = 0.1
    vacuum_intensity: float = 0.0
    intensity_probabilities: tuple = (0.75, 0.125, 0.125)
    phase_randomization_levels: int = 10
    intensity_per: str = "symbol"

    def __post_init__(self):
        object.__setattr__(self, "intensity_probabilities", tuple(float(p) for p in self.intensity_probabilities))
        if not self.symbol_rate_ghz > 0:
            raise ConfigError("protocol.symbol_rate_ghz", "must be > 0")
        if not 0.0 < self.z_basis_probability < 1.0:
            raise ConfigError("protocol.z_basis_probability", "must lie in (0, 1)")
        if not 0.0 < self.decoy_intensity < self.signal_intensity:
            raise ConfigError("protocol.decoy_intensity", "need 0 < decoy_intensity < signal_intensity")
        if not 0.0 <= self.vacuum_intensity < self.decoy_intensity:
            raise ConfigError("protocol.vacuum_intensity", "need 0 <= vacuum_intensity < decoy_intensity")
        probs = self.intensity_probabilities
        if len(probs) != 3 or any(not 0.0 < p < 1.0 for p in probs):
            raise ConfigError("protocol.intensity_probabilities", "need three values in (0, 1)")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError("protocol.intensity_probabilities", "must sum to 1")
        if int(self.phase_randomization_levels) != self.phase_randomization_levels or self.phase_randomization_levels < 2:
            raise ConfigError("protocol.phase_randomization_levels", "must be an integer >= 2")
        if self.intensity_per not in ("symbol", "pulse"):
            raise ConfigError("protocol.intensity_per", "must be 'symbol' or 'pulse'")

    @property
    def intensities(self) -> np.ndarray:
        return np.array([self.signal_intensity, self.decoy_intensity, self.vacuum_intensity])

    def symbol_intensities(self, basis: Basis | int) -> np.ndarray:
        """Mean photon number per symbol for each class in ``basis``."""
        scale = 2.0 if (self.intensity_per == "pulse" and Basis(basis) is Basis.X) else 1.0
        return scale * self.intensities

    @property
    def basis_probabilities(self) -> np.ndarray:
        return np.array([self.z_basis_probability, 1.0 - self.z_basis_probability])


@dataclass(frozen=True)
class Symbol:
    basis: Basis
    bit: int
    intensity_class: IntensityClass
    global_phase_index: int
    bin_amplitudes: tuple  # (early, late) complex amplitudes

    @property
    def relative_phase(self) -> float:
        """Encoded late-minus-early phase: 0 or pi for X symbols."""
        return math.pi * self.bit if self.basis is Basis.X else 0.0


@dataclass(frozen=True, eq=False)
class SymbolBatch:
    basis: np.ndarray
    bit: np.ndarray
    intensity_class: np.ndarray
    phase_index: np.ndarray
    early: np.ndarray
    late: np.ndarray
    levels: int

    def __len__(self) -> int:
        return self.basis.size

    def __getitem__(self, i: int) -> Symbol:
        return Symbol(
            Basis(int(self.basis[i])), int(self.bit[i]), IntensityClass(int(self.intensity_class[i])),
            int(self.phase_index[i]), (complex(self.early[i]), complex(self.late[i])),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "basis", "bit", "class", "phase_index"])
            for i in range(len(self)):
                w.writerow([i, BASIS_NAMES[self.basis[i]], int(self.bit[i]),
                            CLASS_NAMES[self.intensity_class[i]], int(self.phase_index[i])])

    @classmethod
    def from_csv(cls, path, config: ProtocolConfig) -> SymbolBatch:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        basis = np.array([BASIS_NAMES.index(r["basis"]) for r in rows], dtype=np.int8)
        bit = np.array([int(r["bit"]) for r in rows], dtype=np.int8)
        klass = np.array([CLASS_NAMES.index(r["class"]) for r in rows], dtype=np.int8)
        phase = np.array([int(r["phase_index"]) for r in rows], dtype=np.int16)
        return build_batch(config, basis, bit, klass, phase)


def pair_amplitudes(config: ProtocolConfig, basis, bit, intensity_class, phase_index):
    """Early/late coherent amplitudes for arrays of symbol choices."""
    basis = np.asarray(basis)
    bit = np.asarray(bit)
    mean = np.where(basis == Basis.X, config.symbol_intensities(Basis.X)[intensity_class],
                    config.symbol_intensities(Basis.Z)[intensity_class])
    theta = np.exp(2j * np.pi * np.asarray(phase_index) / config.phase_randomization_levels)
    full = np.sqrt(mean) * theta
    half = np.sqrt(0.5 * mean) * theta
    is_x = basis == Basis.X
    early = np.where(is_x, half, np.where(bit == 0, full, 0.0))
    late = np.where(is_x, half * np.where(bit == 1, -1.0, 1.0), np.where(bit == 1, full, 0.0))
    return early.astype(complex), late.astype(complex)


def build_batch(config: ProtocolConfig, basis, bit, intensity_class, phase_index) -> SymbolBatch:
    early, late = pair_amplitudes(config, basis, bit, intensity_class, phase_index)
    return SymbolBatch(
        np.asarray(basis, dtype=np.int8), np.asarray(bit, dtype=np.int8),
        np.asarray(intensity_class, dtype=np.int8), np.asarray(phase_index, dtype=np.int16),
        early, late, int(config.phase_randomization_levels),
    )


def sample_symbols(rng: np.random.Generator, config: ProtocolConfig, n: int) -> SymbolBatch:
    """Draw ``n`` independent symbols."""
    basis = (rng.random(n) >= config.z_basis_probability).astype(np.int8)
    bit = rng.integers(0, 2, n, dtype=np.int8)
    klass = rng.choice(3, size=n, p=config.intensity_probabilities).astype(np.int8)
    phase = rng.integers(0, config.phase_randomization_levels, n, dtype=np.int16)
    return build_batch(config, basis, bit, klass, phase)


def sample_symbol(rng: np.random.Generator, config: ProtocolConfig) -> Symbol:
    return sample_symbols(rng, config, 1)[0]


def symbol_streams(seed: int, n_streams: int) -> list[np.random.Generator]:
    """Independent generators for sharding symbol generation.

    Stream ``k`` depends only on ``(seed, k)``, so shards can be produced in
    any order or in parallel and concatenated by shard index.
    """
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n_streams)]


def ideal_pulse_pair(symbol: Symbol) -> tuple[complex, complex]:
    return symbol.bin_amplitudes


@dataclass(frozen=True, eq=False)
class ModulatorWaveforms:
    """Per-bin drive at twice the symbol rate: pulse on/off and phase (rad)."""

    gain_switch_pattern: np.ndarray
    phase_pattern: np.ndarray
    bin_rate_ghz: float


def symbols_to_waveforms(symbols, levels: int = 10, symbol_rate_ghz: float = 1.0) -> ModulatorWaveforms:
    """Gain-switch and phase-modulator patterns for a symbol sequence.

    The global phase goes on the first pulse of every pair and the late bin
    carries the global phase plus the X-basis relative phase.  ``levels`` is
    the size of the phase grid; a :class:`SymbolBatch` supplies its own.
    """
    if isinstance(symbols, Symbol):
        symbols = [symbols]
    if isinstance(symbols, SymbolBatch):
        basis, bit, phase, levels = symbols.basis, symbols.bit, symbols.phase_index, symbols.levels
        vacuum = symbols.intensity_class == IntensityClass.VACUUM
    else:
        symbols = list(symbols)
        if not symbols:
            raise ValueError("need at least one symbol")
        basis = np.array([s.basis for s in symbols])
        bit = np.array([s.bit for s in symbols])
        phase = np.array([s.global_phase_index for s in symbols])
        vacuum = np.array([s.intensity_class is IntensityClass.VACUUM for s in symbols])
    if len(basis) == 0:
        raise ValueError("need at least one symbol")
    is_x = np.asarray(basis) == Basis.X
    bit = np.asarray(bit)
    on_early = (is_x | (bit == 0)) & ~vacuum
    on_late = (is_x | (bit == 1)) & ~vacuum
    theta = 2.0 * np.pi * np.asarray(phase) / levels
    rel = np.where(is_x, np.pi * bit, 0.0)
    pattern = np.empty(2 * len(basis), dtype=bool)
    pattern[0::2] = on_early
    pattern[1::2] = on_late
    phases = np.empty(2 * len(basis))
    phases[0::2] = np.mod(theta, 2.0 * np.pi)
    phases[1::2] = np.mod(theta + rel, 2.0 * np.pi)
    return ModulatorWaveforms(pattern, phases, 2.0 * symbol_rate_ghz)

