"""Experiment configuration: schema, validation and TOML loading.

A config file is TOML.  Every table is optional; missing keys take the
shipped defaults (the calibrated laser preset plus the values below).

Top-level keys::

    seed = 1                      # base seed for every stochastic step
    fidelity = "analytic"         # or "monte_carlo" (alias "mc")
    monte_carlo_symbols = 1000000
    calibration_pulses = 128      # pulses per bridged laser simulation

    [grids]
    injection_uw = [...]          # sorted, non-empty
    attenuation_db = [...]
    wavelength_nm = [...]

    [sweep]
    wavelength_attenuation_db = 26.5
    operating_attenuation_db = 26.5   # link used when scoring injection powers
    optimize_metric = "qber"          # "qber", "sifted_qber" or "skr"
    lock_smsr_db = 20.0               # minimum SMSR for a point to count as locked

    [link]                        # transmitter figures for the attenuation sweep
    er_db = ...
    visibility = ...

    [keyrate]
    ec_efficiency = 1.16
    sift_factor = ...             # optional; default z_basis_probability^2

plus ``[laser]``, ``[injection]``, ``[drive]``, ``[protocol]`` and
``[receiver]`` tables whose keys mirror the fields of the corresponding
parameter classes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

from ..channel import LinkExtras, ReceiverParams
from ..errors import ConfigError
from ..laser.params import InjectionParams, LaserParams, OperatingPoint, load_preset
from ..protocol import ProtocolConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FIDELITIES = ("analytic", "monte_carlo")
METRICS = ("qber", "sifted_qber", "skr")
ITU_ANCHOR_THZ = 193.1
ITU_SPACING_THZ = 0.05
C_NM_THZ = 299792.458


def itu_channel_nm(wavelength_nm: float, spacing_thz: float = ITU_SPACING_THZ) -> float:
    """Nearest DWDM grid channel, rounded to 0.01 nm."""
    f = C_NM_THZ / wavelength_nm
    k = round((f - ITU_ANCHOR_THZ) / spacing_thz)
    return round(C_NM_THZ / (ITU_ANCHOR_THZ + k * spacing_thz), 2)


DEFAULT_WAVELENGTHS = tuple(itu_channel_nm(w) for w in range(1515, 1591, 5))


@dataclass(frozen=True)
class ExperimentConfig:
    laser: LaserParams = field(default_factory=LaserParams)
    injection: InjectionParams = field(default_factory=InjectionParams)
    drive: OperatingPoint = field(default_factory=OperatingPoint)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    receiver: ReceiverParams = field(default_factory=ReceiverParams)
    link: LinkExtras = field(default_factory=LinkExtras)
    injection_grid_uw: tuple = (0.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0)
    attenuation_grid_db: tuple = tuple(float(x) for x in range(0, 67, 3))
    wavelength_grid_nm: tuple = DEFAULT_WAVELENGTHS
    wavelength_attenuation_db: float = 26.5
    operating_attenuation_db: float = 26.5
    optimize_metric: str = "qber"
    lock_smsr_db: float = 20.0
    ec_efficiency: float = 1.16
    sift_factor: float | None = None
    seed: int = 1
    fidelity: str = "analytic"
    monte_carlo_symbols: int = 1_000_000
    calibration_pulses: int = 128

    def __post_init__(self):
        for name in ("injection_grid_uw", "attenuation_grid_db", "wavelength_grid_nm"):
            grid = tuple(float(x) for x in getattr(self, name))
            key = f"grids.{_grid_key(name)}"
            if not grid:
                raise ConfigError(key, "grid must be non-empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(key, "grid must be sorted ascending without duplicates")
            if not all(math.isfinite(x) for x in grid):
                raise ConfigError(key, "grid values must be finite")
            object.__setattr__(self, name, grid)
        if self.injection_grid_uw[0] < 0:
            raise ConfigError("grids.injection_uw", "powers must be >= 0")
        if self.attenuation_grid_db[0] < 0:
            raise ConfigError("grids.attenuation_db", "attenuations must be >= 0")
        if self.wavelength_grid_nm[0] < 1500 or self.wavelength_grid_nm[-1] > 1600:
            raise ConfigError("grids.wavelength_nm", "wavelengths must lie in [1500, 1600] nm")
        fid = "monte_carlo" if self.fidelity == "mc" else self.fidelity
        if fid not in FIDELITIES:
            raise ConfigError("fidelity", "must be 'analytic' or 'monte_carlo'")
        object.__setattr__(self, "fidelity", fid)
        if int(self.monte_carlo_symbols) != self.monte_carlo_symbols or self.monte_carlo_symbols < 1:
            raise ConfigError("monte_carlo_symbols", "must be a positive integer")
        if fid == "monte_carlo" and self.monte_carlo_symbols < 10_000:
            raise ConfigError("monte_carlo_symbols", "must be >= 10000 for monte_carlo fidelity")
        if self.optimize_metric not in METRICS:
            raise ConfigError("sweep.optimize_metric", f"must be one of {', '.join(METRICS)}")
        for name in ("wavelength_attenuation_db", "operating_attenuation_db"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"sweep.{name}", "must be >= 0")
        if not self.ec_efficiency >= 1.0:
            raise ConfigError("keyrate.ec_efficiency", "must be >= 1")
        if self.sift_factor is not None and not 0.0 < self.sift_factor <= 1.0:
            raise ConfigError("keyrate.sift_factor", "must lie in (0, 1]")
        if int(self.calibration_pulses) != self.calibration_pulses or self.calibration_pulses < 8:
            raise ConfigError("calibration_pulses", "must be an integer >= 8")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")

    @property
    def injection_span_decades(self) -> float:
        positive = [p for p in self.injection_grid_uw if p > 0]
        if len(positive) < 2:
            return 0.0
        return math.log10(positive[-1] / positive[0])


def _grid_key(name: str) -> str:
    return {"injection_grid_uw": "injection_uw", "attenuation_grid_db": "attenuation_db",
            "wavelength_grid_nm": "wavelength_nm"}[name]


_TOP_LEVEL = ("seed", "fidelity", "monte_carlo_symbols", "calibration_pulses")
_SWEEP = ("wavelength_attenuation_db", "operating_attenuation_db", "optimize_metric", "lock_smsr_db")
_KEYRATE = ("ec_efficiency", "sift_factor")
_TABLES = {
    "laser": LaserParams, "injection": InjectionParams, "drive": OperatingPoint,
    "protocol": ProtocolConfig, "receiver": ReceiverParams, "link": LinkExtras,
}


def _table(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(key, "must be a table")
    return value


def _merge(cls, base, table: dict, prefix: str):
    known = {f.name for f in fields(cls)}
    for k in table:
        if k not in known:
            raise ConfigError(f"{prefix}.{k}", "unknown key")
    values = asdict(base) if base is not None else {}
    values.update(table)
    if "intensity_probabilities" in values:
        values["intensity_probabilities"] = tuple(values["intensity_probabilities"])
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix, str(exc)) from None


def config_from_mapping(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay a parsed TOML mapping on ``base`` (the shipped defaults if None)."""
    base = base or default_config()
    allowed = set(_TOP_LEVEL) | set(_TABLES) | {"grids", "sweep", "keyrate"}
    for k in data:
        if k not in allowed:
            raise ConfigError(k, "unknown key")
    kwargs = {name: _merge(cls, getattr(base, name), _table(data, name), name) for name, cls in _TABLES.items()}
    grids = _table(data, "grids")
    for k in grids:
        if k not in ("injection_uw", "attenuation_db", "wavelength_nm"):
            raise ConfigError(f"grids.{k}", "unknown key")
    kwargs["injection_grid_uw"] = grids.get("injection_uw", base.injection_grid_uw)
    kwargs["attenuation_grid_db"] = grids.get("attenuation_db", base.attenuation_grid_db)
    kwargs["wavelength_grid_nm"] = grids.get("wavelength_nm", base.wavelength_grid_nm)
    for section, names in (("sweep", _SWEEP), ("keyrate", _KEYRATE)):
        table = _table(data, section)
        for k in table:
            if k not in names:
                raise ConfigError(f"{section}.{k}", "unknown key")
        for k in names:
            kwargs[k] = table.get(k, getattr(base, k))
    for k in _TOP_LEVEL:
        kwargs[k] = data.get(k, getattr(base, k))
    return ExperimentConfig(**kwargs)


def _preset_config() -> ExperimentConfig:
    preset = load_preset()
    return ExperimentConfig(laser=preset.laser, injection=preset.injection, drive=preset.drive)


def default_config() -> ExperimentConfig:
    """Calibrated laser preset overlaid with the shipped experiment defaults."""
    text = resources.files("wtqkd.data").joinpath("experiment_default.toml").read_text()
    return config_from_mapping(tomllib.loads(text), base=_preset_config())


def load_config(path=None) -> ExperimentConfig:
    """Load a TOML config; keys it omits keep their shipped defaults."""
    if path is None:
        return default_config()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return config_from_mapping(data)
