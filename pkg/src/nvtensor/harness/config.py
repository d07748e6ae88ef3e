"""Experiment configuration files.

Configs are YAML mappings with the sections ``model``, ``engine`` and
(optionally) ``qfi`` plus the top-level keys ``experiment``, ``output`` and
``seed``. Physical inputs use laboratory units: frequencies in MHz (not
angular), distances in nm and the time step in ns. Scan axes (``spacing_nm``,
``gamma``, ``chi_max``, ``rabi_mhz``) accept a scalar or a list. Example::

    experiment: bond-scan
    seed: 0
    output: out/bond-scan
    model:
      n: 4
      spacing_nm: 2.0
      gamma: [0.0]
    engine:
      engine: tdvp
      dt_ns: 1.0
      n_steps: 500
      chi_max: [2, 4, 8, 16, 32]
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..evolve.exact import MAX_ED_SITES
from ..model import InteractionForm, ModelSpec, mhz

MAX_SITES = 12
MAX_TIME_US = 10.0
ENGINES = ("tdvp", "wii", "ed")


class ConfigError(ValueError):
    """Invalid configuration or violated resource guard."""


def _tuple(value, kind):
    if isinstance(value, (list, tuple)):
        items = tuple(kind(v) for v in value)
    else:
        items = (kind(value),)
    if not items:
        raise ConfigError("scan lists must not be empty")
    return items


@dataclass(frozen=True)
class ModelBlock:
    n: int = 3
    spacing_nm: tuple = (2.0,)
    gamma: tuple = (0.0,)
    interaction_form: str = "effective"
    rabi_mhz: tuple = (2.0,)
    splitting_mhz: float = 407.0
    interactions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "spacing_nm", _tuple(self.spacing_nm, float))
        object.__setattr__(self, "gamma", _tuple(self.gamma, float))
        object.__setattr__(self, "rabi_mhz", _tuple(self.rabi_mhz, float))
        try:
            InteractionForm(self.interaction_form)
        except ValueError as exc:
            raise ConfigError(f"unknown interaction_form {self.interaction_form!r}") from exc
        if self.n < 1:
            raise ConfigError("model.n must be positive")
        if any(r <= 0 for r in self.spacing_nm):
            raise ConfigError("spacings must be positive")
        if any(g < 0 for g in self.gamma):
            raise ConfigError("dephasing rates must be non-negative")
        if any(o < 0 for o in self.rabi_mhz):
            raise ConfigError("Rabi frequencies must be non-negative")

    def build(self, spacing: float, gamma: float, rabi_mhz: float | None = None) -> ModelSpec:
        """ModelSpec in internal units for one grid point."""
        rabi = self.rabi_mhz[0] if rabi_mhz is None else rabi_mhz
        return ModelSpec.chain(
            self.n,
            spacing,
            gamma=gamma,
            rabi=mhz(rabi),
            splitting=mhz(self.splitting_mhz),
            interaction_form=self.interaction_form,
            interactions=self.interactions,
        )


@dataclass(frozen=True)
class EngineBlock:
    engine: str = "tdvp"
    dt_ns: float = 1.0
    n_steps: int = 500
    chi_max: tuple = (64,)
    tdvp_mode: str = "two-site"
    krylov_dim: int = 20
    krylov_tol: float = 1e-10
    trunc_floor: float = 1e-12
    complex_substeps: bool = True
    wii_dt_ns: float | None = None
    opee_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "chi_max", _tuple(self.chi_max, int))
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}, expected one of {ENGINES}")
        if self.dt_ns <= 0 or (self.wii_dt_ns is not None and self.wii_dt_ns <= 0):
            raise ConfigError("time steps must be positive")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be non-negative")
        if any(c < 1 for c in self.chi_max):
            raise ConfigError("chi_max must be at least 1")
        if self.tdvp_mode not in ("one-site", "two-site"):
            raise ConfigError(f"unknown tdvp_mode {self.tdvp_mode!r}")
        if self.krylov_dim < 2 or self.krylov_tol <= 0 or self.trunc_floor < 0:
            raise ConfigError("invalid Krylov or truncation parameters")
        if self.opee_every < 1:
            raise ConfigError("opee_every must be at least 1")

    @property
    def dt_us(self) -> float:
        return self.dt_ns * 1e-3

    @property
    def total_time_us(self) -> float:
        return self.dt_us * self.n_steps

    def engine_config(self, engine: str | None = None, chi_max: int | None = None, dt_us: float | None = None):
        from ..evolve.trajectory import engine_config

        engine = engine or self.engine
        return engine_config(
            engine,
            self.dt_us if dt_us is None else dt_us,
            chi_max=self.chi_max[0] if chi_max is None else chi_max,
            mode=self.tdvp_mode,
            krylov_dim=self.krylov_dim,
            krylov_tol=self.krylov_tol,
            trunc_floor=self.trunc_floor,
            complex_substeps=self.complex_substeps,
        )


@dataclass(frozen=True)
class QFIBlock:
    delta_mhz: float = 1e-3
    restarts: int = 10
    chi_l: int | None = None
    every: int = 10
    normalization: str = "sql"
    window: int = 10
    max_sweeps: int = 200
    tol: float = 1e-8

    def __post_init__(self):
        if self.delta_mhz <= 0:
            raise ConfigError("qfi.delta_mhz must be positive")
        if self.restarts < 1 or self.every < 1 or self.window < 1 or self.max_sweeps < 1:
            raise ConfigError("qfi counts must be positive")
        if self.chi_l is not None and self.chi_l < 1:
            raise ConfigError("qfi.chi_l must be positive")
        if self.normalization not in ("sql", "raw"):
            raise ConfigError("qfi.normalization must be 'sql' or 'raw'")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelBlock = field(default_factory=ModelBlock)
    engine: EngineBlock = field(default_factory=EngineBlock)
    qfi: QFIBlock | None = None
    output: str = "out"
    seed: int = 0

    # --- (de)serialization

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' key")
        try:
            return cls(
                experiment=str(data["experiment"]),
                model=_block(ModelBlock, data.get("model")),
                engine=_block(EngineBlock, data.get("engine")),
                qfi=None if data.get("qfi") is None else _block(QFIBlock, data["qfi"]),
                output=str(data.get("output", "out")),
                seed=int(data.get("seed", 0)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for block in ("model", "engine"):
            out[block] = {k: list(v) if isinstance(v, tuple) else v for k, v in out[block].items()}
        return out

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls.from_dict(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

    def config_hash(self) -> str:
        """Stable hash of everything except the output location."""
        payload = self.to_dict()
        payload.pop("output")
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _block(kind, data):
    if data is None:
        return kind()
    if not isinstance(data, dict):
        raise ConfigError(f"{kind.__name__} section must be a mapping")
    known = {f.name for f in dataclasses.fields(kind)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {kind.__name__}: {sorted(unknown)}")
    return kind(**{k: _coerce(kind.__dataclass_fields__[k].type, k, v) for k, v in data.items()})


_SCALARS = {"float": float, "int": int, "str": str}


def _coerce(annotation: str, key: str, value):
    """Convert scalar YAML values to the annotated type (YAML reads '1e-3' as a string)."""
    base = annotation.replace(" | None", "")
    if value is None and annotation.endswith("| None"):
        return None
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if base in _SCALARS:
        if isinstance(value, bool) or isinstance(value, (list, dict)):
            raise ConfigError(f"{key} must be a scalar {base}")
        try:
            out = _SCALARS[base](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot read {value!r} as {base}") from exc
        if base == "int" and isinstance(value, float) and value != out:
            raise ConfigError(f"{key} must be an integer")
        return out
    if base == "tuple":
        items = value if isinstance(value, (list, tuple)) else [value]
        try:
            return [float(v) if isinstance(v, str) else v for v in items]
        except ValueError as exc:
            raise ConfigError(f"{key}: non-numeric entry") from exc
    return value


def validate(config: ExperimentConfig, registry=None) -> None:
    """Check the experiment name and resource guards; raises ConfigError."""
    from .experiments import EXPERIMENTS, NEEDS_ED

    registry = EXPERIMENTS if registry is None else registry
    if config.experiment not in registry:
        raise ConfigError(f"unknown experiment {config.experiment!r}; known: {sorted(registry)}")
    if config.model.n > MAX_SITES:
        raise ConfigError(f"N={config.model.n} exceeds the limit of {MAX_SITES} sites")
    if config.engine.total_time_us > MAX_TIME_US + 1e-12:
        raise ConfigError(
            f"dt*n_steps = {config.engine.total_time_us:g} us exceeds the limit of {MAX_TIME_US:g} us"
        )
    uses_ed = config.experiment in NEEDS_ED or config.engine.engine == "ed"
    if uses_ed and config.model.n > MAX_ED_SITES:
        raise ConfigError(f"exact reference limited to N <= {MAX_ED_SITES}")
    if config.experiment == "qfi-dynamics" and config.qfi is None:
        raise ConfigError("qfi-dynamics needs a 'qfi' section")
