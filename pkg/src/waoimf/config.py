"""YAML run configuration: parsing, defaults, validation and round trip."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import AgentType, Population, PopulationSpec, build_population
from .errors import ConfigError
from .threshold import DISCOUNTS
from .waoi import DELTA_MAX


@dataclass
class SchedulerConfig:
    Rd: int | None = None
    eps: float = 1e-6
    calibrate_p: bool = False


@dataclass
class SolverConfig:
    delta_max: int = DELTA_MAX
    discounts: list = field(default_factory=lambda: list(DISCOUNTS))
    tol: float = 1e-9


@dataclass
class SimulationConfig:
    T: int = 1000
    burn_in: float = 0.1
    replications: int = 1
    policy: str = "hard"


@dataclass
class MeanFieldConfig:
    tol: float = 1e-12
    horizon: int = 200
    max_iter: int = 20000


@dataclass
class RunConfig:
    seed: int
    N: int
    types: list
    weights: list
    scheduler: SchedulerConfig
    solver: SolverConfig
    simulation: SimulationConfig
    meanfield: MeanFieldConfig

    def population(self) -> Population:
        return build_population(PopulationSpec(types=tuple(self.types), weights=tuple(self.weights), N=self.N))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "population": {
                "N": self.N,
                "weights": [float(w) for w in self.weights],
                "types": [_type_to_dict(t) for t in self.types],
            },
            "scheduler": asdict(self.scheduler),
            "solver": asdict(self.solver),
            "simulation": asdict(self.simulation),
            "meanfield": asdict(self.meanfield),
        }


def _type_to_dict(t: AgentType) -> dict:
    return {
        "id": t.id,
        "A": t.A.tolist(),
        "B": t.B.tolist(),
        "Q": t.Q.tolist(),
        "R": t.R.tolist(),
        "K_W": t.K_W.tolist(),
        "nu0": t.nu0.tolist(),
        "Sigma_x": t.Sigma_x.tolist(),
    }


_TYPE_KEYS = {"id", "A", "B", "Q", "R", "K_W", "nu0", "Sigma_x"}
_SECTIONS = {
    "scheduler": SchedulerConfig,
    "solver": SolverConfig,
    "simulation": SimulationConfig,
    "meanfield": MeanFieldConfig,
}


def _number(value, key):
    # YAML 1.1 reads "1e-6" as a string, so numeric strings are accepted
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got a boolean")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _integer(value, key):
    num = _number(value, key)
    if num != int(num):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return int(num)


def _matrix(value, key):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: malformed matrix {value!r}") from None
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{key}: expected a list of rows, got shape {arr.shape}")
    return arr


def _check_keys(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _parse_type(data, idx) -> AgentType:
    where = f"population.types[{idx}]"
    _check_keys(data, _TYPE_KEYS, where)
    for req in ("A", "K_W"):
        if req not in data:
            raise ConfigError(f"{where}.{req}: required key missing")
    A = _matrix(data["A"], f"{where}.A")
    n = A.shape[0]
    B = _matrix(data["B"], f"{where}.B") if "B" in data else np.eye(n)
    m = B.shape[1]
    mats = {
        "Q": _matrix(data["Q"], f"{where}.Q") if "Q" in data else np.eye(n),
        "R": _matrix(data["R"], f"{where}.R") if "R" in data else np.eye(m),
        "K_W": _matrix(data["K_W"], f"{where}.K_W"),
        "Sigma_x": _matrix(data["Sigma_x"], f"{where}.Sigma_x") if "Sigma_x" in data else np.eye(n),
    }
    nu0 = np.zeros(n)
    if "nu0" in data:
        try:
            nu0 = np.array(data["nu0"], dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.nu0: malformed vector") from None
    try:
        return AgentType(A=A, B=B, nu0=nu0, id=str(data.get("id", idx)), **mats)
    except ConfigError as exc:
        raise ConfigError(f"{where}.{exc}") from None


def _parse_section(name, data):
    cls = _SECTIONS[name]
    base = cls()
    if data is None:
        return base
    _check_keys(data, asdict(base), name)
    out = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        default = getattr(base, key)
        if key == "Rd":
            out[key] = None if value is None else _integer(value, path)
        elif key == "policy":
            if value not in ("relaxed", "hard"):
                raise ConfigError(f"{path}: expected 'relaxed' or 'hard', got {value!r}")
            out[key] = value
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected true or false, got {value!r}")
            out[key] = value
        elif isinstance(default, int):
            out[key] = _integer(value, path)
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list")
            out[key] = [_number(v, f"{path}[{j}]") for j, v in enumerate(value)]
        else:
            out[key] = _number(value, path)
    return cls(**{**asdict(base), **out})


def parse_config(data) -> RunConfig:
    """Validate a plain mapping and fill in defaults."""
    if data is None:
        data = {}
    _check_keys(data, {"seed", "population", *_SECTIONS}, "config")
    if "population" not in data:
        raise ConfigError("population: required section missing")
    pop = data["population"]
    _check_keys(pop, {"N", "types", "weights"}, "population")
    if "N" not in pop:
        raise ConfigError("population.N: required key missing")
    if not pop.get("types"):
        raise ConfigError("population.types: at least one type is required")
    if not isinstance(pop["types"], list):
        raise ConfigError("population.types: expected a list")
    types = [_parse_type(t, j) for j, t in enumerate(pop["types"])]
    k = len(types)
    if "weights" in pop:
        if not isinstance(pop["weights"], list) or len(pop["weights"]) != k:
            raise ConfigError(f"population.weights: expected a list of {k} numbers")
        weights = [_number(w, f"population.weights[{j}]") for j, w in enumerate(pop["weights"])]
    else:
        weights = [1.0 / k] * k
    sections = {name: _parse_section(name, data.get(name)) for name in _SECTIONS}
    cfg = RunConfig(seed=_integer(data.get("seed", 0), "seed"), N=_integer(pop["N"], "population.N"),
                    types=types, weights=weights, **sections)
    cfg.population()
    rd = cfg.scheduler.Rd
    if rd is not None and rd < 1:
        raise ConfigError("scheduler.Rd: must be at least 1")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from None
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
