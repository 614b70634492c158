"""Agent types, populations and the plant model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

_SYM_TOL = 1e-10


def as_matrix(value, name: str) -> np.ndarray:
    """Coerce a scalar, vector or row-list into a 2-D float array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{name}: expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: non-finite entries")
    return arr


def as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: non-finite entries")
    return arr


def _check_symmetric(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise ConfigError(f"{name}: not square, shape {m.shape}")
    if not np.allclose(m, m.T, atol=_SYM_TOL, rtol=0):
        raise ConfigError(f"{name}: not symmetric")


def _check_definite(m: np.ndarray, name: str, strict: bool) -> None:
    _check_symmetric(m, name)
    low = np.linalg.eigvalsh(m).min()
    if strict and low <= 0:
        raise ConfigError(f"{name}: not positive definite (min eigenvalue {low:.3g})")
    if not strict and low < -_SYM_TOL:
        raise ConfigError(f"{name}: not positive semidefinite (min eigenvalue {low:.3g})")


@dataclass(frozen=True, eq=False)
class AgentType:
    """Dynamics and cost data shared by all agents of one type.

    Scalars are accepted for every matrix and promoted to 1x1 arrays.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    K_W: np.ndarray
    nu0: np.ndarray
    Sigma_x: np.ndarray
    id: str = "0"

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = np.asarray(self.B, dtype=float)
        # a flat vector is read as a single input column
        B = as_matrix(B.reshape(-1, 1) if B.ndim == 1 else B, "B")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        for name in ("Q", "R", "K_W", "Sigma_x"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        object.__setattr__(self, "nu0", as_vector(self.nu0, "nu0"))
        self._validate()

    def _validate(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ConfigError(f"A: not square, shape {self.A.shape}")
        if self.B.shape[0] != n:
            raise ConfigError(f"B: expected {n} rows, got shape {self.B.shape}")
        m = self.B.shape[1]
        for name, shape in (("Q", (n, n)), ("R", (m, m)), ("K_W", (n, n)), ("Sigma_x", (n, n))):
            got = getattr(self, name).shape
            if got != shape:
                raise ConfigError(f"{name}: expected shape {shape}, got {got}")
        if self.nu0.shape != (n,):
            raise ConfigError(f"nu0: expected length {n}, got {self.nu0.shape[0]}")
        _check_definite(self.Q, "Q", strict=False)
        _check_definite(self.R, "R", strict=True)
        _check_definite(self.K_W, "K_W", strict=True)
        _check_definite(self.Sigma_x, "Sigma_x", strict=True)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def is_scalar(self) -> bool:
        return self.n == 1 and self.m == 1

    def with_(self, **changes) -> "AgentType":
        return replace(self, **changes)


def scalar_type(A: float, K_W: float, B: float = 1.0, Q: float = 1.0, R: float = 1.0,
                nu0: float = 0.0, Sigma_x: float = 1.0, id: str = "0") -> AgentType:
    """Shorthand for a one-dimensional agent type."""
    return AgentType(A=A, B=B, Q=Q, R=R, K_W=K_W, nu0=[nu0], Sigma_x=Sigma_x, id=id)


@dataclass(frozen=True)
class PopulationSpec:
    types: tuple
    weights: tuple
    N: int


@dataclass(frozen=True, eq=False)
class Population:
    types: tuple
    weights: np.ndarray
    N: int
    assignment: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=len(self.types))

    @property
    def empirical_weights(self) -> np.ndarray:
        return self.counts / self.N

    @property
    def n(self) -> int:
        return self.types[0].n

    @property
    def m(self) -> int:
        return self.types[0].m

    def agent_type(self, i: int) -> AgentType:
        return self.types[self.assignment[i]]


def quota_counts(weights, N: int) -> np.ndarray:
    """Largest-remainder apportionment of N agents to the given weights."""
    w = np.asarray(weights, dtype=float)
    raw = w * N
    counts = np.floor(raw).astype(int)
    short = N - counts.sum()
    # stable sort keeps lower indices first among equal remainders
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def build_population(spec: PopulationSpec) -> Population:
    """Deterministically assign ``spec.N`` agents to types by weight quota."""
    if spec.N < 1:
        raise ConfigError("population.N: must be at least 1")
    if len(spec.types) == 0:
        raise ConfigError("population.types: at least one type is required")
    if len(spec.weights) != len(spec.types):
        raise ConfigError("population.weights: length must match population.types")
    w = np.asarray(spec.weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ConfigError(f"population.weights: must be nonnegative and sum to 1 (sum={w.sum()!r})")
    n, m = spec.types[0].n, spec.types[0].m
    for t in spec.types:
        if (t.n, t.m) != (n, m):
            raise ConfigError(f"population.types: type {t.id} has (n, m)=({t.n}, {t.m}), expected ({n}, {m})")
    counts = quota_counts(w, spec.N)
    assignment = np.repeat(np.arange(len(spec.types)), counts)
    return Population(types=tuple(spec.types), weights=w, N=int(spec.N), assignment=assignment)


def uniform_population(types, agents_per_type: int = 1) -> Population:
    """Equal-weight population with the same number of agents per type."""
    k = len(types)
    return build_population(PopulationSpec(types=tuple(types), weights=tuple([1.0 / k] * k),
                                           N=k * agents_per_type))


@dataclass
class AgentRuntimeState:
    x: np.ndarray
    z: np.ndarray
    delta: int = 0
    u_prev: np.ndarray = field(default=None)

    @property
    def error(self) -> np.ndarray:
        return self.x - self.z


def step_plant(state: AgentRuntimeState, agent_type: AgentType, u, w) -> AgentRuntimeState:
    """Advance the plant one step: x' = A x + B u + w."""
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if u.shape != (agent_type.m,) or w.shape != (agent_type.n,) or state.x.shape != (agent_type.n,):
        raise ValueError("step_plant: dimension mismatch")
    x = agent_type.A @ state.x + agent_type.B @ u + w
    return replace(state, x=x)


def noise_factor(agent_type: AgentType) -> np.ndarray:
    return np.linalg.cholesky(agent_type.K_W)


def sample_noise(agent_type: AgentType, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` Gaussian process-noise vectors with covariance K_W."""
    z = rng.standard_normal((size, agent_type.n))
    return z @ noise_factor(agent_type).T
