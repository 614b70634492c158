"""Estimation error covariance, the WAoI stage cost and the decoder."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .core import AgentRuntimeState, AgentType

DELTA_MAX = 512


def h_table(agent_type: AgentType, delta_max: int) -> np.ndarray:
    """h(0..delta_max) by the recurrence M_{l+1} = A M_l, M_1 = K_W^{1/2}."""
    if delta_max < 0:
        raise ValueError("delta_max must be nonnegative")
    out = np.zeros(delta_max + 1)
    M = np.linalg.cholesky(agent_type.K_W)
    acc = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for d in range(1, delta_max + 1):
            acc += float(np.sum(M * M))
            out[d] = acc
            M = agent_type.A @ M
    return out


def error_covariance_h(delta: int, agent_type: AgentType) -> float:
    """Trace of the open-loop estimation error covariance after ``delta`` steps."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return float(h_table(agent_type, int(delta))[-1])


def waoi_cost_g(delta: int, agent_type: AgentType) -> float:
    """WAoI stage cost g = h * delta."""
    return error_covariance_h(delta, agent_type) * delta


@dataclass(frozen=True, eq=False)
class WaoiTable:
    agent_type: AgentType
    h_values: np.ndarray
    g_values: np.ndarray
    delta_max: int

    @classmethod
    def build(cls, agent_type: AgentType, delta_max: int = DELTA_MAX) -> "WaoiTable":
        h = h_table(agent_type, delta_max)
        g = h * np.arange(delta_max + 1)
        h.setflags(write=False)
        g.setflags(write=False)
        return cls(agent_type, h, g, delta_max)

    def g(self, delta):
        return self.g_values[delta]

    def h(self, delta):
        return self.h_values[delta]


@lru_cache(maxsize=256)
def waoi_table(agent_type: AgentType, delta_max: int = DELTA_MAX) -> WaoiTable:
    """Memoized :meth:`WaoiTable.build`; types hash by identity."""
    return WaoiTable.build(agent_type, delta_max)


def scalar_g_continuous(x, a: float, k_w: float):
    """Real-argument extension of g for scalar agents.

    Uses g(x) = K_W x (a^{2x} - 1)/(a^2 - 1), written with expm1 so that it
    stays accurate as a^2 approaches 1 (where it tends to K_W x^2).
    """
    x = np.asarray(x, dtype=float)
    log_a2 = 2.0 * np.log(abs(a))
    if abs(log_a2) < 1e-12:
        return k_w * x * x
    return k_w * x * np.expm1(x * log_a2) / np.expm1(log_a2)


def aoi_update(delta: int, transmitted: bool) -> int:
    return 0 if transmitted else delta + 1


def decoder_update(state: AgentRuntimeState, agent_type: AgentType, u_prev, observation=None) -> AgentRuntimeState:
    """Decoder step: copy the observation when scheduled, else predict open loop."""
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    if u_prev.shape != (agent_type.m,):
        raise ValueError("decoder_update: dimension mismatch in u_prev")
    if observation is not None:
        obs = np.asarray(observation, dtype=float).reshape(-1)
        if obs.shape != (agent_type.n,):
            raise ValueError("decoder_update: dimension mismatch in observation")
        return replace(state, z=obs.copy(), delta=0)
    z = agent_type.A @ state.z + agent_type.B @ u_prev
    return replace(state, z=z, delta=state.delta + 1)
