"""Base-station scheduling: price bisection, the randomized two-threshold
policy, its Markov chain, the hard bandwidth projection and AoI simulation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import AgentType, Population
from .errors import DomainError, InfeasibleError
from .rng import stream
from .threshold import average_cost_threshold
from .waoi import DELTA_MAX, waoi_table

log = logging.getLogger(__name__)

LAMBDA_CAP = 2.0 ** 64


def update_rate_sum(taus) -> float:
    """Aggregate update rate sum_i 1/(tau_i + 1)."""
    taus = np.asarray(taus)
    if np.any(taus < 0):
        raise ValueError("thresholds must be nonnegative")
    return float(np.sum(1.0 / (taus + 1.0)))


@dataclass(frozen=True, eq=False)
class ChainStationary:
    pi: np.ndarray
    rate: float


@dataclass(frozen=True, eq=False)
class SchedulerSolution:
    lambda_l: float
    lambda_u: float
    tau_l: np.ndarray
    tau_u: np.ndarray
    p: float
    Rd_l: float
    Rd_u: float
    R_d: int
    type_tau_l: np.ndarray = field(default=None)
    type_tau_u: np.ndarray = field(default=None)

    def stationary(self, i: int) -> ChainStationary:
        return stationary_distribution(int(self.tau_l[i]), int(self.tau_u[i]), self.p)

    def achieved_rate(self) -> float:
        return float(sum(self.stationary(i).rate for i in range(len(self.tau_l))))

    def to_dict(self) -> dict:
        return {
            "R_d": int(self.R_d),
            "lambda_l": float(self.lambda_l),
            "lambda_u": float(self.lambda_u),
            "p": float(self.p),
            "Rd_l": float(self.Rd_l),
            "Rd_u": float(self.Rd_u),
            "achieved_rate": self.achieved_rate(),
            "tau_l": [int(t) for t in self.tau_l],
            "tau_u": [int(t) for t in self.tau_u],
        }


def _type_taus(population: Population, lam: float, solver, cache: dict) -> np.ndarray:
    out = []
    for t in population.types:
        key = (id(t), lam)
        if key not in cache:
            cache[key] = solver(t, lam).tau
        out.append(cache[key])
    return np.asarray(out, dtype=int)


def chain_rate(tau_l, tau_u, p):
    """Stationary transmit probability of the per-step randomized chain."""
    tau_l = np.asarray(tau_l, dtype=float)
    span = np.asarray(tau_u, dtype=float) - tau_l
    if p >= 1.0:
        return 1.0 / (tau_l + 1.0)
    # states tau_l .. tau_u-1 carry mass (1-p)^j; total mass tau_l + sum_j (1-p)^j
    q = 1.0 - p
    tail = np.where(span > 0, (1.0 - q ** (span + 1)) / p if p > 0 else span + 1.0, 1.0)
    return 1.0 / (tau_l + tail)


def bisect_lambda(population: Population, R_d: int, eps: float = 1e-6, calibrate_p: bool = False,
                  solver=None) -> SchedulerSolution:
    """Bracket the optimal price so that the relaxed rate constraint is met.

    ``solver(agent_type, lam)`` returns an object with a ``tau`` attribute;
    it defaults to :func:`average_cost_threshold`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if R_d < 1:
        raise ValueError("R_d must be at least 1")
    solver = solver or average_cost_threshold
    counts = population.counts
    assign = population.assignment
    cache: dict = {}

    def rate(lam):
        tt = _type_taus(population, lam, solver, cache)
        return tt, float(np.sum(counts / (tt + 1.0)))

    if R_d >= population.N:
        zero = np.zeros(len(population.types), dtype=int)
        n = float(population.N)
        return SchedulerSolution(0.0, 0.0, zero[assign], zero[assign], 1.0, n, n, int(R_d), zero, zero)

    lam_l, lam_u = 0.0, 1.0
    tt_u, w_u = rate(lam_u)
    while w_u > R_d:
        lam_l, lam_u = lam_u, 2.0 * lam_u
        if lam_u > LAMBDA_CAP:
            raise InfeasibleError(f"update rate still above R_d={R_d} at lambda={lam_u:.3g}")
        tt_u, w_u = rate(lam_u)
    tt_l, w_l = rate(lam_l)
    while lam_u - lam_l > eps:
        mid = 0.5 * (lam_l + lam_u)
        tt, w = rate(mid)
        if w <= R_d:
            lam_u, tt_u, w_u = mid, tt, w
        else:
            lam_l, tt_l, w_l = mid, tt, w

    p = interpolation_weight(R_d, w_l, w_u)
    gaps = tt_u - tt_l
    if np.any(gaps > 1):
        log.info("upper and lower thresholds differ by more than one state for types %s",
                 np.flatnonzero(gaps > 1).tolist())
    if calibrate_p:
        p = calibrate_probability(tt_l, tt_u, counts, R_d, p)
    return SchedulerSolution(lam_l, lam_u, tt_l[assign], tt_u[assign], float(p), w_l, w_u, int(R_d), tt_l, tt_u)


def interpolation_weight(R_d: float, Rd_l: float, Rd_u: float) -> float:
    """p = (R_d - Rd_u) / (Rd_l - Rd_u), clamped to [0, 1]; 1 when the rates coincide."""
    if Rd_l == Rd_u:
        return 1.0
    p = (R_d - Rd_u) / (Rd_l - Rd_u)
    if not 0.0 <= p <= 1.0:
        log.warning("interpolation weight p=%r outside [0, 1]; clamped", p)
        p = min(1.0, max(0.0, p))
    return float(p)


def calibrate_probability(tt_l, tt_u, counts, R_d, p_default) -> float:
    """Choose p so the summed stationary chain rates equal R_d."""
    def excess(p):
        return float(np.sum(counts * chain_rate(tt_l, tt_u, p))) - R_d

    lo, hi = excess(0.0), excess(1.0)
    if lo > 0 or hi < 0:
        log.warning("R_d outside the reachable chain-rate range; keeping p=%r", p_default)
        return p_default
    if lo == 0:
        return 0.0
    return float(brentq(excess, 0.0, 1.0, xtol=1e-14))


def randomized_decision(delta: int, tau_l: int, tau_u: int, p: float, rng: np.random.Generator) -> int:
    """Transmit at or above tau_u, with probability p on [tau_l, tau_u)."""
    if delta >= tau_u:
        return 1
    if delta >= tau_l:
        return int(rng.random() < p)
    return 0


def randomized_decisions(delta, tau_l, tau_u, p, uniforms) -> np.ndarray:
    """Vectorized :func:`randomized_decision` driven by supplied uniforms."""
    return (delta >= tau_u) | ((delta >= tau_l) & (uniforms < p))


def transition_matrix(tau_l: int, tau_u: int, p: float) -> np.ndarray:
    """Transition matrix of the AoI chain on states 0..tau_u."""
    P = np.zeros((tau_u + 1, tau_u + 1))
    for d in range(tau_u + 1):
        send = 1.0 if d >= tau_u else (p if d >= tau_l else 0.0)
        P[d, 0] += send
        if d < tau_u:
            P[d, d + 1] += 1.0 - send
    return P


def stationary_distribution(tau_l: int, tau_u: int, p: float) -> ChainStationary:
    """Closed-form stationary law of the randomized chain."""
    if tau_l > tau_u:
        raise ValueError("tau_l must not exceed tau_u")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    w = np.ones(tau_u + 1)
    for d in range(tau_l + 1, tau_u + 1):
        w[d] = w[d - 1] * (1.0 - p)
    pi = w / w.sum()
    send = np.where(np.arange(tau_u + 1) >= tau_u, 1.0, np.where(np.arange(tau_u + 1) >= tau_l, p, 0.0))
    return ChainStationary(pi=pi, rate=float(pi @ send))


def hard_bandwidth_project(candidates, R_d: int, rng: np.random.Generator) -> np.ndarray:
    """Keep at most R_d candidates, chosen uniformly at random."""
    if R_d < 1:
        raise ValueError("R_d must be at least 1")
    cands = np.asarray(candidates, dtype=int)
    if cands.size <= R_d:
        return cands
    return np.sort(rng.choice(cands, size=R_d, replace=False))


def age_penalty_omega(delta: int, agent_type: AgentType, omega_k: int, R_d: int, tau: int,
                      tol: float = 1e-12) -> float:
    """Expected extra WAoI from being crowded out when omega_k agents compete.

    Sums q^{l+1} g(tau+l) with q = 1 - R_d/omega_k until a geometric bound on
    the remainder drops below ``tol``.
    """
    if delta < tau or omega_k <= R_d:
        return 0.0
    q = 1.0 - R_d / omega_k
    fro2 = float(np.sum(agent_type.A ** 2))
    if q * fro2 >= 1.0:
        raise DomainError(f"age penalty series diverges: (1 - R_d/omega) * ||A||_F^2 = {q * fro2:.4g} >= 1")
    # g(d) <= tr(K_W) d^2 F^(d-1) with F = max(1, ||A||_F^2)
    F = max(1.0, fro2)
    trk = float(np.trace(agent_type.K_W))
    rho = q * F
    total = 0.0
    D = DELTA_MAX
    g = waoi_table(agent_type, D).g_values
    l = 0
    while True:
        d = tau + l
        if d >= D:
            D *= 2
            g = waoi_table(agent_type, D).g_values
        total += q ** (l + 1) * g[d]
        l += 1
        d = tau + l
        ratio = rho * ((d + 1) / d) ** 2
        if ratio < 1.0:
            bound = q ** (l + 1) * trk * d * d * F ** max(d - 1, 0) / (1.0 - ratio)
            if bound < tol:
                return float(total)


@dataclass
class AoiRunResult:
    J_S: float
    rate: float
    max_scheduled: int
    per_agent_rate: np.ndarray
    trace: np.ndarray | None = None


def simulate_aoi(population: Population, solution: SchedulerSolution, policy: str, T: int, seed: int,
                 run: int = 0, record: bool = False, delta_max: int = DELTA_MAX) -> AoiRunResult:
    """Simulate the AoI processes under the relaxed or hard policy.

    Decision uniforms come from the "bs-decision" stream, so relaxed and hard
    runs with the same (seed, run) see identical draws. The per-step cost is
    g of the AoI before the step's decision.
    """
    if policy not in ("relaxed", "hard"):
        raise ValueError(f"unknown policy {policy!r}")
    if T < 1:
        raise ValueError("T must be at least 1")
    N = population.N
    g = np.stack([waoi_table(t, delta_max).g_values for t in population.types])
    types = population.assignment
    dec_rng = stream(seed, run, "bs-decision")
    proj_rng = stream(seed, run, "bs-projection")
    tl, tu, p = solution.tau_l, solution.tau_u, solution.p
    delta = np.zeros(N, dtype=int)
    total = 0.0
    sends = np.zeros(N)
    max_sched = 0
    trace = [] if record else None
    for k in range(T):
        if delta.max() > delta_max:
            raise DomainError(f"AoI exceeded delta_max={delta_max} at step {k}")
        cost = g[types, delta]
        total += cost.sum()
        zeta = randomized_decisions(delta, tl, tu, p, dec_rng.random(N))
        if policy == "hard":
            cands = np.flatnonzero(zeta)
            if cands.size > solution.R_d:
                zeta = np.zeros(N, dtype=bool)
                zeta[hard_bandwidth_project(cands, solution.R_d, proj_rng)] = True
            n_sched = int(zeta.sum())
            if n_sched > solution.R_d:
                raise AssertionError(f"bandwidth exceeded at step {k}")
        else:
            n_sched = int(zeta.sum())
        max_sched = max(max_sched, n_sched)
        if record:
            trace.append(np.column_stack([np.full(N, k), np.arange(N), delta, zeta, cost]))
        sends += zeta
        delta = np.where(zeta, 0, delta + 1)
    return AoiRunResult(J_S=total / (N * T), rate=float(sends.sum() / T), max_scheduled=max_sched,
                        per_agent_rate=sends / T, trace=np.concatenate(trace) if record else None)


def scheduling_cost(policy: str, population: Population, solution: SchedulerSolution, T: int, seed: int,
                    run: int = 0) -> float:
    """Time- and agent-averaged WAoI under the given policy."""
    return simulate_aoi(population, solution, policy, T, seed, run).J_S
