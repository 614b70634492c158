"""Closed-loop N-agent simulation: scheduler, decoders, tracking controllers
and plants, with the cost and approximation metrics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import Population
from .errors import DomainError
from .meanfield import MeanFieldSolution
from .rng import stream
from .scheduler import SchedulerSolution, hard_bandwidth_project, randomized_decisions
from .waoi import DELTA_MAX, waoi_table

LAW_MAX = 64


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of a config mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ExperimentRecord:
    config_hash: str
    seed: int
    N: int
    R_d: int
    T: int
    metrics: dict
    taus: dict = field(default_factory=dict)
    error_law: dict | None = None
    trajectory: "Trajectory | None" = None


@dataclass
class Trajectory:
    """Full per-step history; arrays are indexed [k, i, ...]."""

    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    zeta: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @property
    def T(self) -> int:
        return self.x.shape[0]


def _per_agent_quad(v, M):
    return np.einsum("kai,aij,kaj->ka", v, M, v)


def consensus_cost(traj: Trajectory, burn_in: int = 0) -> np.ndarray:
    """Per-agent time average of ||x_i - mean_j x_j||_Q^2 + ||u_i||_R^2."""
    x, u = traj.x[burn_in:], traj.u[burn_in:]
    dev = x - x.mean(axis=1, keepdims=True)
    return (_per_agent_quad(dev, traj.Q) + _per_agent_quad(u, traj.R)).mean(axis=0)


def tracking_cost(traj: Trajectory, xbar_star, burn_in: int = 0) -> np.ndarray:
    """Per-agent time average of ||x_i - xbar*||_Q^2 + ||u_i||_R^2."""
    xb = np.asarray(xbar_star)[: traj.T]
    x, u = traj.x[burn_in:], traj.u[burn_in:]
    dev = x - xb[burn_in:, None, :]
    return (_per_agent_quad(dev, traj.Q) + _per_agent_quad(u, traj.R)).mean(axis=0)


def mf_approx_error(trajectories, xbar_star, T: int | None = None) -> float:
    """Replication average of (1/T) sum_k ||mean_j x_j[k] - xbar*[k]||^2."""
    vals = []
    for traj in trajectories:
        steps = traj.T if T is None else T
        gap = traj.x[:steps].mean(axis=1) - np.asarray(xbar_star)[:steps]
        vals.append(float(np.mean(np.sum(gap * gap, axis=1))))
    return float(np.mean(vals))


def run_closed_loop(population: Population, solution: SchedulerSolution, mf: MeanFieldSolution, policy: str,
                    T: int, seed: int, run: int = 0, burn_in: float = 0.1, dump: bool = False,
                    noise: bool = True, delta_max: int = DELTA_MAX, config: dict | None = None) -> ExperimentRecord:
    """Simulate T steps of the full system.

    Each step: base-station decisions from the pre-step AoI, optional hard
    projection, decoder update, control from (z, r[k+1]), plant step. At
    k = 0 an unscheduled decoder starts from the prior mean nu0. Error-law
    samples are pooled after burn-in and only once an agent has been heard
    from at least once. With ``noise=False`` the run is deterministic:
    x[0] = nu0 and W = 0.
    """
    if policy not in ("relaxed", "hard"):
        raise ValueError(f"unknown policy {policy!r}")
    if T < 1:
        raise ValueError("T must be at least 1")
    if len(solution.tau_l) != population.N or len(mf.per_type) != len(population.types):
        raise ValueError("solutions do not match the population")
    N, n, m = population.N, population.n, population.m
    types = population.assignment
    n_types = len(population.types)
    counts = population.counts
    bounds = np.concatenate([[0], np.cumsum(counts)])
    slices = [slice(bounds[j], bounds[j + 1]) for j in range(n_types)]
    tps = population.types
    gains = mf.per_type
    HQ = np.stack([t.Q for t in tps])[types]
    HR = np.stack([t.R for t in tps])[types]
    g_tab = np.stack([waoi_table(t, delta_max).g_values for t in tps])
    nu0 = np.stack([t.nu0 for t in tps])[types]
    xb, r_all = mf.extend(T)

    init_rng = stream(seed, run, "init")
    noise_rng = stream(seed, run, "noise")
    dec_rng = stream(seed, run, "bs-decision")
    proj_rng = stream(seed, run, "bs-projection")

    x = nu0.copy()
    if noise:
        std = init_rng.standard_normal((N, n))
        for j, s in enumerate(slices):
            x[s] += std[s] @ np.linalg.cholesky(tps[j].Sigma_x).T
    w_fac = [np.linalg.cholesky(t.K_W) for t in tps]
    z = np.zeros((N, n))
    u = np.zeros((N, m))
    delta = np.zeros(N, dtype=int)
    synced = np.zeros(N, dtype=bool)
    burn = int(np.floor(burn_in * T))

    js_total = js_burn = 0.0
    cons_full = np.zeros(N)
    cons_burn = np.zeros(N)
    trk_full = np.zeros(N)
    trk_burn = np.zeros(N)
    eps_sum = 0.0
    sends = 0
    max_sched = 0
    law_n = np.zeros(n_types * (LAW_MAX + 1))
    law_s = np.zeros_like(law_n)
    law_s2 = np.zeros_like(law_n)
    sq_state = 0.0
    if dump:
        rec = {name: [] for name in ("x", "z", "u", "delta", "zeta")}

    for k in range(T):
        if delta.max() > delta_max:
            raise DomainError(f"AoI exceeded delta_max={delta_max} at step {k}")
        g_now = g_tab[types, delta].sum()
        js_total += g_now
        if k >= burn:
            js_burn += g_now
        zeta = randomized_decisions(delta, solution.tau_l, solution.tau_u, solution.p, dec_rng.random(N))
        if policy == "hard":
            cands = np.flatnonzero(zeta)
            if cands.size > solution.R_d:
                zeta = np.zeros(N, dtype=bool)
                zeta[hard_bandwidth_project(cands, solution.R_d, proj_rng)] = True
            if zeta.sum() > solution.R_d:
                raise AssertionError(f"bandwidth exceeded at step {k}")
        n_sched = int(zeta.sum())
        sends += n_sched
        max_sched = max(max_sched, n_sched)

        if k == 0:
            pred = nu0.copy()
        else:
            pred = np.empty_like(z)
            for j, s in enumerate(slices):
                pred[s] = z[s] @ tps[j].A.T + u[s] @ tps[j].B.T
        z = np.where(zeta[:, None], x, pred)
        delta = np.where(zeta, 0, delta + 1)
        synced |= zeta

        if k >= burn:
            e2 = np.sum((x - z) ** 2, axis=1)
            ok = synced & (delta <= LAW_MAX)
            key = types[ok] * (LAW_MAX + 1) + delta[ok]
            law_n += np.bincount(key, minlength=law_n.size)
            law_s += np.bincount(key, weights=e2[ok], minlength=law_n.size)
            law_s2 += np.bincount(key, weights=e2[ok] ** 2, minlength=law_n.size)

        for j, s in enumerate(slices):
            u[s] = -(z[s] @ gains[j].Pi.T) - r_all[j, k + 1] @ gains[j].L.T

        xm = x.mean(axis=0)
        uR = np.einsum("ai,aij,aj->a", u, HR, u)
        cons = np.einsum("ai,aij,aj->a", x - xm, HQ, x - xm) + uR
        trk = np.einsum("ai,aij,aj->a", x - xb[k], HQ, x - xb[k]) + uR
        cons_full += cons
        trk_full += trk
        if k >= burn:
            cons_burn += cons
            trk_burn += trk
        eps_sum += float(np.sum((xm - xb[k]) ** 2))
        sq_state += float(np.mean(np.sum(x * x, axis=1)))

        if dump:
            rec["x"].append(x.copy())
            rec["z"].append(z.copy())
            rec["u"].append(u.copy())
            rec["delta"].append(delta.copy())
            rec["zeta"].append(zeta.copy())

        std = noise_rng.standard_normal((N, n)) if noise else None
        x_next = np.empty_like(x)
        for j, s in enumerate(slices):
            x_next[s] = x[s] @ tps[j].A.T + u[s] @ tps[j].B.T
            if noise:
                x_next[s] += std[s] @ w_fac[j].T
        x = x_next
        if not np.all(np.isfinite(x)):
            raise DomainError(f"state overflow at step {k}; the closed loop is unstable")

    post = max(T - burn, 1)
    metrics = {
        f"J_S_{policy}": float(js_burn) / (N * post),
        f"J_S_{policy}_full": float(js_total) / (N * T),
        "J_iN_mean": float(cons_burn.mean() / post),
        "J_iN_mean_full": float(cons_full.mean() / T),
        "J_track_mean": float(trk_burn.mean() / post),
        "J_track_mean_full": float(trk_full.mean() / T),
        "eps_T": eps_sum / T,
        "achieved_rate": sends / (N * T),
        "max_scheduled": float(max_sched),
        "mean_sq_state": sq_state / T,
    }
    law = {"count": law_n.reshape(n_types, -1), "sum": law_s.reshape(n_types, -1),
           "sumsq": law_s2.reshape(n_types, -1)}
    traj = None
    if dump:
        traj = Trajectory(x=np.stack(rec["x"]), z=np.stack(rec["z"]), u=np.stack(rec["u"]),
                          delta=np.stack(rec["delta"]), zeta=np.stack(rec["zeta"]), Q=HQ, R=HR)
    return ExperimentRecord(config_hash=config_hash(config or {}), seed=int(seed), N=N, R_d=int(solution.R_d),
                            T=int(T), metrics=metrics,
                            taus={"tau_l": solution.tau_l.tolist(), "tau_u": solution.tau_u.tolist()},
                            error_law=law, trajectory=traj)


def error_law_table(record: ExperimentRecord, population: Population, min_visits: int = 1000):
    """Rows (type, d, visits, mean ||e||^2, standard error, h(d)) for levels
    visited at least ``min_visits`` times."""
    rows = []
    law = record.error_law
    for j, t in enumerate(population.types):
        h = waoi_table(t, LAW_MAX).h_values
        for d in range(LAW_MAX + 1):
            c = law["count"][j, d]
            if c < min_visits:
                continue
            mean = law["sum"][j, d] / c
            var = law["sumsq"][j, d] / c - mean * mean
            se = np.sqrt(max(var, 0.0) / c)
            rows.append((j, d, int(c), float(mean), float(se), float(h[d])))
    return rows
