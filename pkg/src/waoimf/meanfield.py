"""Mean-field LQ tracking: Riccati gains, the reference signal r, the
mean-field operator with its fixed point, and the linear equilibrium map."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import AgentType, Population
from .errors import ConvergenceError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GainSet:
    K: np.ndarray
    L: np.ndarray
    Pi: np.ndarray
    H: np.ndarray


def _gains_from_K(K, agent_type: AgentType):
    A, B, R = agent_type.A, agent_type.B, agent_type.R
    L = np.linalg.solve(R + B.T @ K @ B, B.T)
    Pi = L @ K @ A
    return L, Pi


def are_residual(K: np.ndarray, agent_type: AgentType) -> float:
    """Sup-norm residual of K = A^T (K A - K^T B Pi) + Q."""
    A, B, Q = agent_type.A, agent_type.B, agent_type.Q
    _, Pi = _gains_from_K(K, agent_type)
    return float(np.max(np.abs(K - A.T @ (K @ A - K.T @ B @ Pi) - Q)))


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def solve_riccati(agent_type: AgentType, tol: float = 1e-12, max_iter: int = 100_000) -> GainSet:
    """Fixed-point iteration on the discrete algebraic Riccati equation from K = Q."""
    A, B, Q = agent_type.A, agent_type.B, agent_type.Q
    K = Q.copy()
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            _, Pi = _gains_from_K(K, agent_type)
            K_next = A.T @ (K @ A - K.T @ B @ Pi) + Q
            K_next = 0.5 * (K_next + K_next.T)
        if not np.all(np.isfinite(K_next)):
            raise ConvergenceError("Riccati iteration diverged")
        done = np.max(np.abs(K_next - K)) <= tol * max(1.0, np.max(np.abs(K_next)))
        K = K_next
        if done:
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} sweeps")
    if np.linalg.eigvalsh(K).min() < -1e-10:
        raise DomainError("Riccati solution is indefinite")
    L, Pi = _gains_from_K(K, agent_type)
    H = A - B @ Pi
    if spectral_radius(H) >= 1.0:
        raise DomainError(f"closed-loop matrix is not stable (spectral radius {spectral_radius(H):.6g})")
    return GainSet(K=K, L=L, Pi=Pi, H=H)


def control_action(z, r_next, gains: GainSet) -> np.ndarray:
    """Tracking control U = -Pi z - L r[k+1]."""
    z = np.asarray(z, dtype=float)
    r_next = np.asarray(r_next, dtype=float)
    if z.shape[-1] != gains.Pi.shape[1] or r_next.shape[-1] != gains.L.shape[1]:
        raise ValueError("control_action: dimension mismatch")
    return -(z @ gains.Pi.T) - (r_next @ gains.L.T)


def stein_tail(gains: GainSet, Q: np.ndarray, E: np.ndarray) -> np.ndarray:
    """S = sum_j (H^j)^T Q E^j, i.e. the solution of S = Q + H^T S E."""
    n = Q.shape[0]
    M = np.eye(n * n) - np.kron(E.T, gains.H.T)
    return np.linalg.solve(M, Q.reshape(-1, order="F")).reshape((n, n), order="F")


def r_trajectory(xbar, gains: GainSet, agent_type: AgentType, tail: np.ndarray | None = None) -> np.ndarray:
    """Reference signal r[k] = -sum_{j>=k} (H^{j-k})^T Q xbar[j].

    Past the last stored index xbar is continued as ``tail^j xbar[-1]``
    (held constant when ``tail`` is None), which gives r at the last index in
    closed form; earlier values follow r[k] = H^T r[k+1] - Q xbar[k].
    """
    xbar = np.asarray(xbar, dtype=float)
    if not np.all(np.isfinite(xbar)):
        raise DomainError("mean trajectory is unbounded")
    n = agent_type.n
    E = np.eye(n) if tail is None else tail
    S = stein_tail(gains, agent_type.Q, E)
    Ht = gains.H.T
    Q = agent_type.Q
    r = np.empty_like(xbar)
    r[-1] = -S @ xbar[-1]
    for k in range(len(xbar) - 2, -1, -1):
        r[k] = Ht @ r[k + 1] - Q @ xbar[k]
    return r


def mf_aggregate(xbar, agent_type: AgentType, gains: GainSet, horizon: int | None = None,
                 tail: np.ndarray | None = None) -> np.ndarray:
    """Mean state of one type tracking ``xbar``: X[k+1] = H X[k] - B L r[k+1]."""
    xbar = np.asarray(xbar, dtype=float)
    if horizon is not None:
        xbar = xbar[: horizon + 1]
    r = r_trajectory(xbar, gains, agent_type, tail)
    drive = -(r[1:] @ (agent_type.B @ gains.L).T)
    out = np.empty_like(xbar)
    out[0] = agent_type.nu0
    H = gains.H
    for k in range(len(xbar) - 1):
        out[k + 1] = H @ out[k] + drive[k]
    return out


def solve_gains(population: Population, tol: float = 1e-12) -> tuple:
    return tuple(solve_riccati(t, tol) for t in population.types)


def mf_operator(xbar, population: Population, gains=None, tail: np.ndarray | None = None) -> np.ndarray:
    """Population-weighted mean of the per-type tracking responses."""
    gains = gains or solve_gains(population)
    out = np.zeros_like(np.asarray(xbar, dtype=float))
    for t, g, w in zip(population.types, gains, population.weights):
        if w > 0:
            out += w * mf_aggregate(xbar, t, g, tail=tail)
    return out


def contraction_constant(population: Population, gains) -> float:
    """upsilon = sum_theta ||Q|| ||B L|| / (1 - ||H||)^2 P(theta)."""
    total = 0.0
    for t, g, w in zip(population.types, gains, population.weights):
        nh = np.linalg.norm(g.H, 2)
        if nh >= 1.0:
            return float("inf")
        total += w * np.linalg.norm(t.Q, 2) * np.linalg.norm(t.B @ g.L, 2) / (1.0 - nh) ** 2
    return float(total)


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    alpha: float
    upsilon: float
    per_type: list
    a2: bool
    a3: bool
    a4: bool

    @property
    def ok(self) -> bool:
        return self.a2 and self.a3 and self.a4

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "upsilon": self.upsilon, "assumption2": self.a2,
                "assumption3": self.a3, "assumption4": self.a4, "types": self.per_type}


def _psd_sqrt(Q):
    w, V = np.linalg.eigh(Q)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def _ctrb_rank(A, B):
    n = A.shape[0]
    blocks, M = [], B
    for _ in range(n):
        blocks.append(M)
        M = A @ M
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def check_assumptions(population: Population, alpha: float, gains=None) -> AssumptionReport:
    """Per-type Frobenius bound, controllability/observability and the
    contraction condition ||H|| + upsilon < 1."""
    rows = []
    a3_all = True
    solved = []
    for i, t in enumerate(population.types):
        ctrb = _ctrb_rank(t.A, t.B)
        obsv = _ctrb_rank(t.A.T, _psd_sqrt(t.Q).T)
        a3 = ctrb == t.n and obsv == t.n
        a3_all &= a3
        g = None
        if gains is not None:
            g = gains[i]
        elif a3:
            try:
                g = solve_riccati(t)
            except DomainError:
                g = None
        solved.append(g)
        fro = float(np.linalg.norm(t.A, "fro"))
        bound = float("inf") if alpha >= 1 else float(np.sqrt(1.0 / (1.0 - alpha)))
        rows.append({"type": t.id, "frobenius_A": fro, "frobenius_bound": bound,
                     "margin": bound - fro, "assumption2": bool(0 < fro < bound),
                     "ctrb_rank": ctrb, "obsv_rank": obsv, "assumption3": bool(a3)})
    if all(g is not None for g in solved):
        ups = contraction_constant(population, solved)
        for row, g in zip(rows, solved):
            nh = float(np.linalg.norm(g.H, 2))
            row.update({"norm_H": nh, "H_check": nh + ups, "assumption4": bool(nh + ups < 1.0)})
    else:
        ups = float("inf")
        for row in rows:
            row.update({"norm_H": float("nan"), "H_check": float("inf"), "assumption4": False})
    return AssumptionReport(alpha=float(alpha), upsilon=ups, per_type=rows,
                            a2=all(r["assumption2"] for r in rows), a3=bool(a3_all),
                            a4=all(r["assumption4"] for r in rows))


def _inner_series(g: GainSet, Q: np.ndarray, E: np.ndarray, bl: float, bound_tol: float = 1e-14,
                  max_terms: int = 100_000) -> np.ndarray:
    # sum_a (H^a)^T Q E^(a+1), cut once ||BL|| ||Q|| ||H||^a ||E||^(a+2) < bound_tol
    nH = np.linalg.norm(g.H, 2)
    nE = np.linalg.norm(E, 2)
    scale = bl * np.linalg.norm(Q, 2) * nE ** 2
    total = np.zeros_like(Q)
    left = np.eye(Q.shape[0])
    right = E.copy()
    for a in range(max_terms):
        total += left.T @ Q @ right
        left = g.H @ left
        right = right @ E
        if scale * (nH * nE) ** (a + 1) < bound_tol:
            return total
    raise ConvergenceError("inner series of the linear equilibrium map diverges")


def linear_mfe_operator(population: Population, tol: float = 1e-13, gains=None, max_iter: int = 100_000) -> np.ndarray:
    """Fixed point of E -> sum_theta P [H + B L sum_a (H^a)^T Q E^(a+1)].

    Iterates from sum_theta P H and projects back onto the unit spectral-norm
    ball whenever an iterate leaves it.
    """
    gains = gains or solve_gains(population)
    E = sum(w * g.H for g, w in zip(gains, population.weights))
    for _ in range(max_iter):
        E_new = np.zeros_like(E)
        for t, g, w in zip(population.types, gains, population.weights):
            if w > 0:
                BL = t.B @ g.L
                E_new += w * (g.H + BL @ _inner_series(g, t.Q, E, np.linalg.norm(BL, 2)))
        nrm = np.linalg.norm(E_new, 2)
        if nrm > 1.0:
            log.info("linear equilibrium iterate left the unit ball (norm %.6g); projected", nrm)
            E_new = E_new / nrm
        if np.max(np.abs(E_new - E)) <= tol:
            return E_new
        E = E_new
    raise ConvergenceError(f"linear equilibrium iteration did not converge in {max_iter} steps")


@dataclass(frozen=True, eq=False)
class MeanFieldSolution:
    xbar: np.ndarray
    E_star: np.ndarray
    r: np.ndarray
    upsilon: float
    per_type: tuple
    tails: tuple
    history: np.ndarray = field(default=None)
    assumptions_ok: bool = True

    @property
    def horizon(self) -> int:
        return len(self.xbar) - 1

    def extend(self, T: int):
        """Mean trajectory and per-type r on 0..T, continued past the stored
        horizon by powers of E_star."""
        h = self.horizon
        if T <= h:
            return self.xbar[: T + 1], self.r[:, : T + 1]
        n = self.xbar.shape[1]
        xb = np.empty((T + 1, n))
        xb[: h + 1] = self.xbar
        for k in range(h + 1, T + 1):
            xb[k] = self.E_star @ xb[k - 1]
        r = np.empty((len(self.per_type), T + 1, n))
        r[:, : h + 1] = self.r
        for i, S in enumerate(self.tails):
            r[i, h + 1:] = -(xb[h + 1:] @ S.T)
        return xb, r

    def linearity_residual(self, steps: int = 50) -> float:
        x = self.xbar[: steps + 1]
        gap = np.linalg.norm(x[1:] - x[:-1] @ self.E_star.T, axis=1)
        return float(np.max(gap / (1.0 + np.linalg.norm(x[:-1], axis=1))))


def mf_fixed_point(population: Population, tol: float = 1e-12, max_iter: int = 20_000, horizon: int = 200,
                   gains=None, x0=None, alpha: float | None = None) -> MeanFieldSolution:
    """Picard iteration on the mean-field operator.

    The contraction condition is checked and a warning logged when it fails;
    the iteration still runs and must converge on its own.
    """
    gains = gains or solve_gains(population)
    ups = contraction_constant(population, gains)
    report = check_assumptions(population, 0.0 if alpha is None else alpha, gains)
    if not report.a4:
        log.warning("contraction condition ||H|| + upsilon < 1 fails (upsilon=%.4g); "
                    "relying on observed convergence", ups)
    E = linear_mfe_operator(population, gains=gains)
    n = population.n
    if x0 is None:
        start = sum(w * t.nu0 for t, w in zip(population.types, population.weights))
        x = np.tile(start, (horizon + 1, 1))
    else:
        x = np.array(x0, dtype=float).reshape(horizon + 1, n)
    hist = []
    for _ in range(max_iter):
        x_new = mf_operator(x, population, gains, tail=E)
        d = float(np.max(np.abs(x_new - x)))
        hist.append(d)
        x = x_new
        if d <= tol:
            break
    else:
        raise ConvergenceError(f"mean-field iteration did not converge in {max_iter} steps (last step {d:.3g})")
    tails = tuple(stein_tail(g, t.Q, E) for t, g in zip(population.types, gains))
    r = np.stack([r_trajectory(x, g, t, E) for t, g in zip(population.types, gains)])
    return MeanFieldSolution(xbar=x, E_star=E, r=r, upsilon=ups, per_type=tuple(gains), tails=tails,
                             history=np.asarray(hist), assumptions_ok=report.a4)
