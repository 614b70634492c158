"""Single-agent transmission MDP with a per-transmission price.

State is the AoI, action 1 transmits (next state 0), action 0 waits
(next state Delta+1), and the stage cost is g(Delta) + lambda * a.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import AgentType
from .errors import ConvergenceError, DomainError, InfeasibleError
from .waoi import DELTA_MAX, scalar_g_continuous, waoi_table

log = logging.getLogger(__name__)

DISCOUNTS = (0.99, 0.999, 0.9999)
# tried in order when the standard schedule disagrees with the oracle
EXTRA_DISCOUNTS = (1 - 1e-5, 1 - 1e-6, 1 - 1e-7, 1 - 1e-8)
# stage costs are capped so far-away truncated states stay finite
G_CAP = 1e100
TIE_RTOL = 1e-12
DELTA_MAX_LIMIT = 1 << 15


class TauBoundError(InfeasibleError):
    """The minimizing threshold sits on the search bound."""


@dataclass(frozen=True, eq=False)
class MdpSpec:
    agent_type: AgentType
    lam: float
    delta_max: int = DELTA_MAX
    discount: float = 0.999

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        if self.delta_max < 2:
            raise ValueError("delta_max must be at least 2")

    def costs(self) -> np.ndarray:
        return np.minimum(waoi_table(self.agent_type, self.delta_max).g_values, G_CAP)


@dataclass(frozen=True)
class ThresholdResult:
    tau: int
    sigma_star: float
    method: str
    eta: float | None = None
    discount: float | None = None


def _bellman_parts(V, g, lam, alpha):
    nxt = np.append(V[1:], V[-1])
    wait = g + alpha * nxt
    send = g + lam + alpha * V[0]
    return wait, send


def _residual_ok(V, TV, tol) -> bool:
    # relative per state: far states carry astronomically large values
    return bool(np.all(np.abs(TV - V) <= tol * np.maximum(1.0, np.abs(V))))


def discounted_value_iteration(spec: MdpSpec, tol: float = 1e-9, max_iter: int = 2_000_000) -> np.ndarray:
    """Plain value iteration on the truncated discounted problem."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = spec.costs()
    V = np.zeros_like(g)
    for _ in range(max_iter):
        wait, send = _bellman_parts(V, g, spec.lam, spec.discount)
        TV = np.minimum(wait, send)
        if _residual_ok(V, TV, tol):
            return TV
        V = TV
    raise ConvergenceError(f"value iteration did not converge in {max_iter} sweeps "
                           f"(discount={spec.discount}, delta_max={spec.delta_max})")


def _evaluate_policy(act, g, lam, alpha) -> np.ndarray:
    # V(d) = c_d + k_d * V(0), filled backward, then V(0) solved from d = 0
    D = len(g) - 1
    c = np.empty(D + 1)
    k = np.empty(D + 1)
    gl = g.tolist()
    al = act.tolist()
    if al[D]:
        c[D], k[D] = gl[D] + lam, alpha
    else:
        c[D], k[D] = gl[D] / (1.0 - alpha), 0.0
    cn, kn = c[D], k[D]
    for d in range(D - 1, -1, -1):
        if al[d]:
            cn, kn = gl[d] + lam, alpha
        else:
            cn, kn = gl[d] + alpha * cn, alpha * kn
        c[d], k[d] = cn, kn
    v0 = c[0] / (1.0 - k[0])
    return c + k * v0


def discounted_policy_iteration(spec: MdpSpec, tol: float = 1e-9, max_iter: int = 1000) -> np.ndarray:
    """Exact policy iteration; returns V with a certified Bellman residual."""
    g = spec.costs()
    act = np.ones(len(g), dtype=bool)
    for _ in range(max_iter):
        V = _evaluate_policy(act, g, spec.lam, spec.discount)
        wait, send = _bellman_parts(V, g, spec.lam, spec.discount)
        scale = TIE_RTOL * np.maximum(1.0, np.abs(V))
        # switch only on strict improvement so the iteration cannot cycle
        new = np.where(send < wait - scale, True, np.where(wait < send - scale, False, act))
        if np.array_equal(new, act):
            if not _residual_ok(V, np.minimum(wait, send), tol):
                raise ConvergenceError("policy iteration stalled with a large Bellman residual")
            return V
        act = new
    raise ConvergenceError(f"policy iteration did not converge in {max_iter} steps")


def greedy_actions(V: np.ndarray, spec: MdpSpec) -> np.ndarray:
    wait, send = _bellman_parts(V, spec.costs(), spec.lam, spec.discount)
    # ties go to transmitting, which gives the smallest threshold
    return send <= wait + TIE_RTOL * np.maximum(1.0, np.abs(wait))


def extract_threshold(V: np.ndarray, spec: MdpSpec) -> ThresholdResult:
    """Read the threshold off the greedy policy and check its shape."""
    act = greedy_actions(V, spec)
    hits = np.flatnonzero(act)
    if hits.size == 0:
        raise DomainError("greedy policy never transmits; increase delta_max")
    tau = int(hits[0])
    if not act[tau:].all():
        raise DomainError(f"greedy policy is not of threshold form (first transmit at {tau})")
    if tau > spec.delta_max // 4:
        raise DomainError(f"threshold {tau} exceeds delta_max/4 = {spec.delta_max // 4}")
    sigma = (1.0 - spec.discount) * float(V[0])
    return ThresholdResult(tau=tau, sigma_star=sigma, method="value_iteration", discount=spec.discount)


def cycle_costs(agent_type: AgentType, lam: float, tau_max: int) -> np.ndarray:
    """Long-run average cost of every threshold policy tau = 0..tau_max."""
    g = waoi_table(agent_type, 4 * tau_max).g_values[: tau_max + 1]
    return (np.cumsum(g) + lam) / np.arange(1, tau_max + 2)


def cycle_average_oracle(agent_type: AgentType, lam: float, tau_max: int = DELTA_MAX // 4) -> ThresholdResult:
    """Enumerate renewal-cycle averages and return the smallest minimizer."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    c = cycle_costs(agent_type, lam, tau_max)
    best = c.min()
    tau = int(np.flatnonzero(c <= best * (1 + TIE_RTOL))[0])
    if tau == tau_max:
        raise TauBoundError(f"cycle minimizer at the bound tau_max={tau_max}")
    return ThresholdResult(tau=tau, sigma_star=float(c[tau]), method="cycle_oracle")


def _oracle_autogrow(agent_type, lam, delta_max):
    D = delta_max
    while True:
        try:
            return cycle_average_oracle(agent_type, lam, D // 4), D
        except TauBoundError:
            if D >= DELTA_MAX_LIMIT:
                raise
            D *= 2
            log.info("threshold near the truncation bound; delta_max raised to %d", D)


def average_cost_threshold(agent_type: AgentType, lam: float, delta_max: int = DELTA_MAX,
                           discounts=DISCOUNTS, tol: float = 1e-9) -> ThresholdResult:
    """Average-cost threshold by the vanishing-discount route.

    Discounted problems are solved exactly by policy iteration for each
    discount in ``discounts``. The answer is certified when the two finest
    agree with each other and with :func:`cycle_average_oracle`. When they do
    not (the price sits very near a switching point) finer discounts are
    tried, and an exact tie between two thresholds resolves to the smaller.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    oracle, D = _oracle_autogrow(agent_type, lam, delta_max)
    results = []
    n_tried = 0
    for alpha in tuple(discounts) + EXTRA_DISCOUNTS:
        n_tried += 1
        V = discounted_policy_iteration(MdpSpec(agent_type, lam, D, alpha), tol)
        try:
            results.append(extract_threshold(V, MdpSpec(agent_type, lam, D, alpha)))
        except DomainError as exc:
            # a short effective horizon can push the discounted threshold past the bound
            log.debug("discount %r skipped: %s", alpha, exc)
            continue
        if n_tried < len(discounts) or len(results) < 2:
            continue
        last, prev = results[-1], results[-2]
        if last.tau == prev.tau == oracle.tau:
            return last
    if not results:
        raise ConvergenceError(f"no discount gave a threshold inside delta_max={D} at lambda={lam!r}")
    c = cycle_costs(agent_type, lam, D // 4)
    t_vi = results[-1].tau
    if abs(c[t_vi] - c[oracle.tau]) <= TIE_RTOL * max(1.0, c[oracle.tau]):
        log.debug("exact tie between thresholds %d and %d at lambda=%r", oracle.tau, t_vi, lam)
        return ThresholdResult(tau=oracle.tau, sigma_star=results[-1].sigma_star,
                               method="value_iteration", discount=results[-1].discount)
    raise ConvergenceError(f"discounted thresholds {[r.tau for r in results]} disagree with the "
                           f"cycle oracle ({oracle.tau}) at lambda={lam!r}")


def _require_scalar(agent_type):
    if not agent_type.is_scalar:
        raise DomainError("the implicit threshold equation applies to scalar agents only")
    return float(agent_type.A[0, 0]), float(agent_type.K_W[0, 0])


def f1(tau: int, eta, a: float, k_w: float, lam: float):
    """Implicit threshold equation for a != 1, in its printed closed form."""
    a2 = a * a
    d = a2 - 1.0
    x = tau + eta
    first = (tau + 1) * x * (a2 ** x - 1.0) / d
    inner = tau * (tau + 1) / 2.0 - a2 / d ** 2 + a2 ** (tau + 1) * (-tau * a2 + tau + 1) / d ** 2
    return k_w * (first + inner / d) - lam


def f2(tau: int, eta, k_w: float, lam: float):
    """Implicit threshold equation for a == 1."""
    x = tau + eta
    return k_w * ((tau + 1) * x * x - tau * (2 * tau + 1) * (tau + 1) / 6.0) - lam


def f_safe(tau: int, eta, a: float, k_w: float, lam: float):
    """Same equation, (tau+1) g(tau+eta) - sum_{l<=tau} g(l) - lambda, summed directly."""
    ls = np.arange(tau + 1)
    partial = np.sum(scalar_g_continuous(ls, a, k_w))
    return (tau + 1) * scalar_g_continuous(tau + eta, a, k_w) - partial - lam


def implicit_equation(tau: int, eta, a: float, k_w: float, lam: float):
    """Dispatch to f1, f2 or the stable form when a^2 is close to 1."""
    if a == 1.0:
        return f2(tau, eta, k_w, lam)
    if abs(a * a - 1.0) < 1e-2:
        return f_safe(tau, eta, a, k_w, lam)
    return f1(tau, eta, a, k_w, lam)


def _bisect_eta(fun, tol=1e-10):
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fun(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def scalar_threshold_implicit(agent_type: AgentType, lam: float, tau_max: int = DELTA_MAX // 4) -> ThresholdResult:
    """Solve the scalar implicit equation for (tau, eta).

    The left side increases in eta, so tau admits a root eta in [0, 1]
    exactly when f(tau, 0) <= 0 <= f(tau, 1). At a switching price both tau
    (with eta = 1) and tau + 1 (with eta = 0) qualify; the smaller wins.
    Comparisons carry a relative tolerance so exact ties survive rounding.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    a, k_w = _require_scalar(agent_type)
    found = []
    for tau in range(tau_max + 1):
        scale = TIE_RTOL * max(1.0, lam, (tau + 1) * float(scalar_g_continuous(tau + 1.0, a, k_w)))
        f0 = implicit_equation(tau, 0.0, a, k_w, lam)
        if f0 > scale:
            break
        if implicit_equation(tau, 1.0, a, k_w, lam) >= -scale:
            found.append(tau)
    if not found:
        raise InfeasibleError(f"no admissible (tau, eta) with tau <= {tau_max}")
    if len(found) > 2 or (len(found) == 2 and found[1] != found[0] + 1):
        log.warning("several admissible thresholds %s; using the smallest", found)
    tau = found[0]
    eta = _bisect_eta(lambda e: implicit_equation(tau, e, a, k_w, lam))
    sigma = float(scalar_g_continuous(tau + eta, a, k_w))
    return ThresholdResult(tau=tau, sigma_star=sigma, method="implicit_scalar", eta=eta)


METHODS = {
    "vi": average_cost_threshold,
    "implicit": scalar_threshold_implicit,
    "oracle": cycle_average_oracle,
}
