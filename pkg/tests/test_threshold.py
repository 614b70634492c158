import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waoimf.core import AgentType, scalar_type
from waoimf.errors import DomainError
from waoimf.threshold import (MdpSpec, TauBoundError, average_cost_threshold, cycle_average_oracle, cycle_costs,
                              discounted_policy_iteration, discounted_value_iteration, extract_threshold, f1, f2,
                              f_safe, implicit_equation, scalar_threshold_implicit)


def test_cycle_oracle_worked_example(unit_type):
    # g = 0, 1, 4, 9: cycle averages (g_0 + ... + g_tau + lambda) / (tau + 1)
    c = cycle_costs(unit_type, 10.0, 8)
    assert c[:4].tolist() == [10.0, 5.5, 5.0, 6.0]
    res = cycle_average_oracle(unit_type, 10.0)
    assert (res.tau, res.sigma_star) == (2, 5.0)


def test_zero_price_never_waits(unit_type):
    assert cycle_average_oracle(unit_type, 0.0).tau == 0
    res = average_cost_threshold(unit_type, 0.0)
    assert res.tau == 0 and res.sigma_star == pytest.approx(0.0, abs=1e-12)
    imp = scalar_threshold_implicit(unit_type, 0.0)
    assert imp.tau == 0 and imp.eta == 0.0
    V = discounted_value_iteration(MdpSpec(unit_type, 0.0, 64, 0.99))
    assert V[0] == pytest.approx(0.0, abs=1e-12)


def test_oracle_bound_error(unit_type):
    with pytest.raises(TauBoundError):
        cycle_average_oracle(unit_type, 1e9, tau_max=16)


@pytest.mark.parametrize("solver", [discounted_value_iteration, discounted_policy_iteration])
def test_discounted_threshold_form(unit_type, solver):
    spec = MdpSpec(unit_type, 10.0, 64, 0.999)
    V = solver(spec)
    assert np.all(np.diff(V) >= -1e-9)
    assert extract_threshold(V, spec).tau == 2


def test_value_and_policy_iteration_agree():
    for a, k, lam in [(0.5, 1.0, 3.0), (1.2, 0.3, 20.0), (0.9, 2.0, 0.7)]:
        spec = MdpSpec(scalar_type(a, k), lam, 48, 0.99)
        V1 = discounted_value_iteration(spec, tol=1e-12)
        V2 = discounted_policy_iteration(spec, tol=1e-12)
        assert np.allclose(V1, V2, rtol=1e-9)


def test_non_threshold_value_rejected(unit_type):
    spec = MdpSpec(unit_type, 1.0, 32, 0.9)
    V = np.zeros(33)
    V[1] = 100.0
    V[5] = 50.0
    with pytest.raises(DomainError):
        extract_threshold(V, spec)


def test_published_threshold_example():
    res = average_cost_threshold(scalar_type(1.3, 0.1), 4.0)
    assert res.tau == 2


def test_average_cost_worked_example(unit_type):
    res = average_cost_threshold(unit_type, 10.0)
    assert res.tau == 2
    assert res.sigma_star == pytest.approx(5.0, rel=1e-2)


@pytest.mark.parametrize("a,k", [(0.3, 2.0), (1.0, 1.0), (1.3, 0.5)])
def test_threshold_nondecreasing_in_price(a, k):
    t = scalar_type(a, k)
    taus = [average_cost_threshold(t, lam).tau for lam in np.linspace(0.0, 80.0, 41)]
    assert all(x <= y for x, y in zip(taus, taus[1:]))


def test_large_threshold_grows_truncation():
    t = scalar_type(0.5, 0.01)
    lam = 1e4
    oracle = cycle_average_oracle(t, lam, tau_max=4096)
    assert oracle.tau > 128
    assert average_cost_threshold(t, lam).tau == oracle.tau


@pytest.mark.parametrize("a", [0.2, 0.8, 0.95, 0.99, 1.01, 1.05, 1.4])
def test_printed_and_stable_forms_agree(a):
    for tau in range(6):
        for eta in (0.0, 0.3, 0.99):
            x = f1(tau, eta, a, 1.7, 2.5)
            y = f_safe(tau, eta, a, 1.7, 2.5)
            assert x == pytest.approx(y, rel=1e-8, abs=1e-8)


def test_unit_form_agrees():
    for tau in range(6):
        for eta in (0.0, 0.5, 0.9):
            assert f2(tau, eta, 1.7, 2.5) == pytest.approx(f_safe(tau, eta, 1.0, 1.7, 2.5), rel=1e-12, abs=1e-12)
    assert implicit_equation(2, 0.5, 1.0, 1.7, 2.5) == f2(2, 0.5, 1.7, 2.5)


def test_implicit_root_and_sigma(unit_type):
    res = scalar_threshold_implicit(unit_type, 10.0)
    assert res.tau == 2
    assert abs(implicit_equation(2, res.eta, 1.0, 1.0, 10.0)) < 1e-8
    assert 0.0 <= res.eta < 1.0


def test_implicit_requires_scalar():
    t = AgentType(A=np.eye(2), B=np.eye(2), Q=np.eye(2), R=np.eye(2), K_W=np.eye(2), nu0=np.zeros(2),
                  Sigma_x=np.eye(2))
    with pytest.raises(DomainError):
        scalar_threshold_implicit(t, 1.0)


def test_sigma_consistent_with_oracle():
    for a, k, lam in [(0.5, 1.0, 3.0), (1.2, 0.3, 20.0), (0.9, 2.0, 0.7), (1.0, 4.0, 50.0)]:
        t = scalar_type(a, k)
        assert average_cost_threshold(t, lam).sigma_star == pytest.approx(
            cycle_average_oracle(t, lam).sigma_star, rel=1e-2)


def test_matrix_agent_matches_oracle():
    A = np.array([[0.9, 0.2], [0.0, 0.7]])
    t = AgentType(A=A, B=np.eye(2), Q=np.eye(2), R=np.eye(2), K_W=np.diag([1.0, 0.5]), nu0=np.zeros(2),
                  Sigma_x=np.eye(2))
    for lam in (0.5, 5.0, 40.0):
        assert average_cost_threshold(t, lam).tau == cycle_average_oracle(t, lam).tau


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.05, 5.0), st.floats(0.0, 100.0))
def test_methods_agree_property(a, k, lam):
    t = scalar_type(a, k)
    tau = cycle_average_oracle(t, lam).tau
    assert average_cost_threshold(t, lam).tau == tau
    assert scalar_threshold_implicit(t, lam).tau == tau
