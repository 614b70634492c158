import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waoimf.core import (AgentRuntimeState, AgentType, PopulationSpec, build_population, quota_counts,
                         sample_noise, scalar_type, step_plant)
from waoimf.errors import ConfigError
from waoimf.rng import stream


def brute_force_quota(weights, N):
    """Count vector minimizing the largest deviation |c/N - w|, lowest index first on ties."""
    best, best_err = None, np.inf
    k = len(weights)
    for head in itertools.product(range(N + 1), repeat=k - 1):
        if sum(head) > N:
            continue
        c = np.array(head + (N - sum(head),))
        err = np.max(np.abs(c / N - weights))
        if err < best_err - 1e-15:
            best, best_err = c, err
    return best


def test_single_type_population():
    pop = build_population(PopulationSpec((scalar_type(0.5, 1.0),), (1.0,), 7))
    assert pop.N == 7
    assert np.all(pop.assignment == 0)


def test_equal_split():
    t = (scalar_type(0.5, 1.0, id="a"), scalar_type(0.9, 2.0, id="b"))
    pop = build_population(PopulationSpec(t, (0.5, 0.5), 6))
    assert pop.counts.tolist() == [3, 3]


def test_quota_matches_enumeration():
    w = np.array([0.3, 0.7])
    assert quota_counts(w, 10).tolist() == [3, 7]
    assert quota_counts(w, 10).tolist() == brute_force_quota(w, 10).tolist()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=5), st.integers(1, 300))
def test_quota_error_bounded(raw, N):
    w = np.array(raw, float) / sum(raw)
    c = quota_counts(w, N)
    assert c.sum() == N
    assert np.all(np.abs(c / N - w) <= 1.0 / N + 1e-12)


def test_population_is_deterministic():
    t = (scalar_type(0.5, 1.0), scalar_type(0.9, 2.0))
    a = build_population(PopulationSpec(t, (0.25, 0.75), 13))
    b = build_population(PopulationSpec(t, (0.25, 0.75), 13))
    assert np.array_equal(a.assignment, b.assignment)


def test_validation_errors():
    with pytest.raises(ConfigError):
        AgentType(A=np.eye(2), B=np.ones((3, 1)), Q=np.eye(2), R=1.0, K_W=np.eye(2), nu0=[0, 0], Sigma_x=np.eye(2))
    with pytest.raises(ConfigError):
        scalar_type(0.5, -1.0)
    with pytest.raises(ConfigError):
        AgentType(A=np.eye(2), B=np.ones((2, 1)), Q=np.eye(2), R=1.0,
                  K_W=np.array([[1.0, 2.0], [2.0, 1.0]]), nu0=[0, 0], Sigma_x=np.eye(2))
    with pytest.raises(ConfigError):
        build_population(PopulationSpec((scalar_type(0.5, 1.0),), (0.9,), 5))
    with pytest.raises(ConfigError):
        build_population(PopulationSpec((scalar_type(0.5, 1.0),), (1.0,), 0))


def test_step_plant_examples():
    t = scalar_type(2.0, 1.0)
    s = AgentRuntimeState(x=np.array([0.0]), z=np.array([0.0]))
    assert step_plant(s, t, [0.0], [0.0]).x.tolist() == [0.0]
    s = AgentRuntimeState(x=np.array([1.0]), z=np.array([0.0]))
    assert step_plant(s, t, [0.5], [0.25]).x.tolist() == [2.75]
    with pytest.raises(ValueError):
        step_plant(s, t, [0.0, 1.0], [0.0])


def test_step_plant_linear(rng):
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 2))
    t = AgentType(A=A, B=B, Q=np.eye(3), R=np.eye(2), K_W=np.eye(3), nu0=np.zeros(3), Sigma_x=np.eye(3))
    for _ in range(20):
        x1, x2, w1, w2 = rng.normal(size=(4, 3))
        u1, u2 = rng.normal(size=(2, 2))
        a, b = rng.normal(size=2)
        lhs = step_plant(AgentRuntimeState(a * x1 + b * x2, np.zeros(3)), t, a * u1 + b * u2, a * w1 + b * w2).x
        rhs = (a * step_plant(AgentRuntimeState(x1, np.zeros(3)), t, u1, w1).x
               + b * step_plant(AgentRuntimeState(x2, np.zeros(3)), t, u2, w2).x)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_noise_covariance():
    K = np.array([[2.0, 0.6], [0.6, 1.0]])
    t = AgentType(A=np.eye(2), B=np.eye(2), Q=np.eye(2), R=np.eye(2), K_W=K, nu0=np.zeros(2), Sigma_x=np.eye(2))
    n = 1_000_000
    w = sample_noise(t, stream(1, 0, "noise"), n)
    C = w.T @ w / n
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K * K) / n)
    assert np.all(np.abs(C - K) <= 5 * se)


def test_rng_streams():
    a = stream(5, 0, "noise").random(1000)
    assert np.array_equal(a, stream(5, 0, "noise").random(1000))
    assert not np.array_equal(a, stream(5, 1, "noise").random(1000))
    b = stream(5, 0, "init").random(1000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 5 / np.sqrt(1000)
    with pytest.raises(ValueError):
        stream(5, 0, "nonsense")
