import numpy as np

from test_simulation import full_observation_run
from waoimf.experiments import (consensus_type, experiment_asymptotic, experiment_cost_vs_alpha,
                                experiment_tau_vs_rd, fig4_population, loglog_slope, median_by,
                                weighted_population)
from waoimf.meanfield import mf_fixed_point
from waoimf.scheduler import update_rate_sum
from waoimf.simulation import Trajectory, consensus_cost


def test_tau_vs_rd_properties():
    pop = fig4_population()
    rows = experiment_tau_vs_rd(pop, range(1, 7))
    by_rd = {}
    for rd, i, tl, tu in rows:
        by_rd.setdefault(rd, []).append((tl, tu))
    assert all(tl == 0 for tl, _ in by_rd[6])
    for rd, taus in by_rd.items():
        tl = [t[0] for t in taus]
        tu = [t[1] for t in taus]
        assert update_rate_sum(tu) <= rd + 1e-12 <= update_rate_sum(tl) + 2e-12
    for i in range(6):
        seq = [by_rd[rd][i][0] for rd in sorted(by_rd)]
        assert all(a >= b for a, b in zip(seq, seq[1:]))


def test_asymptotic_rows():
    rows, per_run = experiment_asymptotic(0.6, [10, 40], T=300, replications=2, seed=1)
    assert [r[0] for r in rows] == [10, 40]
    assert all(hard >= rel for _, _, rel, hard in per_run)
    assert all(r[3] >= 0 for r in rows)


def test_full_bandwidth_matches_always_transmit():
    t = consensus_type(nu0=0.3)
    rows = experiment_cost_vs_alpha(t, [1.0], runs=2, N=20, T=120, seed=5)
    pop = weighted_population([t], 20)
    mf = mf_fixed_point(pop)
    for alpha, run, cost in rows:
        xs, us, _ = full_observation_run(pop, mf, 120, seed=5, run=run)
        traj = Trajectory(x=xs[:, :, None], z=xs[:, :, None], u=us[:, :, None], delta=None, zeta=None,
                          Q=np.ones((20, 1, 1)), R=np.ones((20, 1, 1)))
        assert np.isclose(cost, consensus_cost(traj, burn_in=12).mean(), rtol=1e-12)


def test_helpers():
    assert np.isclose(loglog_slope([1, 10, 100], [5, 0.5, 0.05]), -1.0)
    assert median_by([(1, 0, 3.0), (1, 1, 1.0), (2, 0, 5.0)]) == {1: 2.0, 2: 5.0}
