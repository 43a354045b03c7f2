import math

import numpy as np
import pytest
from scipy import stats

from bpre.envmodel import OffspringLaw, build_model, reference_model
from bpre.errors import BudgetExceeded, ModelError
from bpre.numerics import stream_generator
from bpre.oracle import exact_distribution, exact_survival_curve
from bpre.simulate import (BLOCK_SIZE, Exact, LogScale, SimPolicy,
                           aggregate_offspring, iter_blocks, raw_ensemble, simulate_block,
                           simulate_trajectory, step, survivor_ensemble)


def test_policy_validation():
    with pytest.raises(ModelError):
        SimPolicy(exact_cap=10**13)
    with pytest.raises(ModelError):
        SimPolicy(survival_margin=-1)


def test_step_dirac_and_absorbing():
    rng = stream_generator(0, 0)
    assert step(Exact(1), OffspringLaw.dirac(2), rng) == Exact(2)
    assert step(Exact(0), OffspringLaw.explicit([0.2, 0.3, 0.5]), rng) == Exact(0)
    assert step(Exact(0), OffspringLaw.poisson(3.0), rng) == Exact(0)


def test_step_switches_to_log_scale():
    rng = stream_generator(0, 1)
    s = step(Exact(10**11), OffspringLaw.dirac(20), rng)
    assert isinstance(s, LogScale) and s.logz == pytest.approx(math.log(2e12))
    s2 = step(s, OffspringLaw.poisson(2.0), rng)
    assert isinstance(s2, LogScale) and abs(s2.logz - s.logz - math.log(2)) < 1e-5


def test_five_individuals_match_convolution():
    pmf = np.array([0.2, 0.3, 0.5])
    conv = np.array([1.0])
    for _ in range(5):
        conv = np.convolve(conv, pmf)
    N = 10**6
    law = OffspringLaw.explicit(pmf)
    rng = stream_generator(3, 0)
    draws = aggregate_offspring(law, np.full(N, 5.0), rng, np.zeros(N, bool), 1e6).astype(int)
    assert draws.min() >= 0 and draws.max() <= 10
    emp = np.bincount(draws, minlength=11) / N
    se = np.sqrt(conv * (1 - conv) / N)
    assert np.all(np.abs(emp - conv) <= 4 * se + 1e-12)


@pytest.mark.parametrize("law", [OffspringLaw.poisson(1.7), OffspringLaw.geometric(0.4)])
def test_aggregate_moments(law):
    N = 200000
    rng = stream_generator(5, 0)
    x = aggregate_offspring(law, np.full(N, 7.0), rng, np.zeros(N, bool), 1e6)
    assert abs(x.mean() - 7 * law.mean) < 5 * math.sqrt(7 * law.variance / N)


def test_rounded_gaussian_regime_matches_poisson():
    mean = 1e6
    rng = stream_generator(9, 0)
    approx = np.ones(1, bool)
    x = aggregate_offspring(OffspringLaw.poisson(1.0), np.full(200000, mean), rng,
                            np.ones(200000, bool), 1e5)
    assert abs(x.mean() - mean) < 5 * math.sqrt(mean / x.size)
    assert abs(x.var() / mean - 1) < 0.02
    # Kolmogorov distance between the rounded Gaussian and Poisson(1e6)
    k = np.arange(mean - 6000, mean + 6001)
    gauss = stats.norm.cdf(k + 0.5, loc=mean, scale=math.sqrt(mean))
    pois = stats.poisson.cdf(k, mean)
    assert np.max(np.abs(gauss - pois)) < 1e-3
    del approx


def test_dirac2_trajectory(dirac2):
    t = simulate_trajectory(dirac2, 10, 0, 1)
    assert [s.count for s in t.states] == [2**k for k in range(11)]
    assert t.logz[10] == pytest.approx(10 * math.log(2), abs=1e-12)
    assert t.alive.all()


def test_dirac_mixture_log_z_equals_log_pi(d23_half):
    bp = simulate_block(d23_half, 40, 7, 0)
    assert np.array_equal(bp.logz, bp.logpi)


def test_trajectory_is_lane_of_ensemble(m0):
    sid = BLOCK_SIZE + 17
    t = simulate_trajectory(m0, 8, sid, 4)
    bp = simulate_block(m0, 8, 4, 1)
    assert np.array_equal(t.logz, bp.logz[:, 17])
    assert np.array_equal(t.logpi, bp.logpi[:, 17])
    again = simulate_trajectory(m0, 8, sid, 4)
    assert np.array_equal(t.logz, again.logz) and np.array_equal(t.env_record, again.env_record)


def test_log_pi_is_sum_of_log_means(m0):
    t = simulate_trajectory(m0, 12, 3, 2)
    means = np.array([l.mean for l in m0.laws])
    assert np.allclose(t.logpi, np.concatenate([[0.0], np.cumsum(np.log(means[t.env_record]))]),
                       rtol=0, atol=1e-13)


def test_alive_monotone(m0):
    bp = simulate_block(m0, 30, 3, 0)
    alive = bp.alive
    assert not np.any(alive[1:] & ~alive[:-1])
    assert np.all(np.isneginf(bp.logz[~alive]))


def test_empirical_law_z3_matches_oracle(m0):
    exact = exact_distribution(m0, 3).atoms
    N = 10**6
    counts = np.zeros(exact.size)
    for bp in iter_blocks(m0, 3, 21, stop_block=-(-N // BLOCK_SIZE)):
        lanes = min(BLOCK_SIZE, N - bp.block * BLOCK_SIZE)
        counts += np.bincount(bp.count[3, :lanes].astype(int), minlength=exact.size)
    emp = counts / N
    assert 0.5 * np.abs(emp - exact).sum() < 4 * math.sqrt(exact.size / N)


def test_mean_law(m0):
    N = 10**6
    for n in range(1, 6):
        ens = raw_ensemble(m0, n, N, 13)
        z = np.where(ens.alive, np.exp(np.where(ens.alive, ens.log_z, 0.0)), 0.0)
        ea = np.mean([l.mean for l in m0.laws])
        assert abs(z.mean() - ea**n) < 5 * z.std() / math.sqrt(N)


def test_survivor_ensemble_dirac(dirac2):
    ens = survivor_ensemble(dirac2, 5, 100, 0)
    assert ens.attempted == 100 and ens.size == 100
    assert ens.survived_to_n == ens.survived_to_n_m == 100


def test_survivor_ensemble_matches_survival_curve(m0):
    N = 10**4
    ens = survivor_ensemble(m0, 10, N, 8)
    p = exact_survival_curve(m0, 30).survival[29]
    frac = ens.survived_to_n_m / ens.attempted
    assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / ens.attempted)
    assert ens.survived_to_n_m <= ens.survived_to_n <= ens.attempted


def test_budget_exceeded():
    model = build_model({"kind": "finite_mixture", "weights": [1.0],
                         "laws": [{"kind": "explicit",
                                   "pmf": [0.9999] + [0.0] * 19999 + [1e-4]}]})
    with pytest.raises(BudgetExceeded):
        survivor_ensemble(model, 2, 10, 0)


def test_thread_independence(m0):
    a = survivor_ensemble(m0, 6, 20000, 5, threads=1)
    b = survivor_ensemble(m0, 6, 20000, 5, threads=4)
    assert np.array_equal(a.log_z, b.log_z) and np.array_equal(a.stream_ids, b.stream_ids)
    assert a.attempted == b.attempted


def test_large_population_reaches_log_scale():
    model = reference_model("loguniform")
    bp = simulate_block(model, 60, 1, 0, lanes=256)
    assert bp.logscale[-1].any()
    assert np.all(np.isfinite(bp.logz[-1][bp.logscale[-1]]))
    grown = bp.logscale[-1]
    # log Z tracks log Pi plus an O(1) martingale term
    assert np.all(np.abs(bp.logz[-1][grown] - bp.logpi[-1][grown]) < 15)


def test_ensemble_csv(tmp_path, m0):
    ens = survivor_ensemble(m0, 4, 50, 1, checkpoints=[2])
    ens.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "stream_id,alive_n,logZ_4,logZ_2" and len(lines) == 51
