"""End-to-end acceptance checks, one test per criterion.

Each test records a ``CRITERION n: PASS/FAIL`` line that is printed in the
terminal summary. Criterion 9 is the rest of the suite and is summarised
there too. Run only these with ``pytest tests/test_acceptance.py -v``;
the full set takes roughly forty minutes on one core.
"""

import math

import numpy as np
import pytest
from scipy import stats

from rjmdp import PegasusPolicySearch, RJMCMCPolicySearch, StateSpacePolicySearch
from rjmdp.core import rollout_from_noise, sample_noise
from rjmdp.environments import GaussianBump, LinearGaussianSpec, bimodal_linear_gaussian, \
    make_environment, make_linear_gaussian, repellers_with_gaussian_goal, repellers_with_zones
from rjmdp.evaluation import crn_variance_experiment, default_horizon, \
    estimate_expected_reward, f_test_less
from rjmdp.sampler import AnnealSchedule, ChainState, SamplerConfig, birth_acceptance, \
    birth_move, death_acceptance, death_move, policy_mh_move, run_chain, update_move
from rjmdp.target import TargetKind, betas, num_trajectories

from conftest import constant_reward_env, record_criterion, thin_by_iat

pytestmark = pytest.mark.acceptance

RUNS = 10


# -- 1 ----------------------------------------------------------------------


def _brute_force_surface(grid, n, gamma, horizon, seed):
    """Cell-averaged J on a uniform grid over [-1, 1]^2 by direct vectorised simulation."""
    rng = np.random.default_rng(seed)
    edges = np.linspace(-1, 1, grid + 1)
    disc = gamma ** np.arange(horizon + 1)
    J = np.empty((grid, grid))
    for i in range(grid):
        for j in range(grid):
            K = rng.uniform(edges[i], edges[i + 1], n)
            m = rng.uniform(edges[j], edges[j + 1], n)
            x = rng.standard_normal(n)
            total = np.zeros(n)
            for t in range(horizon + 1):
                total += disc[t] * np.exp(-((x - 1.0) ** 2) / (2 * 0.25))
                x = x + K * x + m + math.sqrt(0.1) * rng.standard_normal(n)
            J[i, j] = total.mean()
    return J


def test_criterion_1_marginal_matches_brute_force():
    gamma, grid = 0.5, 20
    P = _brute_force_surface(grid, 100_000, gamma, 40, seed=0)
    P /= P.sum()
    env = make_linear_gaussian(LinearGaussianSpec(
        A=1.0, B=1.0, Sigma=0.1, init_mean=0.0, init_cov=1.0,
        bumps=(GaussianBump(1.0, (1.0,), 0.5),), theta_low=(-1, -1), theta_high=(1, 1)))
    log = run_chain(env, SamplerConfig(gamma=gamma, n_iter=200_000, seed=3, theta_scales=(0.5,)))
    Q, _, _ = np.histogram2d(log.theta[1:, 0], log.theta[1:, 1], bins=grid,
                             range=[[-1, 1], [-1, 1]])
    tv = 0.5 * np.abs(P - Q / Q.sum()).sum()
    assert record_criterion(1, tv <= 0.10, f"TV distance {tv:.4f} (threshold 0.10)")


# -- 2 ----------------------------------------------------------------------


def _length_pvalue(k, probs):
    obs = np.append(np.bincount(np.minimum(k, len(probs)), minlength=len(probs) + 1)[:-1],
                    np.sum(k >= len(probs)))
    expected = np.append(probs, 1.0 - probs.sum()) * len(k)
    return stats.chisquare(obs, expected).pvalue


def test_criterion_2_geometric_lengths():
    env = constant_reward_env(1.0)
    burn, n_post = 5_000, 100_000
    details, ok = [], True
    for gamma in (0.5, 0.9):
        kk = np.arange(int(math.ceil(math.log(0.01) / math.log(gamma))))
        geometric = (1 - gamma) * gamma**kk
        cfg = SamplerConfig(gamma=gamma, n_iter=burn + n_post, seed=21)
        k = thin_by_iat(run_chain(env, cfg, kind=TargetKind("last_step")).k_first, burn)
        p_last = _length_pvalue(k, geometric)
        # a constant summed reward weights length k by k + 1
        k = thin_by_iat(run_chain(env, cfg).k_first, burn)
        p_sum = _length_pvalue(k, geometric * (kk + 1) * (1 - gamma))
        ok &= p_last > 0.01 and p_sum > 0.01
        details.append(f"gamma={gamma}: last-step vs geometric p={p_last:.3f}, "
                       f"summed vs (k+1)-weighted p={p_sum:.3f}")
    assert record_criterion(2, ok, "; ".join(details))


# -- 3 ----------------------------------------------------------------------


def test_criterion_3_reversibility_identities():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        gamma, b = rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)
        k, beta = int(rng.integers(0, 60)), rng.uniform(0.0, 1.0)
        ratio = math.exp(rng.uniform(-20, 20))
        prod = birth_acceptance(gamma, k, b, ratio, beta) * \
            death_acceptance(gamma, k + 1, b, 1.0 / ratio, beta)
        worst = max(worst, abs(prod - 1.0))

    env = make_linear_gaussian(LinearGaussianSpec(A=1.0, B=1.0, Sigma=0.1, init_mean=0.0,
                                                  init_cov=1.0,
                                                  bumps=(GaussianBump(1.0, (1.0,), 0.5),)))
    cfg = SamplerConfig(gamma=0.9, theta_scales=(1.5,))
    srng = np.random.default_rng(1)
    trajs = [rollout_from_noise(env, (0.2, -0.5), sample_noise(env, srng, k)) for k in (3, 0, 6)]
    state = ChainState(np.array([0.2, -0.5]), trajs, 2.5, srng)
    rejected = identical = 0
    for i in range(5000):
        before = (state.theta.copy(), list(state.trajs), state.nu)
        j, move = i % 3, i % 4
        if move == 1 and state.trajs[j].k == 0:
            continue
        ok = (birth_move, death_move, update_move)[move](env, state, j, cfg) if move < 3 \
            else policy_mh_move(env, state, cfg)
        if not ok:
            rejected += 1
            identical += (np.array_equal(before[0], state.theta) and before[2] == state.nu
                          and all(a.identical_to(b) for a, b in zip(before[1], state.trajs)))

    bad_beta = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        n_iter = int(r.integers(50, 300))
        cfg = SamplerConfig(n_iter=n_iter, nu_max=int(r.integers(1, 8)),
                            n_plateau=int(r.integers(0, n_iter)), seed=seed,
                            schedule=AnnealSchedule(ramp_fraction=float(r.uniform(0.05, 1.0))))

        def check(s):
            nonlocal bad_beta
            bad_beta += (len(s.trajs) != num_trajectories(s.nu)
                         or abs(math.fsum(betas(s.nu)) - s.nu) > 1e-12)

        run_chain(env, cfg, callback=check)
    ok = worst < 1e-12 and rejected > 0 and identical == rejected and bad_beta == 0
    assert record_criterion(3, ok, f"max |a_b*a_d - 1| = {worst:.1e}; {identical}/{rejected} "
                                   f"rejected moves bit-identical; {bad_beta} beta violations")


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_annealing_and_clustering():
    env = make_environment(bimodal_linear_gaussian())
    gamma = 0.9
    H = default_horizon(gamma)
    Ks, ms = np.linspace(-2, 0, 41), np.linspace(-4, 4, 81)
    grid = np.array([[estimate_expected_reward(env, (K, m), 50, H, gamma,
                                               np.random.default_rng(1))[0] for m in ms]
                     for K in Ks])
    i, j = np.unravel_index(grid.argmax(), grid.shape)
    j_star = estimate_expected_reward(env, (Ks[i], ms[j]), 2000, H, gamma,
                                      np.random.default_rng(2))[0]

    def ratio(est):
        return est.expected_reward(num_rollouts=1000, random_state=5)[0] / j_star

    common = dict(gamma=gamma, n_iter=10_000, theta_scales=(0.5, 2.0))
    plain, annealed = [], []
    for seed in range(RUNS):
        plain.append(ratio(RJMCMCPolicySearch(nu_max=1, n_plateau=5000, estimate="mean",
                                              random_state=seed, **common).fit(env)))
        annealed.append(ratio(RJMCMCPolicySearch(nu_max=20, n_plateau=3000, estimate="cluster",
                                                 random_state=seed, **common).fit(env)))
    good = sum(r >= 0.95 for r in annealed)
    poor = sum(r < 0.80 for r in plain)
    assert record_criterion(
        4, good >= 8 and poor >= 8,
        f"grid optimum J*={j_star:.3f} at ({Ks[i]:.2f}, {ms[j]:.2f}); annealed+cluster >= 95% "
        f"in {good}/{RUNS}; plain mean < 80% in {poor}/{RUNS}")


# -- 5 and 6 ------------------------------------------------------------------


ZONE_SETTINGS = dict(gamma=0.95, n_iter=10_000, nu_max=10, n_plateau=3000)


@pytest.fixture(scope="module")
def zone_runs():
    env = make_environment(repellers_with_zones())
    cache = {}

    def get(name):
        if name not in cache:
            out = []
            for seed in range(RUNS):
                if name == "state_space":
                    est = StateSpacePolicySearch(random_state=seed, **ZONE_SETTINGS)
                else:
                    est = RJMCMCPolicySearch(variant=name, random_state=seed, **ZONE_SETTINGS)
                est.fit(env)
                out.append((est.expected_reward(num_rollouts=300)[0], est.acceptance_rates_))
            cache[name] = out
        return cache[name]

    return get


def _mean_rate(runs, move):
    return float(np.nanmean([r[move] for _, r in runs]))


def test_criterion_5_summed_beats_last_step(zone_runs):
    summed, last = zone_runs("summed"), zone_runs("last_step")
    Js, Jl = np.mean([j for j, _ in summed]), np.mean([j for j, _ in last])
    rates = {m: (_mean_rate(summed, m), _mean_rate(last, m)) for m in ("birth", "death")}
    ok = Js > Jl and all(s > l for s, l in rates.values())
    assert record_criterion(
        5, ok, f"mean J summed {Js:.2f} vs last-step {Jl:.2f}; birth {rates['birth'][0]:.3f} vs "
               f"{rates['birth'][1]:.3f}; death {rates['death'][0]:.3f} vs {rates['death'][1]:.3f}")


def test_criterion_6_noise_space_beats_state_space(zone_runs):
    noise, state = zone_runs("summed"), zone_runs("state_space")
    Jn, Js = np.mean([j for j, _ in noise]), np.mean([j for j, _ in state])
    un, us = _mean_rate(noise, "update"), _mean_rate(state, "update")
    ok = un >= 2 * us and Jn > Js
    assert record_criterion(6, ok, f"update acceptance noise {un:.3f} vs state {us:.3f}; "
                                   f"mean J noise {Jn:.2f} vs state {Js:.2f}")


# -- 7 ----------------------------------------------------------------------


GOAL_SETTINGS = dict(gamma=0.95, n_iter=10_000, nu_max=10, n_plateau=3000)


def test_criterion_7_sampler_vs_pegasus():
    env = make_environment(repellers_with_gaussian_goal())
    sampler, pegasus, budgets = [], [], []
    for seed in range(RUNS):
        est = RJMCMCPolicySearch(random_state=seed, **GOAL_SETTINGS).fit(env)
        sampler.append(est.expected_reward(num_rollouts=300)[0])
        peg = PegasusPolicySearch(gamma=GOAL_SETTINGS["gamma"], n_iter=1_000_000,
                                  learn_rate=0.05, max_samples=est.samples_consumed_,
                                  random_state=seed).fit(env)
        pegasus.append(peg.expected_reward(num_rollouts=300)[0])
        budgets.append((est.samples_consumed_, peg.samples_consumed_))
    ms, mp = np.mean(sampler), np.mean(pegasus)
    ss, sp = np.std(sampler, ddof=1), np.std(pegasus, ddof=1)
    used = np.mean([p / s for s, p in budgets])
    assert record_criterion(
        7, ms >= mp and sp > ss,
        f"mean J sampler {ms:.3f} vs PEGASUS {mp:.3f}; sd sampler {ss:.3f} vs PEGASUS {sp:.3f}; "
        f"PEGASUS used {used:.0%} of the sampler's transition samples")


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_common_random_numbers():
    env = make_linear_gaussian(LinearGaussianSpec(A=1.0, B=1.0, Sigma=0.1, init_mean=0.0,
                                                  init_cov=1.0,
                                                  bumps=(GaussianBump(1.0, (1.0,), 0.5),)))
    vc, vi = crn_variance_experiment(env, (-0.5, 0.5), (0.02, 0.0), 200,
                                     default_horizon(0.9), 0.9, 0)
    p = f_test_less(vc, vi, 200, 200)
    assert record_criterion(8, vc < vi and p < 0.05,
                            f"var common {vc:.3e} vs independent {vi:.3e}; F-test p={p:.2e}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
