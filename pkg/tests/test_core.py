import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rjmdp.core import NoiseStep, PolicyParams, recompute_suffix, rollout_from_noise, \
    sample_noise, truncate
from rjmdp.environments import GaussianGoal, RepellerSpec, make_linear_gaussian, make_repellers
from rjmdp.exceptions import ConfigurationError

from conftest import lg_spec


def steps(*psis):
    return [NoiseStep([p]) for p in psis]


@pytest.mark.parametrize("compiled", [True, False])
def test_zero_policy_holds_state(compiled):
    env = make_linear_gaussian(lg_spec(Sigma=0.3), compiled=compiled)
    traj = rollout_from_noise(env, (0.0, 0.0), steps(1.0, 0.0, 0.0))
    assert traj.states.ravel().tolist() == [1.0, 1.0, 1.0]
    assert traj.actions.ravel().tolist() == [0.0, 0.0, 0.0]
    assert traj.k == 2


@pytest.mark.parametrize("compiled", [True, False])
def test_cancelling_policy_zeroes_state(compiled):
    env = make_linear_gaussian(lg_spec(), compiled=compiled)
    traj = rollout_from_noise(env, (-1.0, 0.0), steps(1.0, 0.0))
    assert traj.states.ravel().tolist() == [1.0, 0.0]
    assert traj.actions.ravel().tolist() == [-1.0, 0.0]


def _hand_repeller(theta, x0, psis, dt, g, c, clamp, n_rep):
    px, py, vx, vy = x0
    out = [(px, py, vx, vy)]
    for psi in psis:
        fx = fy = 0.0
        for i in range(n_rep):
            dx, dy = px - theta[2 * i], py - theta[2 * i + 1]
            d = max(math.hypot(dx, dy), clamp)
            fx += theta[2 * n_rep + i] * dx / d**3
            fy += theta[2 * n_rep + i] * dy / d**3
        vx = vx + dt * (fx + g[0] - c * vx) + psi[0]
        vy = vy + dt * (fy + g[1] - c * vy) + psi[1]
        px, py = px + dt * vx, py + dt * vy
        out.append((px, py, vx, vy))
    return np.array(out)


@pytest.mark.parametrize("compiled", [True, False])
def test_repeller_five_steps_match_hand_simulation(compiled):
    spec = RepellerSpec(friction=0.3, dt=0.05)
    env = make_repellers(spec, compiled=compiled)
    theta = np.array([0.4, 3.1, -0.7, 2.2, 1.5, 2.5])
    x0 = np.array([0.1, 4.7, 0.0, 0.0])
    psis = np.array([[0.01, -0.02], [0.0, 0.03], [-0.05, 0.01], [0.02, 0.02], [0.0, -0.01]])
    traj = rollout_from_noise(env, theta, [NoiseStep(x0)] + [NoiseStep(p) for p in psis])
    expect = _hand_repeller(theta, x0, psis, 0.05, (0.0, -9.8), 0.3, 1e-3, 2)
    np.testing.assert_allclose(traj.states, expect, rtol=0, atol=1e-12)


def test_compiled_and_python_paths_agree(rng):
    for make, spec, theta in [
        (make_linear_gaussian, lg_spec(Sigma=0.2), (-0.4, 0.7)),
        (make_repellers, RepellerSpec(), (0.3, 2.0, -0.5, 1.0, 2.0, 1.0)),
        (make_repellers, RepellerSpec(reward=GaussianGoal((1.0, 0.5))), (0.3, 2.0, -0.5, 1.0, 2.0, 1.0)),
    ]:
        fast, slow = make(spec, compiled=True), make(spec, compiled=False)
        noise = sample_noise(slow, rng, 40)
        a, b = rollout_from_noise(fast, theta, noise), rollout_from_noise(slow, theta, noise)
        np.testing.assert_allclose(a.states, b.states, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(a.rewards, b.rewards, rtol=1e-12, atol=1e-300)


def test_rollout_is_deterministic(lg_env, rng):
    noise = sample_noise(lg_env, rng, 25)
    a = rollout_from_noise(lg_env, (0.3, -0.2), noise)
    b = rollout_from_noise(lg_env, (0.3, -0.2), noise)
    assert a.identical_to(b)


def test_trajectory_bookkeeping(lg_env, rng):
    traj = rollout_from_noise(lg_env, (0.1, 0.2), sample_noise(lg_env, rng, 7))
    assert len(traj.noise) == len(traj.states) == len(traj.rewards) == traj.k + 1 == 8
    assert traj.reward_sum == math.fsum(traj.rewards.tolist())
    assert np.all(traj.rewards > 0)


def test_dimension_mismatch_is_configuration_error(lg_env):
    with pytest.raises(ConfigurationError):
        rollout_from_noise(lg_env, (0.0, 0.0), [NoiseStep([1.0, 2.0])])
    with pytest.raises(ConfigurationError):
        rollout_from_noise(lg_env, (0.0, 0.0), [NoiseStep([1.0], phi=[0.0, 0.0])])
    with pytest.raises(ConfigurationError):
        rollout_from_noise(lg_env, (0.0, 0.0), [])


def test_full_recompute_equals_rollout(lg_env, rng):
    traj = rollout_from_noise(lg_env, (0.2, 0.1), sample_noise(lg_env, rng, 6))
    fresh = sample_noise(lg_env, rng, 6)
    assert recompute_suffix(lg_env, (0.2, 0.1), traj, 0, fresh).identical_to(
        rollout_from_noise(lg_env, (0.2, 0.1), fresh))


def test_birth_extension_keeps_prefix(lg_env, rng):
    theta = (0.2, 0.1)
    traj = rollout_from_noise(lg_env, theta, sample_noise(lg_env, rng, 6))
    grown = recompute_suffix(lg_env, theta, traj, traj.k + 1, [NoiseStep([0.05])])
    assert grown.k == traj.k + 1
    assert np.array_equal(grown.states[: traj.k + 1], traj.states)
    assert np.array_equal(grown.rewards[: traj.k + 1], traj.rewards)


def test_recompute_out_of_range(lg_env, rng):
    traj = rollout_from_noise(lg_env, (0.0, 0.0), sample_noise(lg_env, rng, 3))
    with pytest.raises(IndexError):
        recompute_suffix(lg_env, (0.0, 0.0), traj, 5, [NoiseStep([0.0])])
    with pytest.raises(IndexError):
        recompute_suffix(lg_env, (0.0, 0.0), traj, -1, [NoiseStep([0.0])])


def test_truncate(lg_env, rng):
    traj = rollout_from_noise(lg_env, (0.0, 0.3), sample_noise(lg_env, rng, 3))
    short = truncate(traj)
    assert short.k == 2 and np.array_equal(short.states, traj.states[:3])
    assert short.identical_to(rollout_from_noise(lg_env, (0.0, 0.3), traj.noise[:3]))
    with pytest.raises(ValueError):
        truncate(truncate(truncate(short)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 30), data=st.data(),
       compiled=st.booleans(), repellers=st.booleans())
def test_suffix_recompute_matches_spliced_rollout(seed, k, data, compiled, repellers):
    rng = np.random.default_rng(seed)
    if repellers:
        env = make_repellers(RepellerSpec(), compiled=compiled)
    else:
        env = make_linear_gaussian(lg_spec(Sigma=0.2), compiled=compiled)
    theta = env.sample_theta(rng)
    traj = rollout_from_noise(env, theta, sample_noise(env, rng, k))
    start = data.draw(st.integers(0, k + 1), label="start")
    length = data.draw(st.integers(1, 6), label="length")
    # only index 0 holds an initial state
    block = tuple(NoiseStep(env.initial_sampler(rng) if start + i == 0
                            else env.transition_noise_sampler(rng)) for i in range(length))
    got = recompute_suffix(env, theta, traj, start, block)
    spliced = traj.noise[:start] + block + traj.noise[start + length:]
    want = rollout_from_noise(env, theta, spliced)
    assert got.k == want.k
    np.testing.assert_allclose(got.states, want.states, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(got.rewards, want.rewards, rtol=1e-12, atol=0)
    assert np.array_equal(got.states[:start], traj.states[:start])
    assert np.all(got.rewards > 0)


def test_policy_params_blocks():
    p = PolicyParams([1.0, 2.0, 3.0], ((0, 2), (2, 3)))
    assert np.array_equal(np.asarray(p), [1.0, 2.0, 3.0])
    for bad in (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 2),)):
        with pytest.raises(ConfigurationError):
            PolicyParams([1.0, 2.0, 3.0], bad)
