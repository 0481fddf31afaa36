import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mdppo.approximator import NetSpec, forward_value, init_params
from mdppo.environment import FELL_OFF, HIT_TARGET
from mdppo.errors import ConfigError
from mdppo.estimation import (
    EstimationConfig,
    ProcessedBatch,
    gae,
    normalize_advantages,
    process_trajectory,
    td_errors,
    value_targets,
)

from helpers import make_trajectory


# direct-sum oracles, written independently of the backward recursions


def delta_oracle(r, v, gamma):
    return [r[t] + gamma * v[t + 1] - v[t] for t in range(len(r))]


def gae_oracle(r, v, gamma, lam):
    d = delta_oracle(r, v, gamma)
    n = len(r)
    return [sum((gamma * lam) ** k * d[t + k] for k in range(n - t)) for t in range(n)]


def target_oracle(r, boot, gamma):
    n = len(r)
    return [sum(gamma ** (k - t) * r[k] for k in range(t, n)) + gamma ** (n - t) * boot for t in range(n)]


def test_td_error_single_step():
    assert td_errors([1.0], [1.0, 2.0], 0.9)[0] == pytest.approx(1.8, abs=1e-15)


def test_td_errors_zero_for_zero_rewards_and_values():
    np.testing.assert_array_equal(td_errors(np.zeros(5), np.zeros(6), 0.99), np.zeros(5))


def test_gae_three_step_example():
    adv = gae([1.0, 0.0, 2.0], [0.0, 0.0, 0.0, 0.0], 0.5, 0.5)
    assert adv[0] == pytest.approx(1.125, abs=1e-15)
    np.testing.assert_allclose(adv, gae_oracle([1, 0, 2], [0, 0, 0, 0], 0.5, 0.5), atol=1e-15)


def test_value_target_example():
    assert value_targets([1.0, 1.0], 4.0, 0.5)[0] == pytest.approx(2.5, abs=1e-15)


def test_length_mismatch_is_an_error():
    with pytest.raises(ValueError):
        td_errors([1.0, 2.0], [0.0, 0.0], 0.9)
    with pytest.raises(ValueError):
        gae([1.0], [0.0, 0.0, 0.0], 0.9, 0.9)


def test_config_ranges():
    with pytest.raises(ConfigError):
        EstimationConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        EstimationConfig(gamma=1.2)
    with pytest.raises(ConfigError):
        EstimationConfig(lam=-0.1)
    EstimationConfig(gamma=1.0, lam=1.0)


def _random_case(rng):
    n = int(rng.integers(1, 40))
    r = rng.normal(size=n)
    v = rng.normal(size=n + 1)
    if rng.random() < 0.5:
        v[-1] = 0.0  # terminal
    return r, v, float(rng.uniform(0.5, 1.0))


def test_reductions_on_random_trajectories():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        r, v, gamma = _random_case(rng)
        d = td_errors(r, v, gamma)
        np.testing.assert_array_equal(gae(r, v, gamma, 0.0), d)
        # lambda = 1: discounted reward-to-go plus discounted bootstrap minus V(s_t)
        lam1 = gae(r, v, gamma, 1.0)
        np.testing.assert_allclose(lam1, np.array(target_oracle(r, v[-1], gamma)) - v[:-1], rtol=0, atol=1e-10)
        np.testing.assert_allclose(lam1 + v[:-1], value_targets(r, v[-1], gamma), rtol=0, atol=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_recursions_match_direct_sums(seed):
    rng = np.random.default_rng(seed)
    r, v, gamma = _random_case(rng)
    lam = float(rng.random())
    np.testing.assert_allclose(td_errors(r, v, gamma), delta_oracle(r, v, gamma), rtol=0, atol=1e-12)
    np.testing.assert_allclose(gae(r, v, gamma, lam), gae_oracle(r, v, gamma, lam), rtol=0, atol=1e-10)
    np.testing.assert_allclose(value_targets(r, v[-1], gamma), target_oracle(r, v[-1], gamma),
                               rtol=0, atol=1e-10)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(
    r=arrays(np.float64, st.integers(1, 30), elements=finite),
    data=st.data(),
    gamma=st.floats(0.01, 1.0),
    lam=st.floats(0.0, 1.0),
)
def test_backward_recursion_identity(r, data, gamma, lam):
    v = data.draw(arrays(np.float64, len(r) + 1, elements=finite))
    adv = gae(r, v, gamma, lam)
    d = td_errors(r, v, gamma)
    assert adv[-1] == d[-1]
    for t in range(len(r) - 1):
        assert adv[t] == d[t] + gamma * lam * adv[t + 1]


def test_terminal_trajectory_does_not_bootstrap():
    rng = np.random.default_rng(1)
    tr = make_trajectory(rng, 4, kind=HIT_TARGET, rewards=[0, 0, 0, 1.0], bootstrap=50.0)
    out = process_trajectory(tr, None, EstimationConfig(gamma=0.5, lam=1.0))
    np.testing.assert_allclose(out.value_targets, [0.125, 0.25, 0.5, 1.0])


def test_stored_values_used_without_critic():
    rng = np.random.default_rng(2)
    tr = make_trajectory(rng, 5, kind="running", bootstrap=0.7)
    cfg = EstimationConfig(0.9, 0.8)
    out = process_trajectory(tr, None, cfg)
    vals = np.append(tr.behavior_value, 0.7)
    np.testing.assert_allclose(out.advantages, gae_oracle(tr.rewards, vals, 0.9, 0.8), atol=1e-12)
    np.testing.assert_array_equal(out.behavior_log_density, tr.behavior_log_density)
    np.testing.assert_array_equal(out.values, tr.behavior_value)


@pytest.mark.parametrize("kind", ["running", FELL_OFF])
def test_critic_reevaluates_states(kind):
    rng = np.random.default_rng(3)
    tr = make_trajectory(rng, 6, kind=kind)
    critic = init_params(NetSpec(4, (5,), head="scalar_value"), rng)
    critic.tensors["value.weight"] = rng.normal(size=(5, 1))
    out = process_trajectory(tr, critic, EstimationConfig(0.95, 0.9))
    v = forward_value(critic, tr.states)
    boot = 0.0 if kind == FELL_OFF else float(forward_value(critic, tr.next_states[-1]))
    np.testing.assert_allclose(out.values, v, atol=1e-12)
    np.testing.assert_allclose(out.value_targets, target_oracle(tr.rewards, boot, 0.95), atol=1e-10)
    np.testing.assert_allclose(out.advantages, gae_oracle(tr.rewards, np.append(v, boot), 0.95, 0.9),
                               atol=1e-10)


def test_batch_concat_and_take():
    rng = np.random.default_rng(4)
    cfg = EstimationConfig()
    a = process_trajectory(make_trajectory(rng, 3, policy_id=0), None, cfg)
    b = process_trajectory(make_trajectory(rng, 4, policy_id=1), None, cfg)
    c = ProcessedBatch.concat([a, b])
    assert len(c) == 7
    np.testing.assert_array_equal(c.policy_id, [0, 0, 0, 1, 1, 1, 1])
    np.testing.assert_array_equal(c.take(np.array([3, 0])).rewards, [b.rewards[0], a.rewards[0]])
    assert len(ProcessedBatch.concat([])) == 0


def test_normalized_advantages_are_standardized():
    adv = normalize_advantages(np.random.default_rng(5).normal(3.0, 7.0, size=500))
    assert abs(adv.mean()) < 1e-12
    assert adv.std() == pytest.approx(1.0, abs=1e-6)
