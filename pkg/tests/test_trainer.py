import json
from collections import Counter

import numpy as np
import pytest

import mdppo.trainer as trainer_mod
from mdppo.approximator import forward_value, load_checkpoint
from mdppo.config import RunConfig, TrainerConfig
from mdppo.errors import ConfigError, TrainingError
from mdppo.estimation import EstimationConfig
from mdppo.mixing import MixedBatch
from mdppo.trainer import (
    Trainer,
    build_learners,
    run,
    run_mdppo,
    run_mdpposc,
    run_ppo,
    summarize,
    td_filter,
    train_policy,
)

from helpers import ScriptedEnv, random_batch


def small(**over):
    base = {
        "trainer.n_policies": 2,
        "trainer.agents_per_policy": 2,
        "trainer.iterations": 3,
        "trainer.horizon": 20,
        "trainer.minibatch_size": 16,
        "trainer.epochs_per_iteration": 2,
        "trainer.hidden_layers": [8],
        "trainer.success_window": 5,
        "seed": 3,
    }
    base.update(over)
    return RunConfig().replace(**base)


def test_threshold_schedule():
    t = TrainerConfig(algorithm="mdpposc", td_threshold_initial=1.0, td_threshold_decay=0.5)
    assert [t.td_threshold(k) for k in range(3)] == [1.0, 0.5, 0.25]


def test_td_filter_keeps_large_absolute_errors():
    b = random_batch(np.random.default_rng(0), 3)
    b.td_errors = np.array([0.2, -0.9, 0.6])
    kept = td_filter(b, 0.5)
    np.testing.assert_array_equal(kept.td_errors, [-0.9, 0.6])
    assert len(td_filter(b, 0.0)) == 3


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainerConfig(algorithm="ppo", n_policies=2)
    with pytest.raises(ConfigError):
        TrainerConfig(algorithm="mdpposc", network_regime="shared")
    with pytest.raises(ConfigError):
        TrainerConfig(td_threshold_decay=0.0)
    with pytest.raises(ConfigError):
        small(**{"trainer.horizon": 0})
    with pytest.raises(ConfigError):
        RunConfig.from_flat({"trainer.nonsense": 1})
    with pytest.raises(ConfigError):
        run_ppo(small())
    with pytest.raises(ConfigError):
        run_mdpposc(small())
    with pytest.raises(ConfigError):
        run_mdppo(small(**{"trainer.algorithm": "mdpposc"}))


def test_config_round_trip(tmp_path):
    cfg = small(**{"loss.ratio_form": "subtraction", "env.variant": "roller-sparse",
                   "trainer.max_grad_norm": 0.5, "output_dir": "x"})
    assert RunConfig.from_flat(json.loads(cfg.dumps())) == cfg
    cfg.save(tmp_path / "c.json")
    assert RunConfig.load(tmp_path / "c.json") == cfg


def test_one_policy_mdppo_matches_standard_ppo(tmp_path):
    a = small(**{"trainer.algorithm": "mdppo", "trainer.n_policies": 1, "run_label": "same"})
    b = small(**{"trainer.algorithm": "ppo", "trainer.n_policies": 1, "run_label": "same"})
    run(a, output_dir=tmp_path / "a")
    run(b, output_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()


@pytest.mark.parametrize("algo,regime", [("mdppo", "separate"), ("mdppo", "shared"), ("mdpposc", "separate")])
def test_same_config_gives_identical_metrics(tmp_path, algo, regime):
    cfg = small(**{"trainer.algorithm": algo, "trainer.network_regime": regime})
    run(cfg, output_dir=tmp_path / "a")
    run(cfg, output_dir=tmp_path / "b")
    a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert len(a.splitlines()) == 3 * 2


def test_zero_iterations_checkpoint_equals_initialization(tmp_path):
    cfg = small(**{"trainer.iterations": 0})
    run(cfg, output_dir=tmp_path)
    nets, meta = load_checkpoint(tmp_path / "checkpoints" / "final.json")
    learners, _, _ = build_learners(cfg)
    assert meta["iteration"] == 0
    for i, ln in enumerate(learners):
        for name, params in ((f"policy{i}", ln.policy), (f"critic{i}", ln.critic)):
            for k in params:
                np.testing.assert_array_equal(nets[name][0][k], params[k])
    assert (tmp_path / "metrics.jsonl").read_text() == ""


def test_run_artifacts_and_record_fields(tmp_path):
    cfg = small(**{"trainer.checkpoint_every": 2})
    res = run(cfg, output_dir=tmp_path)
    assert {p.name for p in tmp_path.iterdir()} >= {"config.json", "metrics.jsonl", "timing.jsonl",
                                                    "summary.json", "checkpoints"}
    assert (tmp_path / "checkpoints" / "iter_00002.json").exists()
    assert RunConfig.load(tmp_path / "config.json") == cfg
    recs = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [(r["iteration"], r["policy_id"]) for r in recs] == [(k, i) for k in range(3) for i in range(2)]
    for field in ("run_label", "mean_cumulative_reward", "success_rate", "surrogate_loss", "value_loss",
                  "entropy", "complete_count", "auxiliary_count"):
        assert field in recs[0]
    assert "wall_clock_s" not in recs[0]
    timing = [json.loads(line) for line in (tmp_path / "timing.jsonl").read_text().splitlines()]
    assert [t["iteration"] for t in timing] == [0, 1, 2]
    assert json.loads((tmp_path / "summary.json").read_text()) == summarize(res)


def _capture_mixed(monkeypatch):
    seen = []
    real = trainer_mod.train_policy

    def spy(learner, mixed, cfg, iteration):
        seen.append(mixed)
        return real(learner, mixed, cfg, iteration)

    monkeypatch.setattr(trainer_mod, "train_policy", spy)
    return seen


def test_manual_trace_two_policies_one_agent(monkeypatch):
    # each agent: a 3-step goal episode, then 2 steps of the next one
    cfg = small(**{"trainer.agents_per_policy": 1, "trainer.horizon": 5, "trainer.iterations": 1,
                   "estimation.gamma": 0.9, "estimation.lam": 0.8})
    tr = Trainer(cfg, env_factory=lambda: ScriptedEnv(3))
    snaps = tr.snapshots()
    seen = _capture_mixed(monkeypatch)
    records = tr.step()

    # complete: one goal trajectory per group.  Auxiliary: the two truncated
    # trajectories tie on return 3 and ceil(0.4 * 2) = 1, so group 0's wins.
    assert [(r["complete_count"], r["auxiliary_count"]) for r in records] == [(1, 1), (1, 0)]
    assert [(m.own_count, m.foreign_count) for m in seen] == [(5, 3), (5, 5)]

    g = 0.9
    goal_targets = [1 + g * 2 + g**2 * 3, 2 + g * 3, 3.0]
    for i, mixed in enumerate(seen):
        b = mixed.batch
        own, foreign = b.take(b.policy_id == i), b.take(b.policy_id != i)
        critic = snaps[i].critic
        assert set(foreign.policy_id.tolist()) == {1 - i}
        # own values were stored at collection time by policy i's critic,
        # foreign ones are re-scored by the same critic
        np.testing.assert_allclose(own.values, forward_value(critic, own.states), rtol=0, atol=1e-12)
        np.testing.assert_allclose(foreign.values, forward_value(critic, foreign.states), rtol=0, atol=1e-12)
        # the truncated trajectory bootstraps from the state at step 2 of episode two
        boot = float(forward_value(critic, np.array([2.0, 1.0, 0.0, 0.0])))
        truncated = [1 + g * 2 + g**2 * boot, 2 + g * boot]
        np.testing.assert_allclose(np.sort(own.value_targets), np.sort(goal_targets + truncated), atol=1e-12)
        expected_foreign = goal_targets if i == 0 else goal_targets + truncated
        np.testing.assert_allclose(np.sort(foreign.value_targets), np.sort(expected_foreign), atol=1e-12)


def test_epoch_accounting(monkeypatch):
    uses = Counter()
    real = trainer_mod._minibatches

    def spy(n, size, rng):
        for idx in real(n, size, rng):
            uses.update(idx.tolist())
            yield idx

    monkeypatch.setattr(trainer_mod, "_minibatches", spy)
    cfg = small(**{"trainer.epochs_per_iteration": 3, "trainer.minibatch_size": 7})
    learners, _, _ = build_learners(cfg)
    batch = random_batch(np.random.default_rng(0), 40)
    train_policy(learners[0], MixedBatch(batch, 40, 0, 0), cfg, 0)
    assert set(uses) == set(range(40))
    assert set(uses.values()) == {3}


def test_policy_updates_are_isolated(monkeypatch):
    cfg = small(**{"trainer.iterations": 1})
    baseline = Trainer(cfg)
    baseline.step()

    tr = Trainer(cfg)
    real = trainer_mod.train_policy

    def scramble_then_train(learner, mixed, c, iteration):
        if mixed.policy_id == 0:
            other = tr.learners[1]
            rng = np.random.default_rng(123)
            for p in (other.policy, other.critic):
                for k in p:
                    p.tensors[k] = rng.normal(size=p[k].shape)
        return real(learner, mixed, c, iteration)

    monkeypatch.setattr(trainer_mod, "train_policy", scramble_then_train)
    tr.step()
    for part in ("policy", "critic"):
        got, want = getattr(tr.learners[0], part), getattr(baseline.learners[0], part)
        for k in want:
            np.testing.assert_array_equal(got[k], want[k])
    assert not np.array_equal(tr.learners[1].policy["log_std"], baseline.learners[1].policy["log_std"])


def test_snapshots_are_frozen_copies():
    tr = Trainer(small())
    snaps = tr.snapshots()
    tr.learners[0].policy.tensors["log_std"][:] = 1.0
    assert not np.any(snaps[0].policy["log_std"] == 1.0)


@pytest.mark.parametrize("initial", [0.0, 0.05])
def test_central_critic_sees_transitions_above_threshold(monkeypatch, initial):
    cfg = small(**{"trainer.algorithm": "mdpposc", "trainer.iterations": 2,
                   "trainer.td_threshold_initial": initial, "trainer.td_threshold_decay": 0.5})
    collected, critic_sizes = [], []
    real_collect, real_critic = trainer_mod.collect_iteration, trainer_mod.train_critic

    def collect_spy(*a, **kw):
        res = real_collect(*a, **kw)
        collected.append(res)
        return res

    def critic_spy(critic, opt, data, c, rng, iteration):
        critic_sizes.append(len(data))
        return real_critic(critic, opt, data, c, rng, iteration)

    monkeypatch.setattr(trainer_mod, "collect_iteration", collect_spy)
    monkeypatch.setattr(trainer_mod, "train_critic", critic_spy)
    tr = Trainer(cfg)
    tr.step()
    tr.step()
    gamma = EstimationConfig().gamma
    for k, res in enumerate(collected):
        thr = initial * 0.5**k
        expected = 0
        for d in res.datasets:
            for traj in d:
                v = list(traj.behavior_value) + [traj.bootstrap_value]
                for t in range(len(traj)):
                    delta = traj.rewards[t] + gamma * v[t + 1] - v[t]
                    expected += thr <= 0 or abs(delta) > thr
        assert critic_sizes[k] == expected
    assert critic_sizes[0] > 0
    if initial == 0.0:
        assert critic_sizes[0] == collected[0].n_transitions


def test_central_critic_drives_every_policy():
    tr = Trainer(small(**{"trainer.algorithm": "mdpposc"}))
    assert all(ln.critic is None for ln in tr.learners)
    snaps = tr.snapshots()
    assert snaps[0].critic is snaps[1].critic


def test_non_finite_data_aborts_with_diagnostics(tmp_path):
    class Poisoned(ScriptedEnv):
        def step(self, action):
            res = super().step(action)
            res.observation[0] = np.nan
            return res

    cfg = small(**{"trainer.iterations": 2})
    with pytest.raises(TrainingError) as info:
        run(cfg, env_factory=lambda: Poisoned(4), output_dir=tmp_path)
    assert info.value.batch_id is not None
    assert info.value.state["iteration"] == 0
    failure = json.loads((tmp_path / "failure.json").read_text())
    assert "batch_id" in failure
    assert (tmp_path / "checkpoints" / "failure.json").exists()
    for line in (tmp_path / "metrics.jsonl").read_text().splitlines():
        json.loads(line)


def test_early_stop_ends_once_every_policy_succeeds():
    cfg = small(**{"trainer.iterations": 50, "trainer.early_stop": True, "trainer.success_window": 2,
                   "trainer.success_target": 0.5, "trainer.agents_per_policy": 1, "trainer.horizon": 10})
    res = run(cfg, env_factory=lambda: ScriptedEnv(3))
    # scripted episodes always end at the goal
    assert res.iterations_run == 1
    assert res.iterations_to_success == [0, 0]
    assert res.success_rates() == [1.0, 1.0]
