"""Synchronous PPO / MDPPO / MDPPOSC training loops.

One iteration is: snapshot every policy -> collect N x M trajectories ->
select complete and auxiliary trajectories -> build one mixed, shuffled
batch per policy -> several epochs of minibatch updates per policy ->
(MDPPOSC only) update the single shared critic -> emit metrics.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .approximator import Adam, NetSpec, ParamSet, gradient, init_params, save_checkpoint
from .config import RunConfig
from .environment import ACTION_DIM, HIT_TARGET, OBS_DIM
from .errors import ConfigError, TrainingError
from .estimation import ProcessedBatch, normalize_advantages, process_trajectories
from .mixing import MixedBatch, build_mixed_batches, select
from .objectives import FILTERED, critic_loss_fn, policy_loss_fn, shared_loss_fn
from .rollout import AgentPool, PolicySnapshot, collect_iteration

log = logging.getLogger(__name__)

# seed-sequence tags for the trainer's private random streams
_INIT, _TRAIN, _MIX, _CRITIC = 7001, 7002, 7003, 7004


@dataclass
class Learner:
    """Parameters and optimiser state of one policy (and its own critic, if any)."""

    policy: ParamSet
    policy_opt: Adam
    critic: ParamSet | None = None
    critic_opt: Adam | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def shared(self) -> bool:
        return self.policy.spec.head == "shared"


@dataclass
class RunResult:
    config: RunConfig
    learners: list[Learner]
    critic: ParamSet | None
    metrics: list[dict]
    iterations_to_success: list[int | None]
    iterations_run: int

    def success_rates(self) -> list[float]:
        last = {}
        for rec in self.metrics:
            last[rec["policy_id"]] = rec["success_rate"]
        return [last.get(i, 0.0) for i in range(len(self.learners))]


def _net_spec(cfg: RunConfig, head: str) -> NetSpec:
    t = cfg.trainer
    return NetSpec(
        input_dim=OBS_DIM,
        hidden_layers=t.hidden_layers,
        activation=t.activation,
        head=head,
        action_dim=ACTION_DIM,
        log_std_init=t.log_std_init,
    )


def _adam(cfg: RunConfig) -> Adam:
    return Adam(lr=cfg.trainer.learning_rate, max_grad_norm=cfg.trainer.max_grad_norm)


def build_learners(cfg: RunConfig) -> tuple[list[Learner], ParamSet | None, Adam | None]:
    t = cfg.trainer
    learners = []
    for i in range(t.n_policies):
        init_rng = np.random.default_rng([cfg.seed, _INIT, i])
        train_rng = np.random.default_rng([cfg.seed, _TRAIN, i])
        if t.network_regime == "shared":
            params = init_params(_net_spec(cfg, "shared"), init_rng)
            learners.append(Learner(params, _adam(cfg), rng=train_rng))
        else:
            policy = init_params(_net_spec(cfg, "gaussian_policy"), init_rng)
            if t.algorithm == "mdpposc":
                learners.append(Learner(policy, _adam(cfg), rng=train_rng))
            else:
                critic = init_params(_net_spec(cfg, "scalar_value"), init_rng)
                learners.append(Learner(policy, _adam(cfg), critic, _adam(cfg), rng=train_rng))
    central, central_opt = None, None
    if t.algorithm == "mdpposc":
        central = init_params(_net_spec(cfg, "scalar_value"), np.random.default_rng([cfg.seed, _CRITIC]))
        central_opt = _adam(cfg)
    return learners, central, central_opt


def _minibatches(n: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, size):
        yield perm[start : start + size]


def _join(a: dict, b: dict, pa: str = "p.", pb: str = "v.") -> dict:
    out = {pa + k: v for k, v in a.items()}
    out.update({pb + k: v for k, v in b.items()})
    return out


def _split(d: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in d.items() if k.startswith(prefix)}


def train_policy(learner: Learner, mixed: MixedBatch, cfg: RunConfig, iteration: int) -> dict:
    """Epochs of shuffled minibatch updates for one policy; returns mean diagnostics."""
    t = cfg.trainer
    batch = mixed.batch
    if t.normalize_advantages:
        batch = ProcessedBatch(**{**batch.__dict__, "advantages": normalize_advantages(batch.advantages)})
    sums: dict[str, float] = {}
    n_updates = 0
    for epoch in range(t.epochs_per_iteration):
        for mb_idx, idx in enumerate(_minibatches(len(batch), t.minibatch_size, learner.rng)):
            mb = batch.take(idx)
            batch_id = (iteration, mixed.policy_id, epoch, mb_idx)
            stats: dict[str, float] = {}
            if learner.shared:
                _, grads = gradient(learner.policy, shared_loss_fn(learner.policy.spec, mb, cfg.loss, stats), batch_id)
                learner.policy_opt.step(learner.policy, grads, batch_id)
            elif learner.critic is not None:
                pfn = policy_loss_fn(learner.policy.spec, mb, cfg.loss, stats)
                vfn = critic_loss_fn(learner.critic.spec, mb, stats)
                both = _join(learner.policy.tensors, learner.critic.tensors)
                _, grads = gradient(
                    both, lambda p: pfn(_split(p, "p.")) + vfn(_split(p, "v.")), batch_id
                )
                learner.policy_opt.step(learner.policy, _split(grads, "p."), batch_id)
                learner.critic_opt.step(learner.critic, _split(grads, "v."), batch_id)
            else:
                _, grads = gradient(learner.policy, policy_loss_fn(learner.policy.spec, mb, cfg.loss, stats), batch_id)
                learner.policy_opt.step(learner.policy, grads, batch_id)
            for k, v in stats.items():
                sums[k] = sums.get(k, 0.0) + v
            n_updates += 1
    return {k: v / n_updates for k, v in sums.items()} if n_updates else {}


def train_critic(critic: ParamSet, opt: Adam, data: ProcessedBatch, cfg: RunConfig,
                 rng: np.random.Generator, iteration: int) -> float | None:
    t = cfg.trainer
    if len(data) == 0:
        log.warning("iteration %d: no transitions passed the td-error filter; critic step skipped", iteration)
        return None
    total, n = 0.0, 0
    for epoch in range(t.epochs_per_iteration):
        for mb_idx, idx in enumerate(_minibatches(len(data), t.minibatch_size, rng)):
            stats: dict[str, float] = {}
            batch_id = (iteration, "critic", epoch, mb_idx)
            _, grads = gradient(critic, critic_loss_fn(critic.spec, data.take(idx), stats), batch_id)
            opt.step(critic, grads, batch_id)
            total += stats["value_loss"]
            n += 1
    return total / n


def td_filter(data: ProcessedBatch, threshold: float) -> ProcessedBatch:
    """Keep transitions with |td-error| > threshold; a zero threshold keeps everything."""
    if threshold <= 0:
        return data
    return data.take(np.abs(data.td_errors) > threshold)


def _clean(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


class Trainer:
    """Runs one configured experiment.  Use :func:`run` unless stepping manually."""

    def __init__(self, cfg: RunConfig, env_factory: Callable | None = None):
        self.cfg = cfg
        t = cfg.trainer
        self.learners, self.critic, self.critic_opt = build_learners(cfg)
        self.critic_rng = np.random.default_rng([cfg.seed, _CRITIC, 1])
        self.pool = AgentPool(t.n_policies, t.agents_per_policy, cfg.seed, env_factory, cfg.env)
        self.windows = [deque(maxlen=t.success_window) for _ in range(t.n_policies)]
        self.first_success: list[int | None] = [None] * t.n_policies
        self.metrics: list[dict] = []
        self.iteration = 0
        sel = cfg.selection
        if cfg.loss.ratio_form == FILTERED and sel.ratio_filter_epsilon == 0:
            self.selection_cfg = type(sel)(**{**sel.__dict__, "ratio_filter_epsilon": cfg.loss.filter_eps})
        else:
            self.selection_cfg = sel

    # -- snapshots ----------------------------------------------------------------

    def snapshots(self) -> list[PolicySnapshot]:
        central = None if self.critic is None else self.critic.copy()
        snaps = []
        for ln in self.learners:
            policy = ln.policy.copy()
            if ln.shared:
                critic = policy
            elif central is not None:
                critic = central
            else:
                critic = ln.critic.copy()
            snaps.append(PolicySnapshot(policy, critic))
        return snaps

    # -- one iteration ----------------------------------------------------------------

    def step(self) -> list[dict]:
        cfg, t = self.cfg, self.cfg.trainer
        k = self.iteration
        t0 = time.perf_counter()
        snaps = self.snapshots()
        collected = collect_iteration(snaps, self.pool, t.horizon, t.workers)
        selection = select(collected.datasets, self.selection_cfg)
        central = self.critic is not None

        def estimate(i, trajs):
            # stored values came from this policy's own snapshot critic (or the shared critic)
            own = [tr for tr in trajs if central or tr.policy_id == i]
            other = [tr for tr in trajs if not (central or tr.policy_id == i)]
            parts = [process_trajectories(own, None, cfg.estimation)] if own else []
            if other:
                parts.append(process_trajectories(other, snaps[i].critic, cfg.estimation))
            return ProcessedBatch.concat(parts)

        mix_rngs = [np.random.default_rng([cfg.seed, _MIX, k, i]) for i in range(t.n_policies)]
        try:
            mixed = build_mixed_batches(collected.datasets, selection, self.selection_cfg, mix_rngs, estimate)
            stats = [train_policy(ln, mb, cfg, k) for ln, mb in zip(self.learners, mixed)]
            critic_loss = None
            threshold = None
            if central:
                threshold = t.td_threshold(k)
                everything = process_trajectories(
                    [tr for d in collected.datasets for tr in d], None, cfg.estimation
                )
                critic_data = td_filter(everything, threshold)
                critic_loss = train_critic(self.critic, self.critic_opt, critic_data, cfg, self.critic_rng, k)
        except TrainingError as exc:
            exc.state.update(iteration=k, seed=cfg.seed, run_label=cfg.run_label)
            raise

        returns: dict[int, list[float]] = {i: [] for i in range(t.n_policies)}
        for ep in collected.episodes:
            self.windows[ep.policy_id].append(ep.kind == HIT_TARGET)
            returns[ep.policy_id].append(ep.episode_return)

        records = []
        for i in range(t.n_policies):
            win = self.windows[i]
            rate = sum(win) / len(win) if win else 0.0
            full = len(win) == win.maxlen
            if self.first_success[i] is None and full and rate >= t.success_target:
                self.first_success[i] = k
            n_complete, n_aux = selection.counts(i)
            s = stats[i]
            records.append({
                "run_label": cfg.run_label,
                "iteration": k,
                "policy_id": i,
                "mean_cumulative_reward": _clean(np.mean(returns[i])) if returns[i] else None,
                "episodes": len(returns[i]),
                "success_rate": rate,
                "window_full": full,
                "surrogate_loss": _clean(s.get("surrogate")),
                "value_loss": _clean(critic_loss if central else s.get("value_loss")),
                "entropy": _clean(s.get("entropy")),
                "complete_count": n_complete,
                "auxiliary_count": n_aux,
                "own_count": mixed[i].own_count,
                "foreign_count": mixed[i].foreign_count,
                "td_threshold": threshold,
            })
        self.metrics.extend(records)
        self.iteration += 1
        self.last_wall_clock = time.perf_counter() - t0
        return records

    def done(self) -> bool:
        t = self.cfg.trainer
        if self.iteration >= t.iterations:
            return True
        return t.early_stop and all(f is not None for f in self.first_success)

    def checkpoint(self, path: str | Path) -> None:
        nets = {}
        for i, ln in enumerate(self.learners):
            nets[f"policy{i}"] = (ln.policy, ln.policy_opt.state)
            if ln.critic is not None:
                nets[f"critic{i}"] = (ln.critic, ln.critic_opt.state)
        if self.critic is not None:
            nets["critic"] = (self.critic, self.critic_opt.state)
        save_checkpoint(path, nets, {"iteration": self.iteration, "run_label": self.cfg.run_label,
                                     "seed": self.cfg.seed})

    def result(self) -> RunResult:
        return RunResult(self.cfg, self.learners, self.critic, self.metrics,
                         list(self.first_success), self.iteration)


def _run(cfg: RunConfig, env_factory: Callable | None = None, output_dir: str | Path | None = None) -> RunResult:
    out = Path(output_dir) if output_dir is not None else (Path(cfg.output_dir) if cfg.output_dir else None)
    trainer = Trainer(cfg, env_factory)
    metrics_fh = timing_fh = None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.json")
        metrics_fh = open(out / "metrics.jsonl", "w")
        timing_fh = open(out / "timing.jsonl", "w")
    try:
        while not trainer.done():
            try:
                records = trainer.step()
            except TrainingError as exc:
                if out is not None:
                    (out / "failure.json").write_text(json.dumps(
                        {"error": str(exc), "batch_id": repr(exc.batch_id), **{k: repr(v) for k, v in exc.state.items()}},
                        indent=2))
                    trainer.checkpoint(out / "checkpoints" / "failure.json")
                raise
            if metrics_fh is not None:
                for rec in records:
                    metrics_fh.write(json.dumps(rec) + "\n")
                metrics_fh.flush()
                timing_fh.write(json.dumps({"iteration": trainer.iteration - 1,
                                            "wall_clock_s": trainer.last_wall_clock}) + "\n")
                timing_fh.flush()
                every = cfg.trainer.checkpoint_every
                if every and trainer.iteration % every == 0:
                    trainer.checkpoint(out / "checkpoints" / f"iter_{trainer.iteration:05d}.json")
            log.info("iteration %d: success %s", trainer.iteration - 1,
                     [round(r["success_rate"], 3) for r in records])
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
            timing_fh.close()
    result = trainer.result()
    if out is not None:
        trainer.checkpoint(out / "checkpoints" / "final.json")
        (out / "summary.json").write_text(json.dumps(summarize(result), indent=2))
    return result


def summarize(result: RunResult) -> dict:
    """Per-policy final/best/worst success and iterations to the success target."""
    per_policy: dict[int, list[float]] = {}
    for rec in result.metrics:
        per_policy.setdefault(rec["policy_id"], []).append(rec["success_rate"])
    finals = [v[-1] for _, v in sorted(per_policy.items())]
    return {
        "run_label": result.config.run_label,
        "algorithm": result.config.trainer.algorithm,
        "seed": result.config.seed,
        "iterations_run": result.iterations_run,
        "final_success": finals,
        "best_final_success": max(finals) if finals else None,
        "worst_final_success": min(finals) if finals else None,
        "iterations_to_success": result.iterations_to_success,
    }


def run_mdppo(cfg: RunConfig, env_factory: Callable | None = None, output_dir=None) -> RunResult:
    if cfg.trainer.algorithm == "mdpposc":
        raise ConfigError("use run_mdpposc for the separated-critic variant")
    return _run(cfg, env_factory, output_dir)


def run_ppo(cfg: RunConfig, env_factory: Callable | None = None, output_dir=None) -> RunResult:
    if cfg.trainer.n_policies != 1:
        raise ConfigError("standard PPO runs exactly one policy")
    return _run(cfg, env_factory, output_dir)


def run_mdpposc(cfg: RunConfig, env_factory: Callable | None = None, output_dir=None) -> RunResult:
    if cfg.trainer.algorithm != "mdpposc":
        raise ConfigError("run_mdpposc needs trainer.algorithm = 'mdpposc'")
    return _run(cfg, env_factory, output_dir)


def run(cfg: RunConfig, env_factory: Callable | None = None, output_dir=None) -> RunResult:
    dispatch = {"ppo": run_ppo, "mdppo": run_mdppo, "mdpposc": run_mdpposc}
    return dispatch[cfg.trainer.algorithm](cfg, env_factory, output_dir)
