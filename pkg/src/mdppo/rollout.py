"""Parallel experience collection for N policy groups of M agents each."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .approximator import GaussianDist, ParamSet, forward_policy, forward_value, log_density, sample
from .environment import HIT_TARGET, TIMEOUT, EnvConfig, RollerEnv
from .errors import ConfigError, UsageError

GOAL, FULL_LENGTH, NONE = "goal", "full_length", "none"


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool
    behavior_log_density: float
    behavior_value: float
    policy_id: int
    agent_id: int
    t: int


@dataclass
class Trajectory:
    """Consecutive steps of one agent, stored column-wise.

    A trajectory ends either at an episode end (``terminals[-1]`` set) or
    at the collection horizon, in which case ``bootstrap_value`` holds the
    behaviour critic's estimate of the state after the last step.
    """

    policy_id: int
    agent_id: int
    order: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    behavior_log_density: np.ndarray
    behavior_value: np.ndarray
    t: np.ndarray
    termination_kind: str
    bootstrap_value: float = 0.0

    def __post_init__(self):
        if self.terminals[-1]:
            self.bootstrap_value = 0.0
        self.cumulative_reward = float(sum(self.rewards.tolist()))

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def completion_kind(self) -> str:
        if self.termination_kind == HIT_TARGET:
            return GOAL
        if self.termination_kind == TIMEOUT:
            return FULL_LENGTH
        return NONE

    @property
    def completed(self) -> bool:
        return self.completion_kind != NONE

    @property
    def terminal(self) -> bool:
        return bool(self.terminals[-1])

    @property
    def transitions(self) -> list[Transition]:
        return [
            Transition(
                self.states[k],
                self.actions[k],
                float(self.rewards[k]),
                self.next_states[k],
                bool(self.terminals[k]),
                float(self.behavior_log_density[k]),
                float(self.behavior_value[k]),
                self.policy_id,
                self.agent_id,
                int(self.t[k]),
            )
            for k in range(len(self))
        ]

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "agent_id": self.agent_id,
            "order": self.order,
            "termination_kind": self.termination_kind,
            "completion_kind": self.completion_kind,
            "cumulative_reward": self.cumulative_reward,
            "bootstrap_value": self.bootstrap_value,
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "next_states": self.next_states.tolist(),
            "terminals": self.terminals.tolist(),
            "behavior_log_density": self.behavior_log_density.tolist(),
            "behavior_value": self.behavior_value.tolist(),
            "t": self.t.tolist(),
        }


@dataclass(frozen=True)
class EpisodeRecord:
    policy_id: int
    agent_id: int
    kind: str
    episode_return: float
    length: int


@dataclass(frozen=True)
class PolicySnapshot:
    """Frozen behaviour parameters for one group.  ``critic`` may be ``policy`` (shared head)."""

    policy: ParamSet
    critic: ParamSet


@dataclass
class CollectResult:
    datasets: list[list[Trajectory]]
    episodes: list[EpisodeRecord]

    @property
    def n_transitions(self) -> int:
        return sum(len(tr) for d in self.datasets for tr in d)


class _Agent:
    def __init__(self, env, seed: int, i: int, j: int):
        self.env = env
        env_seq, act_seq = np.random.SeedSequence([seed, i, j]).spawn(2)
        self.env_rng = np.random.default_rng(env_seq)
        self.action_rng = np.random.default_rng(act_seq)
        self.obs = env.reset(self.env_rng)
        self.episode_return = 0.0
        self.episode_length = 0


class AgentPool:
    """N x M environments with independent random streams derived from ``(seed, i, j)``.

    Environments persist across iterations, so an episode cut by the horizon
    continues in the next collection phase.
    """

    def __init__(
        self,
        n_groups: int,
        agents_per_group: int,
        seed: int,
        env_factory: Callable[[], object] | None = None,
        env_config: EnvConfig | None = None,
    ):
        if n_groups < 1 or agents_per_group < 1:
            raise ConfigError("need at least one group and one agent per group")
        if env_factory is None:
            env_config = env_config or EnvConfig()
            env_factory = lambda: RollerEnv(env_config)  # noqa: E731
        self.n_groups = n_groups
        self.agents_per_group = agents_per_group
        self.groups = [
            [_Agent(env_factory(), seed, i, j) for j in range(agents_per_group)]
            for i in range(n_groups)
        ]


def _collect_group(
    i: int, agents: list[_Agent], snap: PolicySnapshot, horizon: int
) -> tuple[list[Trajectory], list[EpisodeRecord]]:
    m = len(agents)
    buffers: list[dict[str, list]] = [_empty_buffer() for _ in range(m)]
    order = [0] * m
    trajectories: list[Trajectory] = []
    episodes: list[EpisodeRecord] = []

    for step in range(horizon):
        obs = np.stack([a.obs for a in agents])
        dist = forward_policy(snap.policy, obs)
        values = forward_value(snap.critic, obs)
        actions = np.stack([sample(_row(dist, j), agents[j].action_rng) for j in range(m)])
        logp = log_density(dist, actions)
        for j, agent in enumerate(agents):
            try:
                res = agent.env.step(actions[j])
            except UsageError as exc:
                raise UsageError(f"agent ({i}, {j}): {exc}") from exc
            buf = buffers[j]
            buf["states"].append(agent.obs)
            buf["actions"].append(actions[j])
            buf["rewards"].append(res.reward)
            buf["next_states"].append(res.observation)
            buf["terminals"].append(res.terminal)
            buf["logp"].append(logp[j])
            buf["values"].append(values[j])
            buf["t"].append(step)
            agent.episode_return += res.reward
            agent.episode_length += 1
            if res.terminal:
                trajectories.append(_close(buf, i, j, order[j], res.termination_kind, 0.0))
                order[j] += 1
                buffers[j] = _empty_buffer()
                episodes.append(
                    EpisodeRecord(i, j, res.termination_kind, agent.episode_return, agent.episode_length)
                )
                agent.episode_return = 0.0
                agent.episode_length = 0
                agent.obs = agent.env.reset(agent.env_rng)
            else:
                agent.obs = res.observation

    open_ids = [j for j in range(m) if buffers[j]["rewards"]]
    if open_ids:
        boot = forward_value(snap.critic, np.stack([agents[j].obs for j in open_ids]))
        for j, b in zip(open_ids, np.atleast_1d(boot)):
            trajectories.append(_close(buffers[j], i, j, order[j], "running", float(b)))
    trajectories.sort(key=lambda tr: (tr.agent_id, tr.order))
    return trajectories, episodes


def _row(dist: GaussianDist, j: int) -> GaussianDist:
    return GaussianDist(dist.mean[j], dist.log_std)


def _empty_buffer() -> dict[str, list]:
    return {k: [] for k in ("states", "actions", "rewards", "next_states", "terminals", "logp", "values", "t")}


def _close(buf, i, j, order, kind, bootstrap) -> Trajectory:
    return Trajectory(
        policy_id=i,
        agent_id=j,
        order=order,
        states=np.array(buf["states"]),
        actions=np.array(buf["actions"]),
        rewards=np.array(buf["rewards"], dtype=np.float64),
        next_states=np.array(buf["next_states"]),
        terminals=np.array(buf["terminals"], dtype=bool),
        behavior_log_density=np.array(buf["logp"], dtype=np.float64),
        behavior_value=np.array(buf["values"], dtype=np.float64),
        t=np.array(buf["t"], dtype=np.int64),
        termination_kind=kind,
        bootstrap_value=bootstrap,
    )


def collect_iteration(
    snapshots: Sequence[PolicySnapshot], pool: AgentPool, horizon: int, workers: int = 1
) -> CollectResult:
    """Run every group's frozen policy for ``horizon`` steps in each of its environments.

    Returns one dataset per group.  Groups only read their own snapshot, so
    ``workers > 1`` runs them on a thread pool without changing any result.
    """
    if len(snapshots) != pool.n_groups:
        raise ConfigError(f"{len(snapshots)} snapshots for {pool.n_groups} groups")
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    jobs = [(i, pool.groups[i], snapshots[i], horizon) for i in range(pool.n_groups)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda args: _collect_group(*args), jobs))
    else:
        results = [_collect_group(*args) for args in jobs]
    datasets = [r[0] for r in results]
    episodes = [e for r in results for e in r[1]]
    return CollectResult(datasets, episodes)


def dump_trajectories(path: str | Path, trajectories: Sequence[Trajectory]) -> None:
    """Append trajectories as JSON lines."""
    with open(path, "a") as fh:
        for tr in trajectories:
            fh.write(json.dumps(tr.to_dict()) + "\n")
