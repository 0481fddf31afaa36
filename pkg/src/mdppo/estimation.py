"""Returns, td-errors and generalized advantage estimates over single trajectories."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .approximator import ParamSet, forward_value
from .errors import ConfigError
from .rollout import Trajectory


@dataclass(frozen=True)
class EstimationConfig:
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")


def _check(rewards: np.ndarray, values: np.ndarray) -> None:
    if len(values) != len(rewards) + 1:
        raise ValueError(
            f"values must hold one entry per state plus the bootstrap: "
            f"got {len(values)} for {len(rewards)} rewards"
        )


def td_errors(rewards, values, gamma: float) -> np.ndarray:
    """delta_t = r_t + gamma * V(s_{t+1}) - V(s_t); ``values[-1]`` is the bootstrap (0 if terminal)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    _check(rewards, values)
    return rewards + gamma * values[1:] - values[:-1]


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates via the backward recursion A_t = delta_t + gamma*lam*A_{t+1}."""
    deltas = td_errors(rewards, values, gamma)
    adv = np.empty_like(deltas)
    acc = 0.0
    decay = gamma * lam
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + decay * acc
        adv[t] = acc
    return adv


def value_targets(rewards, bootstrap_value: float, gamma: float) -> np.ndarray:
    """Discounted reward-to-go plus the discounted bootstrap of the state after the last step."""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = float(bootstrap_value)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass
class ProcessedBatch:
    """Flat, column-wise transitions with their training targets attached."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_log_density: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray
    td_errors: np.ndarray
    policy_id: np.ndarray
    agent_id: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    def take(self, idx) -> ProcessedBatch:
        return ProcessedBatch(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    @classmethod
    def concat(cls, batches: Sequence[ProcessedBatch]) -> ProcessedBatch:
        nonempty = [b for b in batches if len(b)]
        if not nonempty:
            return batches[0] if batches else cls.empty()
        batches = nonempty
        return cls(
            **{f.name: np.concatenate([getattr(b, f.name) for b in batches]) for f in fields(cls)}
        )

    @classmethod
    def empty(cls, obs_dim: int = 0, action_dim: int = 0) -> ProcessedBatch:
        z = np.zeros(0)
        return cls(
            np.zeros((0, obs_dim)), np.zeros((0, action_dim)), z, z, z, z, z, z,
            np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
        )


def process_trajectory(
    traj: Trajectory, critic: ParamSet | None, config: EstimationConfig
) -> ProcessedBatch:
    """Attach advantages, value targets and td-errors to ``traj``.

    With ``critic=None`` the values stored at collection time are used;
    otherwise the given (frozen) critic re-evaluates every state, which is
    how a policy scores trajectories gathered by another group.
    """
    if critic is None:
        v = traj.behavior_value
        boot = traj.bootstrap_value
    else:
        if traj.terminal:
            v = forward_value(critic, traj.states)
            boot = 0.0
        else:
            both = forward_value(critic, np.vstack([traj.states, traj.next_states[-1:]]))
            v, boot = both[:-1], float(both[-1])
    values = np.append(v, boot)
    n = len(traj)
    return ProcessedBatch(
        states=traj.states,
        actions=traj.actions,
        rewards=traj.rewards,
        behavior_log_density=traj.behavior_log_density,
        values=np.asarray(v, dtype=np.float64),
        advantages=gae(traj.rewards, values, config.gamma, config.lam),
        value_targets=value_targets(traj.rewards, boot, config.gamma),
        td_errors=td_errors(traj.rewards, values, config.gamma),
        policy_id=np.full(n, traj.policy_id, dtype=np.int64),
        agent_id=np.full(n, traj.agent_id, dtype=np.int64),
    )


def process_trajectories(
    trajectories: Sequence[Trajectory], critic: ParamSet | None, config: EstimationConfig
) -> ProcessedBatch:
    return ProcessedBatch.concat([process_trajectory(t, critic, config) for t in trajectories])


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean() if len(adv) else adv
    return (adv - adv.mean()) / (adv.std() + eps)
