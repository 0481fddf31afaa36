"""Trajectory selection and per-policy mixed training batches."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, TrainingError
from .estimation import ProcessedBatch
from .rollout import FULL_LENGTH, GOAL, Trajectory

GLOBAL, PER_GROUP = "global", "per_group"


@dataclass(frozen=True)
class SelectionConfig:
    auxiliary_fraction: float = 0.4
    completion_criterion: str = GOAL
    auxiliary_scope: str = GLOBAL
    ratio_filter_epsilon: float = 0.0  # > 0 drops transitions with behaviour density below it

    def __post_init__(self):
        if not 0.0 <= self.auxiliary_fraction <= 1.0:
            raise ConfigError(f"auxiliary_fraction must lie in [0, 1], got {self.auxiliary_fraction}")
        if self.completion_criterion not in (GOAL, FULL_LENGTH):
            raise ConfigError(f"unknown completion criterion {self.completion_criterion!r}")
        if self.auxiliary_scope not in (GLOBAL, PER_GROUP):
            raise ConfigError(f"unknown auxiliary scope {self.auxiliary_scope!r}")
        if self.ratio_filter_epsilon < 0:
            raise ConfigError("ratio_filter_epsilon must be non-negative")


def is_complete(traj: Trajectory, criterion: str) -> bool:
    return traj.completion_kind == criterion


def select_complete(dataset: Sequence[Trajectory], criterion: str = GOAL) -> list[Trajectory]:
    """Trajectories that finished the task: reached the goal, or survived to the time limit."""
    return [tr for tr in dataset if is_complete(tr, criterion)]


def top_count(fraction: float, n: int) -> int:
    # round first so that e.g. 0.1 * 30 does not ceil to 4
    return min(n, math.ceil(round(fraction * n, 9)))


def select_auxiliary(
    trajectories: Sequence[Trajectory], fraction: float, criterion: str = GOAL
) -> list[Trajectory]:
    """The top ``fraction`` of non-complete trajectories by cumulative reward.

    Ties are broken by (policy_id, agent_id, order), so the result is a pure
    function of the metadata.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction must lie in [0, 1], got {fraction}")
    pool = [tr for tr in trajectories if not is_complete(tr, criterion)]
    pool.sort(key=lambda tr: (-tr.cumulative_reward, tr.policy_id, tr.agent_id, tr.order))
    return pool[: top_count(fraction, len(pool))]


@dataclass
class Selection:
    """Per-group shareable trajectories (complete + auxiliary)."""

    complete: list[list[Trajectory]]
    auxiliary: list[list[Trajectory]]

    def shared(self, j: int) -> list[Trajectory]:
        key = lambda tr: (tr.agent_id, tr.order)  # noqa: E731
        return sorted(self.complete[j] + self.auxiliary[j], key=key)

    def counts(self, j: int) -> tuple[int, int]:
        return len(self.complete[j]), len(self.auxiliary[j])


def select(datasets: Sequence[Sequence[Trajectory]], config: SelectionConfig) -> Selection:
    complete = [select_complete(d, config.completion_criterion) for d in datasets]
    if config.auxiliary_scope == GLOBAL:
        chosen = select_auxiliary(
            [tr for d in datasets for tr in d], config.auxiliary_fraction, config.completion_criterion
        )
        auxiliary = [[tr for tr in chosen if tr.policy_id == i] for i in range(len(datasets))]
    else:
        auxiliary = [
            select_auxiliary(d, config.auxiliary_fraction, config.completion_criterion)
            for d in datasets
        ]
    return Selection(complete, auxiliary)


def mixed_trajectories(
    datasets: Sequence[Sequence[Trajectory]], selection: Selection, i: int
) -> tuple[list[Trajectory], list[Trajectory]]:
    """(own, foreign) trajectories for policy ``i``: all of D_i plus D^-_j for j != i."""
    own = list(datasets[i])
    foreign = [tr for j in range(len(datasets)) if j != i for tr in selection.shared(j)]
    return own, foreign


@dataclass
class MixedBatch:
    batch: ProcessedBatch
    own_count: int
    foreign_count: int
    policy_id: int
    filtered_count: int = 0

    def __len__(self) -> int:
        return len(self.batch)


def filter_unsafe(batch: ProcessedBatch, epsilon: float) -> tuple[ProcessedBatch, np.ndarray]:
    """Drop transitions whose behaviour density is below ``epsilon``."""
    with np.errstate(under="ignore"):
        keep = np.exp(batch.behavior_log_density) >= epsilon
    return batch.take(keep), keep


def build_mixed_batches(
    datasets: Sequence[Sequence[Trajectory]],
    selection: Selection,
    config: SelectionConfig,
    rng: np.random.Generator | Sequence[np.random.Generator],
    estimate: Callable[[int, list[Trajectory]], ProcessedBatch],
) -> list[MixedBatch]:
    """One shuffled training batch per policy.

    ``estimate(i, trajectories)`` attaches advantages and targets using
    policy ``i``'s frozen critic; behaviour densities are never recomputed.
    ``rng`` is either one generator shared in policy order or one per policy.
    """
    n = len(datasets)
    rngs = list(rng) if isinstance(rng, (list, tuple)) else [rng] * n
    out = []
    for i in range(n):
        own, foreign = mixed_trajectories(datasets, selection, i)
        own_b = estimate(i, own)
        foreign_b = estimate(i, foreign) if foreign else None
        parts = [own_b] if foreign_b is None else [own_b, foreign_b]
        batch = ProcessedBatch.concat(parts)
        own_n, foreign_n = len(own_b), 0 if foreign_b is None else len(foreign_b)
        dropped = 0
        if config.ratio_filter_epsilon > 0:
            batch, keep = filter_unsafe(batch, config.ratio_filter_epsilon)
            dropped = int((~keep).sum())
            own_n = int(keep[: len(own_b)].sum())
            foreign_n = int(keep[len(own_b):].sum())
            if len(batch) == 0:
                raise TrainingError(
                    f"ratio filter removed every transition for policy {i}; "
                    "lower the filter epsilon or switch ratio form",
                    batch_id=i,
                )
        perm = rngs[i].permutation(len(batch))
        out.append(MixedBatch(batch.take(perm), own_n, foreign_n, i, dropped))
    return out
