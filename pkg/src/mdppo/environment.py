"""A 2-D point-mass "roller" task.

The agent starts at the centre of a square plane and must touch a randomly
placed target before leaving the plane.  Observations are target-relative:
``[target - agent, velocity]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError

RUNNING, HIT_TARGET, FELL_OFF, TIMEOUT = "running", "hit_target", "fell_off", "timeout"
VARIANTS = ("roller-dense", "roller-sparse")

OBS_DIM = 4
ACTION_DIM = 2


@dataclass(frozen=True)
class EnvConfig:
    variant: str = "roller-dense"
    half_width: float = 5.0
    hit_radius: float = 0.6
    friction: float = 0.9
    force_scale: float = 0.25
    max_steps: int = 100
    step_penalty: float = -0.005

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown environment variant {self.variant!r}; expected {VARIANTS}")
        if self.half_width <= self.hit_radius:
            raise ConfigError("plane must be wider than the hit radius")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")

    @property
    def living_reward(self) -> float:
        return 0.0 if self.variant == "roller-sparse" else self.step_penalty


@dataclass
class EnvState:
    agent_position: np.ndarray
    agent_velocity: np.ndarray
    target_position: np.ndarray


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    termination_kind: str


class RollerEnv:
    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.state: EnvState | None = None
        self.t = 0
        self.done = True

    def observation(self) -> np.ndarray:
        s = self.state
        return np.concatenate([s.target_position - s.agent_position, s.agent_velocity])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        agent = np.zeros(2)
        while True:
            target = rng.uniform(-cfg.half_width, cfg.half_width, size=2)
            if np.linalg.norm(target - agent) > cfg.hit_radius:
                break
        self.state = EnvState(agent, np.zeros(2), target)
        self.t = 0
        self.done = False
        return self.observation()

    def step(self, action) -> StepResult:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset() first")
        cfg = self.config
        s = self.state
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        s.agent_velocity = cfg.friction * s.agent_velocity + cfg.force_scale * a
        s.agent_position = s.agent_position + s.agent_velocity
        self.t += 1

        if np.any(np.abs(s.agent_position) > cfg.half_width):
            reward, kind = -1.0, FELL_OFF
        elif np.linalg.norm(s.target_position - s.agent_position) < cfg.hit_radius:
            reward, kind = 1.0, HIT_TARGET
        elif self.t >= cfg.max_steps:
            reward, kind = cfg.living_reward, TIMEOUT
        else:
            reward, kind = cfg.living_reward, RUNNING
        self.done = kind != RUNNING
        return StepResult(self.observation(), reward, self.done, kind)
