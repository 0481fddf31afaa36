"""Run configuration: nested dataclasses with a flat ``section.key`` JSON form."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .environment import EnvConfig
from .errors import ConfigError
from .estimation import EstimationConfig
from .mixing import SelectionConfig
from .objectives import LossConfig

ALGORITHMS = ("ppo", "mdppo", "mdpposc")
REGIMES = ("separate", "shared")


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str = "mdppo"
    n_policies: int = 5
    agents_per_policy: int = 4
    iterations: int = 500
    horizon: int = 100
    epochs_per_iteration: int = 4
    minibatch_size: int = 256
    network_regime: str = "separate"
    hidden_layers: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    learning_rate: float = 3e-4
    max_grad_norm: float | None = None
    log_std_init: float = 0.0
    normalize_advantages: bool = True
    td_threshold_initial: float = 0.2
    td_threshold_decay: float = 0.995
    success_window: int = 100
    success_target: float = 0.9
    early_stop: bool = False
    checkpoint_every: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"trainer.algorithm: unknown algorithm {self.algorithm!r}")
        if self.network_regime not in REGIMES:
            raise ConfigError(f"trainer.network_regime: unknown regime {self.network_regime!r}")
        if self.algorithm == "ppo" and self.n_policies != 1:
            raise ConfigError("trainer.n_policies: standard PPO runs exactly one policy")
        if self.algorithm == "mdpposc" and self.network_regime != "separate":
            raise ConfigError("trainer.network_regime: mdpposc needs the separate regime")
        for name in ("n_policies", "agents_per_policy", "horizon", "epochs_per_iteration",
                     "minibatch_size", "success_window", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"trainer.{name} must be >= 1")
        if self.iterations < 0:
            raise ConfigError("trainer.iterations must be >= 0")
        if self.td_threshold_initial < 0:
            raise ConfigError("trainer.td_threshold_initial must be >= 0")
        if not 0.0 < self.td_threshold_decay <= 1.0:
            raise ConfigError("trainer.td_threshold_decay must lie in (0, 1]")

    def td_threshold(self, iteration: int) -> float:
        return self.td_threshold_initial * self.td_threshold_decay**iteration


SECTIONS = {
    "trainer": TrainerConfig,
    "loss": LossConfig,
    "estimation": EstimationConfig,
    "selection": SelectionConfig,
    "env": EnvConfig,
}


@dataclass(frozen=True)
class RunConfig:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    seed: int = 0
    run_label: str = "run"
    output_dir: str | None = None

    def to_flat(self) -> dict:
        flat = {}
        for section in SECTIONS:
            for k, v in dataclasses.asdict(getattr(self, section)).items():
                flat[f"{section}.{k}"] = list(v) if isinstance(v, tuple) else v
        flat["seed"] = self.seed
        flat["run_label"] = self.run_label
        flat["output_dir"] = self.output_dir
        return flat

    @classmethod
    def from_flat(cls, flat: dict) -> RunConfig:
        parts: dict[str, dict] = {s: {} for s in SECTIONS}
        top = {}
        for key, value in flat.items():
            section, _, name = key.partition(".")
            if name:
                if section not in SECTIONS:
                    raise ConfigError(f"{key}: unknown section {section!r}")
                known = {f.name for f in dataclasses.fields(SECTIONS[section])}
                if name not in known:
                    raise ConfigError(f"{key}: unknown field")
                parts[section][name] = value
            elif key in ("seed", "run_label", "output_dir"):
                top[key] = value
            else:
                raise ConfigError(f"{key}: unknown field")
        try:
            sections = {s: SECTIONS[s](**kw) for s, kw in parts.items()}
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**sections, **top)

    def replace(self, **flat_overrides) -> RunConfig:
        flat = self.to_flat()
        flat.update(flat_overrides)
        return RunConfig.from_flat(flat)

    def dumps(self) -> str:
        return json.dumps(self.to_flat(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            flat = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(flat, dict):
            raise ConfigError(f"{path}: expected a JSON object of flat keys")
        return cls.from_flat(flat)
