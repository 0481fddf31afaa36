"""PPO, mixed distributed PPO (MDPPO) and MDPPO with a separated critic, in numpy."""

from .config import RunConfig, TrainerConfig
from .environment import EnvConfig, RollerEnv
from .errors import ConfigError, TrainingError, UsageError
from .estimation import EstimationConfig, gae, td_errors, value_targets
from .mixing import SelectionConfig, build_mixed_batches, select_auxiliary, select_complete
from .objectives import LossConfig
from .trainer import Trainer, run, run_mdppo, run_mdpposc, run_ppo

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EnvConfig",
    "EstimationConfig",
    "LossConfig",
    "RollerEnv",
    "RunConfig",
    "SelectionConfig",
    "Trainer",
    "TrainerConfig",
    "TrainingError",
    "UsageError",
    "build_mixed_batches",
    "gae",
    "run",
    "run_mdppo",
    "run_mdpposc",
    "run_ppo",
    "select_auxiliary",
    "select_complete",
    "td_errors",
    "value_targets",
]
