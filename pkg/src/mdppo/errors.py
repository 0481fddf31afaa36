"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or mismatched dimensions."""


class UsageError(RuntimeError):
    """An object was driven outside its protocol, e.g. stepping a finished episode."""


class TrainingError(RuntimeError):
    """Non-finite loss or gradient; carries enough context to locate the offending batch."""

    def __init__(self, message: str, batch_id=None, state: dict | None = None):
        super().__init__(message if batch_id is None else f"{message} (batch {batch_id})")
        self.batch_id = batch_id
        self.state = state or {}
