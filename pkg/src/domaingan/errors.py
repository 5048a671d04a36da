"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with an operation's contract."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class DataError(RuntimeError):
    """Dataset ingestion failure; the message names the offending path."""


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or version-incompatible checkpoint."""


class TrainingError(RuntimeError):
    """Non-finite loss (or similar) during training."""

    def __init__(self, step: int, loss_name: str, message: str = ""):
        self.step = step
        self.loss_name = loss_name
        detail = message or f"non-finite loss '{loss_name}' at step {step}"
        super().__init__(detail)
