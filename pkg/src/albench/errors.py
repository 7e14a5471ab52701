"""Exception types shared across the package."""


class ManifestError(ValueError):
    """Manifest file is missing, malformed, or fails record-level validation."""


class ValidationError(ValueError):
    """An operation received arguments violating its contract."""


class InsufficientDataError(ValueError):
    """Too few records/rows for the requested operation."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, step: int):
        self.epoch = epoch
        self.step = step
        super().__init__(
            f"non-finite loss at epoch {epoch}, minibatch step {step}; "
            "check learning rate and target scaling"
        )
