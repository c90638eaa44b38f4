"""Exception types shared across the toolkit."""


class ManifestParseError(ValueError):
    """Manifest file could not be parsed; message carries the line number."""


class EmptyMaskError(ValueError):
    """An operation that needs foreground pixels received an empty mask."""


class CheckpointError(RuntimeError):
    """Checkpoint missing, corrupt, or incompatible with the requested backend."""


class NoTrainableParametersError(RuntimeError):
    """The segmenter backend has nothing to optimize."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch_index: int, loss_scale: float):
        self.epoch = epoch
        self.batch_index = batch_index
        self.loss_scale = loss_scale
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch_index} "
            f"(loss scale {loss_scale})"
        )


class ConfigurationError(ValueError):
    """An experiment or CLI invocation is missing required inputs."""
