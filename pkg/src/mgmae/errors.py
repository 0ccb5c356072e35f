"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """Input lies outside the domain of a function (e.g. log of a non-positive value)."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class VocabularyError(KeyError):
    """Token id outside the vocabulary."""


class ConfigurationError(ValueError):
    """Invalid experiment or model configuration."""


class FormatError(ValueError):
    """Checkpoint bytes are corrupted, truncated, or of an unknown version."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None, sample_index=None):
        super().__init__(message)
        self.epoch = epoch
        self.sample_index = sample_index


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
