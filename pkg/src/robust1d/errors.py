"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class ContractError(ValueError):
    """A caller violated an operation precondition (bad label, missing grad, ...)."""


class FormatError(ValueError):
    """A file or byte stream does not match its declared format."""


class NumericsError(ArithmeticError):
    """Non-finite values, division guards, or failed numeric probes."""


class ConfigError(ValueError):
    """An experiment configuration is invalid or references missing files."""


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss; the last good checkpoint was kept."""

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
