"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """A configuration value is outside its legal domain."""


class ContractError(ValueError):
    """A caller violated an API precondition."""


class TapeError(RuntimeError):
    """Gradient tape misuse, e.g. a second backward pass without a new forward."""


class ParseError(ValueError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(RuntimeError):
    """Training aborted; carries diagnostics about the failing step."""

    def __init__(self, message: str, epoch: int, batch: int, grad_norm: float):
        super().__init__(
            f"{message} (epoch {epoch}, batch {batch}, grad norm {grad_norm!r})"
        )
        self.epoch = epoch
        self.batch = batch
        self.grad_norm = grad_norm
