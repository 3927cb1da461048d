"""Exception hierarchy shared by every module of the package."""


class HazFractalError(Exception):
    """Base class for all errors raised by hazfractal."""


class InvalidInput(HazFractalError, ValueError):
    pass


class InvalidWindowSize(InvalidInput):
    pass


class UnderdeterminedFit(InvalidInput):
    pass


class DomainError(InvalidInput):
    pass


class DegenerateVariance(HazFractalError, ArithmeticError):
    """A zero local variance was raised to a non-positive power."""


class InsufficientScales(InvalidInput):
    pass


class SeriesTooShort(InvalidInput):
    pass


class NumericalFailure(HazFractalError, ArithmeticError):
    pass


class SchemaError(InvalidInput):
    pass


class ParseError(InvalidInput):
    pass


class ConfigError(HazFractalError):
    pass


class TrainingDiverged(HazFractalError, ArithmeticError):
    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")


class IoError(HazFractalError, OSError):
    pass
