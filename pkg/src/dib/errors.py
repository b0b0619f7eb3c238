"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class DIBError(Exception):
    exit_code = 1


class ConfigError(DIBError, ValueError):
    exit_code = 2


class InvalidInputError(DIBError, ValueError):
    exit_code = 3


class ShapeError(InvalidInputError):
    pass


class DegenerateDataError(InvalidInputError):
    """All samples coincide, so no positive kernel bandwidth exists."""


class IngestionError(InvalidInputError):
    pass


class NumericalError(DIBError, ArithmeticError):
    exit_code = 4


class InvalidOrderError(InvalidInputError):
    pass


class InvalidStateError(DIBError, RuntimeError):
    exit_code = 4


class TrainingDivergedError(DIBError, ArithmeticError):
    exit_code = 5

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
