"""Exception hierarchy.

Every error raised by the package derives from :class:`NCMError` and carries
an ``exit_code`` used by the CLI (2 config, 3 data, 4 numeric/training).
"""


class NCMError(Exception):
    exit_code = 1


class ConfigError(NCMError, ValueError):
    exit_code = 2


class InvalidParameterError(ConfigError):
    """A scalar parameter (temperature, epsilon, learning rate...) is out of range."""


class DataError(NCMError, ValueError):
    exit_code = 3


class InvalidInputError(DataError):
    """Malformed vectors, mismatched shapes, non-finite values."""


class MissingClassError(DataError):
    def __init__(self, class_index, class_name=None):
        self.class_index = class_index
        self.class_name = class_name
        label = class_name if class_name is not None else class_index
        super().__init__(f"class {label!r} (index {class_index}) has no samples")


class InvalidFitSetError(DataError):
    pass


class StratificationError(DataError):
    pass


class DataFormatError(DataError):
    """A feature/model file failed to parse. ``row`` is 1-based when known."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericError(NCMError, ArithmeticError):
    exit_code = 4


class DivergenceUndefinedError(NumericError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")
