"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI reports for it.
"""


class RbfVaeError(Exception):
    exit_code = 2


class UsageError(RbfVaeError):
    exit_code = 1


class ConfigError(RbfVaeError):
    exit_code = 2


class DataError(RbfVaeError):
    exit_code = 2


class SchemaError(DataError):
    pass


class GapError(DataError):
    def __init__(self, hour, message=None):
        self.hour = hour
        super().__init__(message or f"timestamp gap or duplicate at hour {hour}")


class InsufficientDataError(DataError):
    pass


class StaleCacheError(RbfVaeError):
    exit_code = 2


class SizeError(RbfVaeError):
    exit_code = 2


class DimensionError(RbfVaeError):
    exit_code = 3


class NumericError(RbfVaeError):
    exit_code = 3


class TrainingError(NumericError):
    def __init__(self, message, last_losses=()):
        self.last_losses = list(last_losses)
        super().__init__(message)
