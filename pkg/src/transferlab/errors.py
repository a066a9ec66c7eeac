"""Exception hierarchy shared by every module.

Each error carries the module and operation that raised it so the CLI can
print a one-line diagnostic and map it onto an exit status.
"""


class TransferLabError(Exception):
    exit_code = 1

    def __init__(self, message, *, where=None):
        self.where = where
        super().__init__(f"[{where}] {message}" if where else message)


class ConfigurationError(TransferLabError, ValueError):
    exit_code = 2


class UsageError(TransferLabError, ValueError):
    exit_code = 2


class InputError(TransferLabError, ValueError):
    exit_code = 2


class MetricError(TransferLabError, ValueError):
    exit_code = 2

    def __init__(self, message, *, where=None, site=None):
        self.site = site
        super().__init__(message, where=where)


class GeometryError(TransferLabError, ValueError):
    exit_code = 2


class NumericError(TransferLabError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, *, where=None, residual=None, iterate=None):
        self.residual = residual
        self.iterate = iterate
        super().__init__(message, where=where)
