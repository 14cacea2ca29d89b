"""
Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it.
"""


class RomError(Exception):
    exit_code = 1


class ConfigError(RomError):
    exit_code = 2


class NumericalError(RomError):
    exit_code = 3


class ConvergenceError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class ExtrapolationError(NumericalError):
    pass


class ShapeError(RomError, ValueError):
    exit_code = 3


class BackwardBeforeForwardError(RomError, RuntimeError):
    exit_code = 3


class RomIOError(RomError):
    exit_code = 4


class BadMagicError(RomIOError):
    pass


class VersionMismatchError(RomIOError):
    pass


class TruncatedFileError(RomIOError):
    def __init__(self, path, missing: int):
        super().__init__(f"{path}: file truncated, {missing} more bytes expected")
        self.missing = missing


class CorruptFileError(RomIOError):
    pass
