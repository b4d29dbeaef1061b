"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad inputs, malformed
files, invalid configuration) and :class:`NumericalError` (a computation
that could not be completed).  The CLI maps them to distinct exit codes.
"""


class HodsarError(Exception):
    """Base class for all package errors."""


class DataError(HodsarError, ValueError):
    pass


class NumericalError(HodsarError, ArithmeticError):
    pass


# spin-core
class NotHermitian(DataError):
    pass


# triplet dynamics
class InvalidRate(DataError):
    pass


class InvalidState(DataError):
    pass


class DegenerateChain(NumericalError):
    pass


class IntegratorFailure(NumericalError):
    pass


class NoOscillationDetected(NumericalError):
    pass


# resonator
class NonPassiveSection(DataError):
    pass


class CircleFitDegenerate(NumericalError):
    pass


class ZeroTransfer(NumericalError):
    pass


# experiment
class EmptyReadout(DataError):
    pass


class ZeroEnergyBudget(DataError):
    pass


# io
class TouchstoneError(DataError):
    pass


class BadOptionLine(TouchstoneError):
    def __init__(self, line_no: int, msg: str = "bad option line"):
        self.line_no = line_no
        super().__init__(f"BadOptionLine({line_no}): {msg}")


class BadRow(TouchstoneError):
    def __init__(self, line_no: int, msg: str = "wrong column count"):
        self.line_no = line_no
        super().__init__(f"BadRow({line_no}): {msg}")


class NonMonotoneGrid(TouchstoneError):
    pass


class ConfigError(DataError):
    def __init__(self, path: str, msg: str):
        self.path = path
        super().__init__(f"{path}: {msg}")
