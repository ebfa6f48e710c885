"""Exception hierarchy.

Every error carries the process exit code the command line front end uses
for it: 2 for bad input or configuration, 3 for numerical or protocol
failures, 4 when a capacity limit is hit.
"""


class QCBTError(Exception):
    exit_code = 3


class InputError(QCBTError, ValueError):
    exit_code = 2


class ParseError(InputError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConsistencyError(InputError):
    pass


class SpecError(InputError):
    """Invalid active-space specification."""


class CapacityError(QCBTError):
    exit_code = 4


class DimensionError(QCBTError, ValueError):
    pass


class FactorizationError(QCBTError):
    pass


class CircuitError(QCBTError, ValueError):
    pass


class DegeneratePairError(QCBTError, ValueError):
    pass


class ProtocolError(QCBTError):
    pass


class LocalEnergyError(QCBTError):
    pass


class WeightCollapseError(QCBTError):
    pass


class FitError(QCBTError):
    pass


class SchemeError(QCBTError):
    pass
