"""Exception hierarchy shared by all modules."""


class CoordGuardError(Exception):
    """Base class for every error raised by coordguard."""


class ConfigInvalid(CoordGuardError, ValueError):
    """A configuration object or file violates its invariants.

    ``line`` is set when the error can be anchored to a source line.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif path is not None:
            where = f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class SchemaMismatch(CoordGuardError, ValueError):
    pass


class OracleCapExceeded(CoordGuardError):
    pass


class DimensionMismatch(CoordGuardError, ValueError):
    pass


class NonConvergence(CoordGuardError, ArithmeticError):
    pass


class MissingIndicator(CoordGuardError, KeyError):
    pass


class FallbackInfeasible(CoordGuardError):
    pass


class UnknownScenario(CoordGuardError, KeyError):
    pass


class AuditParseError(CoordGuardError):
    def __init__(self, message: str, record_index: int):
        self.record_index = record_index
        super().__init__(f"record {record_index}: {message}")
