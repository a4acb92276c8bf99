"""Exception hierarchy shared across the package.

Every error carries a stable class name; the CLI prints it on failure.
"""


class FlowGuardError(Exception):
    """Base class for all package errors."""


class NonMonotonicTimestamp(FlowGuardError):
    pass


class InsufficientData(FlowGuardError):
    pass


class SchemaMismatch(FlowGuardError):
    pass


class MissingColumn(FlowGuardError):
    pass


class UnparsableCell(FlowGuardError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptyDataset(FlowGuardError):
    pass


class NonFiniteGradient(FlowGuardError):
    pass


class EmptyEnsemble(FlowGuardError):
    pass


class ClassTooSmall(FlowGuardError):
    pass


class CorruptModelFile(FlowGuardError):
    pass


class SerializationFailure(FlowGuardError):
    pass


class InvalidInput(FlowGuardError):
    pass


class InvalidThresholds(FlowGuardError):
    pass


class InconsistentDecision(FlowGuardError):
    pass


class TableFull(FlowGuardError):
    pass


class OrphanEvent(FlowGuardError):
    pass


class UndefinedFPR(FlowGuardError):
    pass


class ZeroBaseline(FlowGuardError):
    pass


class TooFewFlows(FlowGuardError):
    pass


class IoFailure(FlowGuardError):
    pass


class ConfigError(FlowGuardError):
    pass
