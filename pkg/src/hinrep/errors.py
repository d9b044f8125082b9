"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value, grid spec, or argument."""


class DataError(Exception):
    """Dataset could not be read or is invalid."""


class SchemaError(DataError, ValueError):
    """A dataset record violates the graph schema.

    ``record`` names the offending record, e.g. ``"edges[3]"``.
    """

    def __init__(self, record, message):
        self.record = record
        super().__init__(f"{record}: {message}")


class EnumerationError(SchemaError):
    """Unknown node kind, relation kind, or label source string."""


class UnknownEntityError(KeyError):
    def __init__(self, entity):
        self.entity = entity
        super().__init__(entity)

    def __str__(self):
        return f"unknown entity id {self.entity!r}"


class DimensionError(ValueError):
    """Incompatible tensor shapes."""


class NumericalError(ArithmeticError):
    """Non-finite value in a forward pass, gradient, or loss."""


class TapeError(RuntimeError):
    """Tape misuse, e.g. replaying a tape twice."""


class DeterminismError(RuntimeError):
    """A function that must be deterministic returned different values."""


class CoverageError(ValueError):
    """A labeled entity has no prediction row."""


class SplitError(ValueError):
    """Labels cannot be partitioned as requested."""


class EvaluationError(ValueError):
    """Metrics requested on an empty split."""
