"""Exception hierarchy.

``ValidationError`` subclasses describe bad input (files, schemas, flags) and
map to CLI exit code 1; everything else under ``XTrepanError`` is a runtime
failure and maps to exit code 2.
"""


class XTrepanError(Exception):
    pass


class ValidationError(XTrepanError, ValueError):
    pass


class SchemaError(ValidationError):
    """A value violates the declared schema."""


class ParseError(ValidationError):
    """Malformed text (CSV, schema, network or tree file)."""


class ConfigurationError(ValidationError):
    pass


class StructuralError(ValidationError):
    """Inconsistent network or tree structure."""


class DataError(XTrepanError, ValueError):
    pass


class DomainError(XTrepanError, ValueError):
    """A numeric function was evaluated outside its domain."""


class TrainingError(XTrepanError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class UnsatisfiableConstraint(XTrepanError, RuntimeError):
    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class SplitFailure(XTrepanError):
    """No admissible splitting test exists for a sample."""


class InadmissibleAttribute(XTrepanError):
    """An attribute cannot be used for a split (zero split information, too few values)."""


class ExtractionError(XTrepanError, RuntimeError):
    pass
