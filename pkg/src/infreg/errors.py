"""Exception taxonomy shared across the package.

CLI exit codes: ConfigurationError/UsageError/SchemaError -> 2,
DivergenceError -> 3, I/O errors -> 4.
"""


class InfregError(Exception):
    """Base class for package errors."""


class ConfigurationError(InfregError):
    """Invalid configuration, e.g. non-conforming tensor shapes."""


class UsageError(InfregError):
    """API misuse, e.g. backward from a non-scalar node."""


class SchemaError(InfregError):
    """A dataset file failed validation; message names the offending column."""


class DivergenceError(InfregError):
    """Training produced a non-finite or runaway loss.

    Carries the loss history accumulated up to the failing step.
    """

    def __init__(self, message: str, history=None, diagnostics=None):
        super().__init__(message)
        self.history = history or []
        self.diagnostics = diagnostics or {}
