"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage problems are 1, configuration and
data-format problems are 2, runtime failures (NaN abort, I/O) are 3.
"""


class InfillError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(InfillError, ValueError):
    """Tensor dimensions do not satisfy an operation's contract."""


class ContractError(InfillError, RuntimeError):
    """An operation was called outside its stated preconditions."""


class TemplateFormatError(InfillError, ValueError):
    """A template line or pair file violates the template text format."""


class ConfigError(InfillError, ValueError):
    """Bad configuration: unknown key, unparsable value, invalid combination."""


class DataError(InfillError, ValueError):
    """Corpus or supervised-pair data that cannot be used as requested."""


class CheckpointError(InfillError, ValueError):
    """Checkpoint file is malformed or incompatible with the requested model."""


class NumericsError(InfillError, RuntimeError):
    """Non-finite values were produced where finite values are required."""
