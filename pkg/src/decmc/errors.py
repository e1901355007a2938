"""Exception hierarchy shared by every engine."""


class DecmcError(Exception):
    """Base class for all errors raised by decmc."""


class ModelError(DecmcError):
    """A state is malformed or unknown to the model it was given to."""


class SpecificationError(DecmcError):
    """Target/avoid declarations are inconsistent with the model."""


class PathError(DecmcError):
    """A finite path uses an edge the model does not have."""


class NotFoundError(DecmcError, KeyError):
    pass


class AbstractionError(DecmcError):
    """The random-walk abstraction is unsound at some state.

    ``witness`` holds the offending state (or a ``(control, letter, n)``
    class for compiled models).
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ConfigurationError(DecmcError):
    pass


class DomainError(DecmcError, ValueError):
    pass


class InternalError(DecmcError):
    pass


class ParseError(DecmcError):
    """Model text could not be parsed.

    ``kind`` is ``"syntax"`` for grammar errors and a short tag
    (``"unknown-letter"``, ``"zero-weight"``, ...) for semantic ones.
    """

    def __init__(self, message, line=None, column=None, kind="syntax"):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column
        self.kind = kind
