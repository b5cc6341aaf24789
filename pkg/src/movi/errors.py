"""Exception hierarchy shared by all stages.

Each class carries the process exit code the CLI maps it to:
2 for bad input, 3 for endpoint trouble, 4 for internal invariant violations.
"""


class MoviError(Exception):
    exit_code = 4


class InputError(MoviError, ValueError):
    exit_code = 2


class DimensionError(InputError):
    """A tensor dimension is zero or negative."""


class ShapeError(InputError):
    """Two operands disagree on shape."""


class ParameterError(InputError):
    """A numeric parameter is outside its allowed range."""


class ParseError(InputError):
    """No trajectory could be recovered from LLM text."""

    def __init__(self, message, text=""):
        super().__init__(message)
        self.text = text


class TupleError(ParseError):
    """A coordinate tuple has a malformed frame index."""

    def __init__(self, message, text="", position=-1):
        super().__init__(message, text)
        self.position = position


class DegenerateTrackError(InputError):
    pass


class UnboundObjectError(InputError):
    pass


class JudgeParseError(InputError):
    pass


class SchemaError(InputError):
    pass


class EndpointError(MoviError):
    exit_code = 3


class EmptyPlanError(EndpointError):
    pass


class ConjugateSymmetryError(MoviError):
    """Inverse transform left an imaginary residue; the filter was not symmetric."""


class BackendError(MoviError):
    pass


class ScheduleIndexError(MoviError, IndexError):
    pass


class RejectionError(MoviError):
    pass
