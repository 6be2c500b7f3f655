"""Exception hierarchy shared by all shapfair modules."""


class ShapfairError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(ShapfairError, ValueError):
    pass


class InvalidCoalitionError(InvalidArgumentError):
    pass


class InvalidDistributionError(InvalidArgumentError):
    pass


class ZeroProbabilityError(InvalidDistributionError):
    pass


class EmptyInputError(InvalidArgumentError):
    """A metric was asked to aggregate over an empty set."""


class CapacityError(ShapfairError):
    """The requested computation exceeds a documented size cap."""


class FormatError(ShapfairError):
    """A file does not conform to its declared format."""


class ExternalUtilityError(ShapfairError):
    """A subprocess utility misbehaved; ``request`` is the offending query."""

    def __init__(self, message: str, request: str | None = None):
        super().__init__(message if request is None else f"{message} (request: {request!r})")
        self.request = request


class InsufficientDataError(ShapfairError):
    pass


class NumericError(ShapfairError, ArithmeticError):
    pass


class DegenerateBoundError(NumericError):
    pass


class ConfigError(ShapfairError):
    """Invalid experiment configuration; ``problems`` lists every offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = list(problems)
