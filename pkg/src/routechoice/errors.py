"""Exception hierarchy shared by every stage of the pipeline."""


class RouteChoiceError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class InvalidInputError(RouteChoiceError, ValueError):
    pass


class DataValidationError(RouteChoiceError):
    """A record in an input file violates its schema or invariants."""


class ConfigurationError(RouteChoiceError):
    pass


class InsufficientDataError(RouteChoiceError):
    pass


class UndefinedSilhouetteError(RouteChoiceError):
    pass


class DegenerateSegmentationError(RouteChoiceError):
    pass


class UndefinedCorrelationError(RouteChoiceError):
    pass
