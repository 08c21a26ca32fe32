"""Exception hierarchy shared by all quenchlab modules."""


class QuenchLabError(Exception):
    """Base class for every error raised by quenchlab."""


class ShapeError(QuenchLabError, ValueError):
    pass


class DomainError(QuenchLabError, ValueError):
    pass


class UnsupportedModelError(QuenchLabError, ValueError):
    pass


class NumericalConsistencyError(QuenchLabError, ArithmeticError):
    pass


class AccuracyError(QuenchLabError, ArithmeticError):
    pass


class ResourceError(QuenchLabError, MemoryError):
    pass


class ConfigError(QuenchLabError, ValueError):
    pass
