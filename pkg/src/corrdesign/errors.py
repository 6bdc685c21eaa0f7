"""Exception hierarchy.

Every error raised on purpose by the package derives from ``CorrDesignError``.
``ConfigError`` subclasses mark bad input (CLI exit 2); ``NumericalError``
subclasses mark numerical failures (CLI exit 3).
"""


class CorrDesignError(Exception):
    """Base class."""


class ConfigError(CorrDesignError, ValueError):
    """Invalid user input or problem definition."""


class NumericalError(CorrDesignError, ArithmeticError):
    """A linear-algebra step failed."""


# problem
class InvalidGrid(ConfigError):
    pass


class DegenerateBasis(ConfigError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class InvalidMatrix(ConfigError):
    pass


class InvalidEigenvalue(ConfigError):
    pass


class InvalidKappa(ConfigError):
    pass


class InvalidProblem(ConfigError):
    pass


# criteria
class SingularInformation(NumericalError):
    pass


class IllConditionedCovariance(NumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class InvalidDesign(ConfigError):
    pass


# virtual noise
class InfiniteNoise(NumericalError):
    pass


class InvalidAnchor(ConfigError):
    pass


# cutting plane
class InfeasibleLP(ConfigError):
    pass


class LPFailure(NumericalError):
    pass


# exact methods
class NearSingularAugmentation(NumericalError):
    pass


class BKSFSingularStep(NumericalError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ExtractionCollision(NumericalError):
    pass


class InsufficientSupport(ConfigError):
    pass


class TooLarge(ConfigError):
    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class StallWarning(UserWarning):
    """The cutting-plane loop produced an anchor it had already seen."""
