"""Exception hierarchy shared by every module."""


class FreqStabError(Exception):
    """Base class for all package errors."""


class DegenerateLoop(FreqStabError):
    """Raised when 1 + g*h vanishes identically."""


class ImproperSystem(FreqStabError):
    """Numerator degree exceeds denominator degree."""


class EmptyTrace(FreqStabError):
    pass


class DivisionByZero(FreqStabError, ZeroDivisionError):
    pass


class DimensionMismatch(FreqStabError):
    pass


class UnknownArea(FreqStabError):
    pass


class UnknownChannel(FreqStabError):
    pass


class InfeasibleBounds(FreqStabError, ValueError):
    pass


class UnidentifiableInput(FreqStabError):
    """No input channel excites the parameters being fitted."""


class SolverFailure(FreqStabError):
    pass


class ConstantReference(FreqStabError):
    """Total sum of squares of the reference signal is zero."""


class ParseError(FreqStabError):
    pass


class ValidationError(FreqStabError, ValueError):
    """Invalid parameter, bound or configuration value."""


class NonuniformSampling(FreqStabError):
    pass


class DuplicateChannel(FreqStabError):
    pass


class EmptyFile(FreqStabError):
    pass


class IoError(FreqStabError, OSError):
    pass
