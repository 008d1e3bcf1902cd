"""Exception hierarchy shared by every lifecode module."""


class LifeCodeError(Exception):
    """Base class for all errors raised by lifecode."""


# sequence handling
class InvalidBase(LifeCodeError, ValueError):
    pass


class InvalidResidue(LifeCodeError, ValueError):
    pass


class LengthNotMultipleOfThree(LifeCodeError, ValueError):
    pass


class StopInsideSequence(LifeCodeError, ValueError):
    pass


# ingestion
class MalformedHeader(LifeCodeError, ValueError):
    pass


class EmptySequence(LifeCodeError, ValueError):
    pass


class JsonSyntax(LifeCodeError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class TranslationMismatch(LifeCodeError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvalidMaxLen(LifeCodeError, ValueError):
    pass


class EmptyInput(LifeCodeError, ValueError):
    pass


# numerics
class ShapeMismatch(LifeCodeError, ValueError):
    pass


class TargetOutOfRange(LifeCodeError, ValueError):
    pass


class AllIgnored(LifeCodeError, ValueError):
    pass


class StepOutOfRange(LifeCodeError, ValueError):
    pass


class OddHeadDim(LifeCodeError, ValueError):
    pass


class MemoryBudgetExceeded(LifeCodeError, MemoryError):
    """Raised when tracked activation memory would exceed the active budget."""


# model
class IdOutOfRange(LifeCodeError, ValueError):
    pass


class OddDim(LifeCodeError, ValueError):
    pass


class NegativeLoss(LifeCodeError, ValueError):
    pass


# container
class ContainerIOError(LifeCodeError, OSError):
    pass


class BadMagic(LifeCodeError, ValueError):
    pass


class VersionMismatch(LifeCodeError, ValueError):
    pass


class ChecksumMismatch(LifeCodeError, ValueError):
    pass


# evaluation
class PositionOutOfRange(LifeCodeError, ValueError):
    pass


class LengthMismatch(LifeCodeError, ValueError):
    pass


class DegenerateConstantInput(LifeCodeError, ValueError):
    pass


# configuration
class ConfigError(LifeCodeError, ValueError):
    pass
