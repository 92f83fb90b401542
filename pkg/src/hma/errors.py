"""Exception types.

Two families: :class:`DataError` for bad inputs, files and shapes, and
:class:`NumericalError` for solver or sampler failures. The CLI maps them to
exit codes 3 and 4.
"""


class HMAError(Exception):
    pass


class DataError(HMAError):
    pass


class NumericalError(HMAError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingMedia(DataError):
    pass


class InvalidAngles(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class ShapeMismatch(DataError, ValueError):
    pass


class ConfigMismatch(DataError, ValueError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class EmptyImage(DataError, ValueError):
    pass


class AllHoles(DataError, ValueError):
    pass


class EmptySupport(DataError, ValueError):
    pass


class UnsupportedVersion(DataError):
    pass


class CorruptContainer(DataError):
    pass


class RawFeaturesRequired(DataError):
    pass


class IllPosed(DataError):
    """More mapping centers than training views for some object."""


class GimbalDegenerate(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass


class AllZeroLikelihoods(NumericalError):
    pass
