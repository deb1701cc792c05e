"""Exception types raised by the pipeline, one per violated contract."""


class NotSquareError(ValueError):
    pass


class NotSymmetricError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


class EmptyRangeError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingLabelColumnError(ValueError):
    pass


class UnmappableLabelError(ValueError):
    pass


class AllColumnsDroppedError(ValueError):
    pass


class AllMissingColumnError(ValueError):
    pass


class ResidualMissingError(ValueError):
    pass


class ResidualCategoricalError(ValueError):
    pass


class TooFewSamplesError(ValueError):
    pass


class SingleClassError(ValueError):
    pass


class TooFewRowsError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class TooManyComponentsError(ValueError):
    pass


class NegativeInputError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


class SpatialMismatchError(ValueError):
    pass


class EmptyBatchError(ValueError):
    pass


class NonFiniteGradientError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class UnknownKeyError(ValueError):
    pass


class InvalidValueError(ValueError):
    pass


class InvalidParamsError(ValueError):
    pass


class BadMagicError(ValueError):
    pass


class VersionMismatchError(ValueError):
    pass


class ChecksumFailError(ValueError):
    pass
