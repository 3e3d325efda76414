"""Exception types shared across the package."""


class ConfmilError(Exception):
    pass


class ShapeError(ConfmilError, ValueError):
    pass


class DomainError(ConfmilError, ValueError):
    pass


class NumericError(ConfmilError, ArithmeticError):
    pass


class GeometryError(ConfmilError, ValueError):
    pass


class SpecError(ConfmilError, ValueError):
    pass


class VocabularyError(ConfmilError, KeyError):
    pass


class GenerationError(ConfmilError, RuntimeError):
    pass


class StateError(ConfmilError, RuntimeError):
    pass


class FormatError(ConfmilError, ValueError):
    pass


class CompatibilityError(FormatError):
    """Readable file written for a different format version or model dims."""


class UndefinedMetricError(ConfmilError, ValueError):
    pass


class DataIntegrityError(ConfmilError, ValueError):
    pass
