"""Exception types raised across the engine."""


class SegsynthError(Exception):
    """Base class for all engine errors."""


# --- tensor container ---

class TensorFormatError(SegsynthError):
    """Malformed tensor file header."""


class BadMagic(TensorFormatError):
    pass


class UnsupportedVersion(TensorFormatError):
    pass


class UnsupportedDtype(TensorFormatError):
    pass


class TruncatedPayload(TensorFormatError):
    pass


class ShapeMismatch(SegsynthError):
    pass


class IoFailure(SegsynthError):
    pass


# --- bundle reading ---

class MissingManifest(SegsynthError):
    pass


class SchemaViolation(SegsynthError):
    pass


class ShapeMismatchWithManifest(SegsynthError):
    pass


class MissingSotToken(SegsynthError):
    pass


# --- masks ---

class InvalidLabel(SegsynthError):
    pass


# --- numerics ---

class NonFiniteInput(SegsynthError):
    pass


class DimensionMismatch(SegsynthError):
    pass


class UnsupportedResolution(SegsynthError):
    pass


class EmptyInput(SegsynthError):
    pass


class KTooLarge(SegsynthError):
    pass


# --- metrics ---

class NoDefinedClasses(SegsynthError):
    pass


# --- pipeline ---

class NoBundles(SegsynthError):
    pass


class UnwritableOutput(SegsynthError):
    pass


class UnknownStage(SegsynthError):
    pass


class MissingInput(SegsynthError):
    pass
