"""Exception types shared across the package.

Kept in one module so that layers can raise each other's errors without
circular imports.
"""


class SoapNasError(Exception):
    """Base class for all package errors."""


class BadConfig(SoapNasError):
    """A configuration value violates its documented constraints."""


class InvalidArchitecture(SoapNasError):
    """An operation was handed a cell that fails validation."""


class SpaceTooLarge(SoapNasError):
    """Enumeration was requested for a space above the raw-graph guard."""


class NoValidNeighbor(SoapNasError):
    """No single edit of a cell produces a valid, distinct cell."""


class ShapeMismatch(SoapNasError):
    """Tensor or parameter shapes are inconsistent."""


class DimensionMismatch(SoapNasError):
    """Feature vector length differs from the model's training dimension."""


class BadGhostSize(SoapNasError):
    """Batch size is not divisible by the ghost batch size."""


class NumericalDivergence(SoapNasError):
    """Training produced a non-finite loss."""


class LengthMismatch(SoapNasError):
    """Paired lists have different lengths."""


class SingleClass(SoapNasError):
    """ROC metrics need both a positive and a negative example."""


class DegenerateInput(SoapNasError):
    """A correlation is undefined on the given input (e.g. constant list)."""


class InsufficientData(SoapNasError):
    """Too few observations for the requested estimate."""


class FormatError(SoapNasError):
    """A binary or text artifact is malformed."""


class IoError(SoapNasError):
    """Reading or writing an artifact failed at the OS level."""


class ModelMissing(SoapNasError):
    """A trained model artifact is required but absent."""


class MissingArtifact(SoapNasError):
    """A pipeline stage needs an artifact that has not been produced."""


class StageError(SoapNasError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
