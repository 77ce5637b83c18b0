"""Exception types shared across the pipeline.

The CLI maps these onto process exit codes: anything data-shaped exits 2,
a training abort exits 3, bad usage exits 1.
"""


class EdmttError(Exception):
    """Base class for all pipeline errors."""


# --- data / ingestion ---

class MissingColumn(EdmttError):
    pass


class NonFiniteValue(EdmttError):
    pass


class EmptySequence(EdmttError):
    pass


class OutOfRangeLabel(EdmttError):
    pass


class SequenceTooShort(EdmttError):
    pass


class EmptyDataset(EdmttError):
    pass


class InvalidDistribution(EdmttError):
    pass


# --- sampling ---

class DegenerateClassDistribution(EdmttError):
    pass


# --- model / losses ---

class ShapeMismatch(EdmttError):
    pass


class NonFiniteActivation(EdmttError):
    pass


class DimensionMismatch(EdmttError):
    pass


class EmptyBatch(EdmttError):
    pass


class LengthMismatch(EdmttError):
    pass


# --- checkpoints ---

class UnsupportedVersion(EdmttError):
    pass


class CorruptCheckpoint(EdmttError):
    pass


# --- hyperparameter search ---

class BudgetExceedsSpace(EdmttError):
    pass
