"""Exception hierarchy shared across the qmlc package."""


class QmlcError(Exception):
    """Base class for all package errors."""


class VocabError(QmlcError):
    """Gate or token not present in the vocabulary."""


class LengthError(QmlcError):
    """Circuit does not fit into the requested grid depth."""


class StructureError(QmlcError):
    """Token grid violates the circuit encoding convention."""


class DimensionError(QmlcError):
    """Shape or dimensionality mismatch."""


class ScaleError(QmlcError):
    """Problem size exceeds the configured desk-scale cap."""


class GateError(QmlcError):
    """Gate outside the supported (Clifford) set."""


class ProbabilityError(QmlcError):
    """Invalid probability vector."""


class EmptyCountsError(QmlcError):
    """Count vector sums to zero."""


class NumericError(QmlcError):
    """Non-finite value where a finite one is required."""


class TrainingError(QmlcError):
    """Optimization diverged or produced NaN losses."""


class SetError(QmlcError):
    """Invalid mini-set (e.g. heterogeneous qubit counts)."""


class EmptySetError(SetError):
    """Mini-set contains no records."""


class CovarianceError(QmlcError):
    """Covariance diagonal is not strictly positive."""


class DomainError(QmlcError):
    """Argument outside its mathematical domain."""


class ConfigError(QmlcError):
    """Invalid run configuration."""


class CheckpointError(QmlcError):
    """Checkpoint is unreadable or does not match the config."""


class SynthesisExhausted(QmlcError):
    """No acceptable circuit found within the attempt budget.

    Carries the best-effort result so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
