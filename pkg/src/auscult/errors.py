"""Exception hierarchy shared across the package."""


class AuscultError(Exception):
    """Base class for all package errors."""


# ingestion
class MalformedFilename(AuscultError, ValueError):
    pass


class UnsupportedEncoding(AuscultError, ValueError):
    pass


class CorruptHeader(AuscultError, ValueError):
    pass


class MalformedLine(AuscultError, ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class UnknownDiagnosis(AuscultError, ValueError):
    pass


class DuplicatePatient(AuscultError, ValueError):
    pass


class MissingMetadata(AuscultError, FileNotFoundError):
    pass


class EmptyDataset(AuscultError, ValueError):
    pass


class InvalidRecording(AuscultError, ValueError):
    pass


# dsp
class InvalidSignal(AuscultError, ValueError):
    pass


class InvalidCutoff(AuscultError, ValueError):
    pass


class EvenTapCount(AuscultError, ValueError):
    pass


class RateMismatch(AuscultError, ValueError):
    pass


class SegmentTooLong(AuscultError, ValueError):
    pass


class FrameTooLong(AuscultError, ValueError):
    pass


# emd / features
class DecompositionDegenerate(AuscultError, RuntimeError):
    pass


class TooFewBeats(AuscultError, ValueError):
    pass


# models
class SingleClassTraining(AuscultError, ValueError):
    pass


class TooFewRows(AuscultError, ValueError):
    pass


class NonFiniteTarget(AuscultError, ValueError):
    pass


class ArityMismatch(AuscultError, ValueError):
    pass


# evaluation
class SinglePatient(AuscultError, ValueError):
    pass


class OneClassOnly(AuscultError, ValueError):
    pass


class FoldError(AuscultError, RuntimeError):
    """A training error raised inside a LOSO fold, tagged with the fold identity."""

    def __init__(self, test_patient, cause):
        super().__init__(f"fold for patient {test_patient} failed: {cause}")
        self.test_patient = test_patient
        self.cause = cause
