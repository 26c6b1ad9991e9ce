"""
Module containing custom errors that are
raised by svcq if something goes wrong.
"""


class SvcqError(RuntimeError):
    """
    Base class of every error raised by svcq.
    """


class InvalidValue(SvcqError, ValueError):
    """
    Error that is raised if a domain object is
    constructed with values violating its invariants.
    """


class MalformedTextGrid(SvcqError):
    """
    Error that is raised if a TextGrid file
    cannot be parsed.
    """

    def __init__(self, message, line=None):
        """
        :param message: Message of the error
        :param line: 1-based line number at which parsing failed
        """
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedEncoding(SvcqError):
    """
    Error that is raised if an alignment file
    is not valid UTF-8.
    """


class MissingTier(SvcqError):
    """
    Error that is raised if a named alignment
    tier is absent from a document.
    """

    def __init__(self, message, tier=None):
        super().__init__(message)
        self.tier = tier


class MalformedJson(SvcqError):
    """
    Error that is raised if a JSON document
    cannot be decoded.
    """


class SchemaViolation(SvcqError):
    """
    Error that is raised if a decoded document
    does not follow the expected schema.
    """


class AlignmentMismatch(SvcqError):
    """
    Error that is raised if an alignment and its
    feature matrix disagree on the utterance length.
    """


class DimensionMismatch(SvcqError):
    """
    Error that is raised if two arrays disagree
    in a dimension that has to match.
    """

    def __init__(self, message, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


DimMismatch = DimensionMismatch


class DimMismatchAcrossCorpus(DimensionMismatch):
    """
    Error that is raised if feature files of one
    corpus have different dimensions.
    """


class ModelMismatch(SvcqError):
    """
    Error that is raised if encoded data does not
    fit the model it is decoded with.
    """


class CodeOutOfRange(SvcqError):
    """
    Error that is raised if a code id is outside
    the vocabulary of its codebook.
    """


class TooFewPoints(SvcqError):
    """
    Error that is raised if fewer training vectors
    than centroids are available.
    """

    def __init__(self, message, tier=None, available=None, required=None):
        """
        :param message: Message of the error
        :param tier: The tier whose codebook could not be trained, if known
        :param available: Number of training vectors
        :param required: Number of centroids requested
        """
        if tier is not None:
            message = f"[{tier}]: {message}"
        super().__init__(message)
        self.tier = tier
        self.available = available
        self.required = required


class NonFiniteData(SvcqError):
    """
    Error that is raised if training data
    contains NaN or Inf values.
    """


class NonFiniteInput(SvcqError):
    """
    Error that is raised if a vector to be
    quantized contains NaN or Inf values.
    """


class ConvergenceError(SvcqError):
    """
    Error that is raised if the Lloyd objective
    increased between two iterations.
    """


class BadMagic(SvcqError):
    """
    Error that is raised if a binary file does
    not start with the expected magic bytes.
    """


class VersionUnsupported(SvcqError):
    """
    Error that is raised if a binary file has
    a format version this release cannot read.
    """


class ChecksumMismatch(SvcqError):
    """
    Error that is raised if the CRC32 trailer of
    a binary file does not match its contents.
    """


class TruncatedFile(SvcqError):
    """
    Error that is raised if a binary file is
    shorter than its header announces.
    """


class EmptySplit(SvcqError):
    """
    Error that is raised if a manifest split
    used for training has no entries.
    """


class ZeroDuration(SvcqError):
    """
    Error that is raised if a bitrate is requested
    for an utterance without duration.
    """


class EmptyInput(SvcqError):
    """
    Error that is raised if an aggregate is
    requested over an empty collection.
    """


class LabelOutOfRange(SvcqError):
    """
    Error that is raised if a probe label does
    not fit the task.
    """


class CorpusError(SvcqError):
    """
    Error that is raised if processing failed for
    one or more entries of a corpus manifest.
    """

    def __init__(self, message, error_dict=None):
        """
        :param message: Message of the error
        :param error_dict: A dict mapping utterance ids
                           to the errors that occurred
        """
        super().__init__(message)
        self.error_dict = error_dict or {}
