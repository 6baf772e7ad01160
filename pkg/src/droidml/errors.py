"""Exception types raised by the toolkit.

Every error raised on bad input or misuse derives from :class:`ToolkitError`,
so callers can catch a single type at API boundaries. Parse errors carry the
location (byte offset or line number) of the failing input where that is
knowable.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# Static extraction (APK container, manifest, dex, auxiliary data files)


class NotAZip(ToolkitError):
    """The input file is not a readable ZIP container."""


class MissingManifest(ToolkitError):
    """The archive has no AndroidManifest.xml entry at the root."""


class MalformedManifest(ToolkitError):
    """The binary AndroidManifest.xml could not be decoded."""

    def __init__(self, offset: int, reason: str = "") -> None:
        self.offset = offset
        msg = f"malformed binary manifest at offset {offset}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class MalformedDex(ToolkitError):
    """A dex entry could not be decoded."""

    def __init__(self, file: str, offset: int, reason: str = "") -> None:
        self.file = file
        self.offset = offset
        msg = f"malformed dex {file!r} at offset {offset}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class MalformedPatternFile(ToolkitError):
    """A restricted/suspicious API list file has an invalid line."""

    def __init__(self, line: int, reason: str = "") -> None:
        self.line = line
        msg = f"bad pattern file line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class MalformedMapFile(ToolkitError):
    """An API-to-permission map file has an invalid line."""

    def __init__(self, line: int, reason: str = "") -> None:
        self.line = line
        msg = f"bad map file line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class SchemaViolation(ToolkitError):
    """A JSON document does not match its expected schema."""

    def __init__(self, pointer: str, reason: str = "") -> None:
        self.pointer = pointer
        msg = f"schema violation at {pointer}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class InvalidRecord(ToolkitError):
    """A feature record value violates the record grammar."""


# ---------------------------------------------------------------------------
# Dynamic trace ingestion


class MalformedTraceLine(ToolkitError):
    """A strace line matches no known production."""

    def __init__(self, line_number: int, text: str = "") -> None:
        self.line_number = line_number
        msg = f"unrecognized trace line {line_number}"
        if text:
            msg += f": {text[:120]!r}"
        super().__init__(msg)


class MalformedPcap(ToolkitError):
    """A capture file could not be decoded."""

    def __init__(self, offset: int, reason: str = "") -> None:
        self.offset = offset
        msg = f"malformed capture at offset {offset}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyCapture(ToolkitError):
    """The capture holds no TCP packets, so flow features are undefined."""


class MalformedLogLine(ToolkitError):
    """An API log line could not be parsed."""

    def __init__(self, line_number: int, text: str = "") -> None:
        self.line_number = line_number
        msg = f"unrecognized log line {line_number}"
        if text:
            msg += f": {text[:120]!r}"
        super().__init__(msg)


# ---------------------------------------------------------------------------
# Encoding


class EmptyVocabulary(ToolkitError):
    """Vocabulary construction found no feature meeting min_support."""


class RowMismatch(ToolkitError):
    """Two matrices being combined disagree on their row ids."""


class ColumnCollision(ToolkitError):
    """Concatenation would produce a duplicate vocabulary name."""


class RouteExplosion(ToolkitError):
    """Call-graph route enumeration exceeded the configured cap."""


# ---------------------------------------------------------------------------
# Selection, models, evaluation


class InvalidParameter(ToolkitError):
    """A numeric parameter is outside its documented range."""


class DegenerateLabels(ToolkitError):
    """The label vector holds fewer than two classes."""


class ClassTooSmall(ToolkitError):
    """A class has fewer members than the number of folds."""


class KOutOfRange(ToolkitError):
    """Requested top-k is not in [1, number of columns]."""


class DimensionMismatch(ToolkitError):
    """Rows, labels, or score lengths do not line up."""


class VocabMismatch(ToolkitError):
    """A fitted model was given a matrix with a different vocabulary."""


class NotFittedError(ToolkitError):
    """An estimator method that requires fit() was called before fit()."""


class EmptyConfusion(ToolkitError):
    """Metrics were requested for a confusion matrix with zero total."""


class DegenerateGroups(ToolkitError):
    """A statistical test needs at least two non-empty groups."""


class LeakageError(ToolkitError):
    """A selector saw rows outside the training fold it was fitted for."""


# ---------------------------------------------------------------------------
# Ensembles


class EvenMembership(ToolkitError):
    """Majority voting requires an odd number of member predictions."""


class LengthMismatch(ToolkitError):
    """Member prediction vectors differ in length."""


class TooManyBases(ToolkitError):
    """Ensemble enumeration would exceed the subset cap."""


class FingerprintMismatch(ToolkitError):
    """Stored artifacts disagree on fold, vocabulary, or input fingerprints."""


# ---------------------------------------------------------------------------
# CLI


class ConfigError(ToolkitError):
    """The run configuration is missing or invalid."""


class ManifestError(ToolkitError):
    """The dataset manifest CSV is missing or invalid."""


class SpecError(ToolkitError):
    """A fixture generation spec is invalid."""
