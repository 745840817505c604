"""Exception hierarchy shared by all scrub subsystems.

Every error carries a stable ``code`` string so CLI output and logs can be
matched without parsing human-readable messages.
"""

from __future__ import annotations


class ScrubError(Exception):
    """Base class for all toolkit errors."""

    code = "SCRUB_ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class MalformedBundle(ScrubError):
    code = "MALFORMED_BUNDLE"


class EmptyRepository(ScrubError):
    code = "EMPTY_REPOSITORY"


class CallbackFailure(ScrubError):
    code = "CALLBACK_FAILURE"


class EmptyTree(ScrubError):
    code = "EMPTY_TREE"


class NoRefs(ScrubError):
    code = "NO_REFS"


class NetworkError(ScrubError):
    code = "NETWORK"


class RulesFileInvalid(ScrubError):
    code = "RULES_FILE_INVALID"


class EmptyDictionary(ScrubError):
    code = "EMPTY_DICTIONARY"


class NerUnavailable(ScrubError):
    code = "NER_UNAVAILABLE"


class EmptySalt(ScrubError):
    code = "EMPTY_SALT"


class UnmaskableCategory(ScrubError):
    code = "UNMASKABLE_CATEGORY"


class SpanOutOfRange(ScrubError):
    code = "SPAN_OUT_OF_RANGE"


class PostScanResidual(ScrubError):
    code = "POST_SCAN_RESIDUAL"


class UnsupportedLanguage(ScrubError):
    code = "UNSUPPORTED_LANGUAGE"


class EmptyInput(ScrubError):
    code = "EMPTY_INPUT"
