"""Shared exception types for the nlplflow toolchain."""

from __future__ import annotations


class NlplFlowError(Exception):
    """Base class for all toolchain errors."""


class UnknownLabel(NlplFlowError):
    """A label string does not name any of the 24 canonical flow labels."""

    def __init__(self, text: str):
        super().__init__(f"unknown flow label: {text!r}")
        self.text = text


class EmptyLabelSet(NlplFlowError):
    """A label set was empty; the labeler contract guarantees at least one label."""


class SchemaMismatch(NlplFlowError):
    """A JSONL file's header schema_version or record type does not match."""


class SourceParseError(NlplFlowError):
    """A source file failed to parse; it is skipped and recorded as a diagnostic."""

    def __init__(self, path: str, message: str, line: int | None = None):
        loc = f"{path}:{line}" if line else path
        super().__init__(f"parse error in {loc}: {message}")
        self.path = path
        self.line = line


class BackendError(NlplFlowError):
    """A backend request failed after exhausting retries."""


class RateLimited(BackendError):
    """The backend signalled rate limiting; retried with backoff before surfacing."""


class MalformedBackendOutput(NlplFlowError):
    """The backend reply could not be parsed into the expected structure."""


class MissingLabels(NlplFlowError):
    """An operation that requires taxonomy labels was invoked without them."""


class UnparseableVerdict(NlplFlowError):
    """A yes/no verdict reply did not start with a yes or no token."""

    def __init__(self, reply: str):
        super().__init__(f"verdict reply is not yes/no: {reply[:120]!r}")
        self.reply = reply


class TemplateFieldMissing(NlplFlowError):
    """A prompt template slot had no value in the provided context."""

    def __init__(self, field: str):
        super().__init__(f"missing template field: {field}")
        self.field = field


class UnknownCriterionNode(NlplFlowError):
    """A slice criterion node id is not present in the dependency graph."""


class DegenerateMarginals(NlplFlowError):
    """Kappa is undefined: expected agreement is 1 with imperfect observed agreement."""
