"""Record types persisted by the corpus store.

Every record serializes to one JSON object per line with snake_case field
names, and carries a stable content-derived id used for deduplication and
checkpoint resume.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from .errors import EmptyLabelSet


def content_hash(*parts: object) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()[:16]


def source_digest(source: str) -> str:
    """Digest of file contents, normalized to \\n line endings."""
    normalized = source.replace("\r\n", "\n").replace("\r", "\n")
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()[:16]


class ExtractionKind(str, Enum):
    FSTRING = "fstring"
    FORMAT_CALL = "format_call"
    CONCATENATION = "concatenation"
    TEMPLATE_ENGINE = "template_engine"


class Framework(str, Enum):
    DIRECT_API = "direct_api"
    FRAMEWORK_WRAPPED = "framework_wrapped"
    UNKNOWN = "unknown"


class SinkKind(str, Enum):
    EXEC = "exec"
    EVAL = "eval"
    SUBPROCESS = "subprocess"
    SQL_EXECUTE = "sql_execute"
    HTTP_REQUEST = "http_request"
    UNSAFE_YAML_LOAD = "unsafe_yaml_load"


class Cwe(str, Enum):
    CWE94 = "CWE-94"
    CWE89 = "CWE-89"
    CWE78 = "CWE-78"
    CWE918 = "CWE-918"
    CWE502 = "CWE-502"


# Fixed sink-to-CWE mapping; extract_sinks never emits a pair outside it.
SINK_CWE: dict[SinkKind, Cwe] = {
    SinkKind.EXEC: Cwe.CWE94,
    SinkKind.EVAL: Cwe.CWE94,
    SinkKind.SUBPROCESS: Cwe.CWE78,
    SinkKind.SQL_EXECUTE: Cwe.CWE89,
    SinkKind.HTTP_REQUEST: Cwe.CWE918,
    SinkKind.UNSAFE_YAML_LOAD: Cwe.CWE502,
}


class Labeler(str, Enum):
    LLM_BACKEND = "llm_backend"
    MOCK_BACKEND = "mock_backend"
    HUMAN = "human"


class Stage(str, Enum):
    RENDER = "render"
    GENERATE = "generate"
    LABEL = "label"
    PREDICT = "predict"


METHOD_IDS = ("A", "B", "C", "Bplus", "Cplus")


@dataclass(frozen=True)
class Span:
    file: str
    start_line: int
    end_line: int

    def __post_init__(self):
        if self.start_line < 1 or self.end_line < self.start_line:
            raise ValueError(f"invalid span {self.start_line}..{self.end_line}")

    def to_dict(self) -> dict:
        return {"file": self.file, "start_line": self.start_line, "end_line": self.end_line}

    @classmethod
    def from_dict(cls, d: dict) -> "Span":
        return cls(d["file"], d["start_line"], d["end_line"])


@dataclass(frozen=True)
class Placeholder:
    original_expression: str
    guessed_value: str
    extraction_kind: ExtractionKind
    span: Span
    variable_names: frozenset[str]

    def __post_init__(self):
        if not self.original_expression:
            raise ValueError("placeholder original_expression must be non-empty")

    def to_dict(self) -> dict:
        return {
            "original_expression": self.original_expression,
            "guessed_value": self.guessed_value,
            "extraction_kind": self.extraction_kind.value,
            "span": self.span.to_dict(),
            "variable_names": sorted(self.variable_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Placeholder":
        return cls(
            original_expression=d["original_expression"],
            guessed_value=d.get("guessed_value", ""),
            extraction_kind=ExtractionKind(d["extraction_kind"]),
            span=Span.from_dict(d["span"]),
            variable_names=frozenset(d.get("variable_names", ())),
        )


@dataclass(frozen=True)
class Callsite:
    callsite_id: str
    file: str
    line: int
    callee: str
    framework: Framework
    rendered_prompt: str
    placeholders: tuple[Placeholder, ...]

    def __post_init__(self):
        if self.line < 1:
            raise ValueError("callsite line must be positive")
        if self.rendered_prompt:
            for ph in self.placeholders:
                if ph.guessed_value and ph.guessed_value not in self.rendered_prompt:
                    raise ValueError(
                        f"guessed value for {ph.original_expression!r} missing from rendered prompt"
                    )

    @property
    def record_id(self) -> str:
        return self.callsite_id

    def to_dict(self) -> dict:
        return {
            "callsite_id": self.callsite_id,
            "file": self.file,
            "line": self.line,
            "callee": self.callee,
            "framework": self.framework.value,
            "rendered_prompt": self.rendered_prompt,
            "placeholders": [p.to_dict() for p in self.placeholders],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Callsite":
        return cls(
            callsite_id=d["callsite_id"],
            file=d["file"],
            line=d["line"],
            callee=d["callee"],
            framework=Framework(d["framework"]),
            rendered_prompt=d.get("rendered_prompt", ""),
            placeholders=tuple(Placeholder.from_dict(p) for p in d.get("placeholders", ())),
        )


def make_callsite_id(source: str, line: int, callee: str, ordinal: int = 0) -> str:
    """Stable id: same (file contents, line, callee) always hashes the same.

    The ordinal disambiguates multiple calls to the same callee on one line.
    """
    return content_hash(source_digest(source), line, callee, ordinal)


@dataclass(frozen=True)
class Triple:
    callsite_id: str
    placeholder_index: int
    rendered_prompt: str
    model_output: str
    generator_model: str

    @property
    def triple_id(self) -> str:
        return f"{self.callsite_id}#{self.placeholder_index}"

    record_id = triple_id

    def to_dict(self) -> dict:
        return {
            "callsite_id": self.callsite_id,
            "placeholder_index": self.placeholder_index,
            "rendered_prompt": self.rendered_prompt,
            "model_output": self.model_output,
            "generator_model": self.generator_model,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Triple":
        return cls(
            callsite_id=d["callsite_id"],
            placeholder_index=d["placeholder_index"],
            rendered_prompt=d["rendered_prompt"],
            model_output=d["model_output"],
            generator_model=d.get("generator_model", ""),
        )


@dataclass(frozen=True)
class EvidenceItem:
    label: str
    quote: str
    why: str
    non_verbatim: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "quote": self.quote,
            "why": self.why,
            "non_verbatim": self.non_verbatim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceItem":
        return cls(d["label"], d.get("quote", ""), d.get("why", ""), d.get("non_verbatim", False))


@dataclass(frozen=True)
class LabelAssignment:
    triple_id: str
    labels: tuple[str, ...]
    evidence: tuple[EvidenceItem, ...]
    labeler: Labeler

    def __post_init__(self):
        if not self.labels:
            raise EmptyLabelSet(f"assignment for {self.triple_id} has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in assignment for {self.triple_id}")
        covered = {e.label for e in self.evidence}
        missing = [l for l in self.labels if l not in covered]
        if missing:
            raise ValueError(f"labels without evidence for {self.triple_id}: {missing}")

    @property
    def record_id(self) -> str:
        return self.triple_id

    def to_dict(self) -> dict:
        return {
            "triple_id": self.triple_id,
            "labels": list(self.labels),
            "evidence": [e.to_dict() for e in self.evidence],
            "labeler": self.labeler.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelAssignment":
        return cls(
            triple_id=d["triple_id"],
            labels=tuple(d["labels"]),
            evidence=tuple(EvidenceItem.from_dict(e) for e in d.get("evidence", ())),
            labeler=Labeler(d["labeler"]),
        )


@dataclass(frozen=True)
class SinkOccurrence:
    file: str
    line: int
    sink_kind: SinkKind
    cwe: Cwe
    snippet: str

    def __post_init__(self):
        if SINK_CWE[self.sink_kind] != self.cwe:
            raise ValueError(f"sink kind {self.sink_kind.value} cannot map to {self.cwe.value}")

    @property
    def sink_id(self) -> str:
        return content_hash(self.file, self.line, self.sink_kind.value)

    record_id = sink_id

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "line": self.line,
            "sink_kind": self.sink_kind.value,
            "cwe": self.cwe.value,
            "snippet": self.snippet,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SinkOccurrence":
        return cls(
            file=d["file"],
            line=d["line"],
            sink_kind=SinkKind(d["sink_kind"]),
            cwe=Cwe(d["cwe"]),
            snippet=d.get("snippet", ""),
        )


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    callsite_id: str
    placeholder_index: int
    sink_file: str
    sink_line: int
    sink_kind: SinkKind
    ground_truth: Optional[str] = None  # "yes" | "no"
    annotator_votes: Optional[tuple[str, ...]] = None
    predictions: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.ground_truth is not None and self.ground_truth not in ("yes", "no"):
            raise ValueError(f"ground_truth must be yes/no, got {self.ground_truth!r}")
        if self.annotator_votes is not None:
            votes = self.annotator_votes
            if len(votes) % 2 == 0:
                raise ValueError("annotator vote count must be odd")
            if any(v not in ("yes", "no") for v in votes):
                raise ValueError("annotator votes must be yes/no")
            majority = "yes" if votes.count("yes") > votes.count("no") else "no"
            if self.ground_truth is not None and self.ground_truth != majority:
                raise ValueError("ground_truth must equal the majority vote")
        for method, verdict in self.predictions.items():
            if method not in METHOD_IDS:
                raise ValueError(f"unknown prediction method {method!r}")
            if verdict not in ("yes", "no"):
                raise ValueError(f"prediction verdict must be yes/no, got {verdict!r}")

    @property
    def record_id(self) -> str:
        return self.pair_id

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "callsite_id": self.callsite_id,
            "placeholder_index": self.placeholder_index,
            "sink_file": self.sink_file,
            "sink_line": self.sink_line,
            "sink_kind": self.sink_kind.value,
            "ground_truth": self.ground_truth,
            "annotator_votes": list(self.annotator_votes) if self.annotator_votes else None,
            "predictions": dict(sorted(self.predictions.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairRecord":
        votes = d.get("annotator_votes")
        return cls(
            pair_id=d["pair_id"],
            callsite_id=d["callsite_id"],
            placeholder_index=d["placeholder_index"],
            sink_file=d["sink_file"],
            sink_line=d["sink_line"],
            sink_kind=SinkKind(d["sink_kind"]),
            ground_truth=d.get("ground_truth"),
            annotator_votes=tuple(votes) if votes else None,
            predictions=dict(d.get("predictions", {})),
        )


def make_pair_id(callsite_id: str, placeholder_index: int, sink_file: str, sink_line: int, sink_kind: SinkKind) -> str:
    return content_hash(callsite_id, placeholder_index, sink_file, sink_line, sink_kind.value)


@dataclass(frozen=True)
class SliceRecord:
    """Per-file slice outcome: full vs. barrier-pruned backward slice."""

    file: str
    criterion: tuple[str, ...]  # callsite ids
    full_lines: frozenset[int]
    barriered_lines: frozenset[int]
    barrier_variables: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.barriered_lines <= self.full_lines:
            raise ValueError("barriered_lines must be a subset of full_lines")

    @property
    def cut_lines(self) -> frozenset[int]:
        return self.full_lines - self.barriered_lines

    @property
    def reduction(self) -> float:
        if not self.full_lines:
            return 0.0
        return len(self.cut_lines) / len(self.full_lines)

    @property
    def record_id(self) -> str:
        return content_hash(self.file, *sorted(self.criterion))

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "criterion": list(self.criterion),
            "full_lines": sorted(self.full_lines),
            "barriered_lines": sorted(self.barriered_lines),
            "cut_lines": sorted(self.cut_lines),
            "reduction": self.reduction,
            "barrier_variables": list(self.barrier_variables),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SliceRecord":
        return cls(
            file=d["file"],
            criterion=tuple(d["criterion"]),
            full_lines=frozenset(d["full_lines"]),
            barriered_lines=frozenset(d["barriered_lines"]),
            barrier_variables=tuple(d.get("barrier_variables", ())),
        )


@dataclass(frozen=True)
class Diagnostic:
    """A recorded per-file problem (parse failure etc.); never aborts a batch."""

    file: str
    message: str
    line: Optional[int] = None

    @property
    def record_id(self) -> str:
        return content_hash(self.file, self.message, self.line)

    def to_dict(self) -> dict:
        return {"file": self.file, "message": self.message, "line": self.line}

    @classmethod
    def from_dict(cls, d: dict) -> "Diagnostic":
        return cls(d["file"], d["message"], d.get("line"))


RECORD_TYPES: dict[str, type] = {
    "Callsite": Callsite,
    "Triple": Triple,
    "LabelAssignment": LabelAssignment,
    "SinkOccurrence": SinkOccurrence,
    "PairRecord": PairRecord,
    "SliceRecord": SliceRecord,
    "Diagnostic": Diagnostic,
}


def record_type_name(record: Any) -> str:
    name = type(record).__name__
    if name not in RECORD_TYPES:
        raise TypeError(f"not a persistable record type: {name}")
    return name
