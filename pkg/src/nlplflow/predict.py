"""Propagation prediction for (placeholder x sink) pairs.

Five methods:

* A   - propagate all: answer yes for every pair.
* B   - backend judges from source, prompt template, model output, and sink.
* C   - deterministic rule: yes iff any label falls outside the
        non-propagating set; no backend involved.
* B+  - B's request with the pair's labels and the full label guide prepended.
* C+  - two stages: the C rule first blocks pairs whose labels are all
        non-propagating, then the backend verifies survivors from source code
        and sink location alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import BackendError, MissingLabels, TemplateFieldMissing, UnparseableVerdict
from .pipeline import fill_template, load_prompt_asset
from .taxonomy import Label, LabelSet, definition_text, is_non_propagating, label_metadata


class MethodId(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    BPLUS = "Bplus"
    CPLUS = "Cplus"

    @classmethod
    def parse(cls, text: str) -> "MethodId":
        key = text.strip()
        aliases = {"B+": cls.BPLUS, "C+": cls.CPLUS, "bplus": cls.BPLUS, "cplus": cls.CPLUS}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            try:
                return cls[key.upper()]
            except KeyError:
                raise ValueError(f"unknown method id {text!r}") from None


@dataclass(frozen=True)
class PairContext:
    """Everything a backend-facing method may draw on for one pair."""

    source: str
    sink_line: int
    vuln_type: str
    sink_code: str = ""
    prompt_template: str = ""
    model_output: str = ""
    placeholder_name: str = ""
    placeholder_value: str = ""


@dataclass(frozen=True)
class VerificationRequest:
    method: MethodId
    text: str


def _labels_display(labels: Iterable[Label]) -> str:
    return ", ".join(sorted(label_metadata(l).display_name for l in labels))


def build_verification_request(
    method: MethodId, ctx: PairContext, labels: Optional[LabelSet] = None
) -> VerificationRequest:
    """Instantiate the method's verification prompt.

    The two-stage method's request carries only source code and sink
    information: no prompt template, no model output, no labels.
    """
    if method == MethodId.CPLUS:
        text = fill_template(
            load_prompt_asset("verify.tmpl"),
            {
                "file_contents": ctx.source,
                "sink_line": ctx.sink_line,
                "vuln_type": ctx.vuln_type,
            },
            required=("file_contents", "sink_line", "vuln_type"),
        )
        return VerificationRequest(method, text)
    if method in (MethodId.B, MethodId.BPLUS):
        mapping = {
            "file_contents": ctx.source,
            "prompt_template": ctx.prompt_template,
            "output": ctx.model_output,
            "ph_name": ctx.placeholder_name,
            "ph_value": ctx.placeholder_value,
            "sink_line": ctx.sink_line,
            "sink_code": ctx.sink_code,
            "vuln_type": ctx.vuln_type,
        }
        if not ctx.prompt_template or not ctx.placeholder_name:
            raise TemplateFieldMissing("prompt_template")
        text = fill_template(load_prompt_asset("predict_b.tmpl"), mapping, required=tuple(mapping))
        if method == MethodId.BPLUS:
            if labels is None:
                raise MissingLabels("method B+ requires the pair's labels")
            preamble = fill_template(
                load_prompt_asset("predict_bplus_preamble.tmpl"),
                {
                    "labels": _labels_display(labels),
                    "taxonomy_definition": definition_text(),
                },
                required=("labels", "taxonomy_definition"),
            )
            text = preamble + text
        return VerificationRequest(method, text)
    raise ValueError(f"method {method.value} does not use a verification request")


def parse_verdict(reply: str) -> str:
    """Strict yes/no: the first token (after trim/case-fold) decides."""
    token = reply.strip().split()[0].rstrip(".,!:;\"'") if reply.strip() else ""
    token = token.lstrip("\"'").casefold()
    if token in ("yes", "no"):
        return token
    raise UnparseableVerdict(reply)


class Predictor:
    """Evaluates methods over pairs, memoizing identical request texts."""

    def __init__(self, backend=None, memoize: bool = True):
        self.backend = backend
        self.memoize = memoize
        self._memo: dict[str, str] = {}
        self.backend_calls = 0

    def _ask(self, request: VerificationRequest) -> str:
        if self.memoize and request.text in self._memo:
            return self._memo[request.text]
        if self.backend is None:
            raise BackendError(f"method {request.method.value} requires a backend")
        reply = self.backend.complete("", request.text)
        self.backend_calls += 1
        try:
            verdict = parse_verdict(reply)
        except UnparseableVerdict:
            reply = self.backend.complete("", request.text)
            self.backend_calls += 1
            verdict = parse_verdict(reply)
        if self.memoize:
            self._memo[request.text] = verdict
        return verdict

    def predict(
        self,
        method: MethodId,
        ctx: Optional[PairContext] = None,
        labels: Optional[LabelSet] = None,
    ) -> str:
        if method == MethodId.A:
            return "yes"
        if method == MethodId.C:
            if labels is None:
                raise MissingLabels("method C requires labels")
            return "no" if is_non_propagating(labels) else "yes"
        if ctx is None:
            raise TemplateFieldMissing("pair context")
        if method == MethodId.CPLUS:
            if labels is None:
                raise MissingLabels("method C+ requires labels")
            if is_non_propagating(labels):
                return "no"
            return self._ask(build_verification_request(MethodId.CPLUS, ctx))
        if method == MethodId.B:
            return self._ask(build_verification_request(MethodId.B, ctx))
        if method == MethodId.BPLUS:
            if labels is None:
                raise MissingLabels("method B+ requires labels")
            return self._ask(build_verification_request(MethodId.BPLUS, ctx, labels))
        raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class LabelRate:
    label: Label
    yes: int
    no: int

    @property
    def occurrences(self) -> int:
        return self.yes + self.no

    @property
    def rate(self) -> float:
        return self.yes / self.occurrences


def per_label_rates(
    pairs: Sequence[tuple[str, LabelSet]], min_occurrences: int = 5
) -> list[LabelRate]:
    """Propagation rate per label over ground-truthed pairs.

    Input: (ground_truth, labels) per pair; a pair counts toward every label
    it carries. Labels under the occurrence threshold are omitted. Sorted by
    rate descending, then label id.
    """
    yes: dict[Label, int] = {}
    no: dict[Label, int] = {}
    for ground_truth, labels in pairs:
        if ground_truth not in ("yes", "no"):
            raise ValueError(f"pair lacks yes/no ground truth: {ground_truth!r}")
        bucket = yes if ground_truth == "yes" else no
        for label in labels:
            bucket[label] = bucket.get(label, 0) + 1
    out = []
    for label in set(yes) | set(no):
        rate = LabelRate(label, yes.get(label, 0), no.get(label, 0))
        if rate.occurrences >= min_occurrences:
            out.append(rate)
    return sorted(out, key=lambda r: (-r.rate, r.label.value))
