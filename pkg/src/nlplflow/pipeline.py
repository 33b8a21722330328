"""Render/generate/label stages over callsites, driven by a pluggable backend.

Work items are independent; run_stage executes them with bounded parallelism,
appending each completion to the output file and the stage checkpoint before
counting it, so an interrupted run can resume with only the remainder.
"""

from __future__ import annotations

import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .backends import MockBackend
from .errors import (
    BackendError,
    MalformedBackendOutput,
    NlplFlowError,
    TemplateFieldMissing,
    UnknownLabel,
)
from .extract import CallsiteExtraction, render_template
from .records import (
    Callsite,
    EvidenceItem,
    LabelAssignment,
    Labeler,
    Placeholder,
    Stage,
    Triple,
)
from .store import Checkpoint, append_records, load_checkpoint, resume_filter, save_checkpoint
from .taxonomy import parse_label

_SLOT = re.compile(r"\{(\w+)\}")


def load_prompt_asset(name: str) -> str:
    return resources.files(__package__).joinpath("prompts").joinpath(name).read_text("utf-8")


def fill_template(template: str, mapping: dict[str, Any], required: Sequence[str] = ()) -> str:
    """Substitute {name} slots; unlisted braces are left untouched.

    Values are inserted verbatim and never re-scanned, so braces inside values
    cannot trigger further substitution.
    """
    for name in required:
        if name not in mapping:
            raise TemplateFieldMissing(name)

    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name in mapping:
            return str(mapping[name])
        return match.group(0)

    return _SLOT.sub(repl, template)


def _norm_ws(text: str) -> str:
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# Phase 1: reconstruction (guess values, render the prompt)
# ---------------------------------------------------------------------------


def build_reconstruct_request(source: str, callsite: Callsite) -> tuple[str, str]:
    system = load_prompt_asset("reconstruct.txt")
    expressions = [p.original_expression for p in callsite.placeholders]
    user = (
        "[SOURCE CODE]\n"
        + source
        + "\n\n[PLACEHOLDER EXPRESSIONS]\n"
        + json.dumps(expressions, ensure_ascii=False)
    )
    return system, user


def _parse_reconstruct_reply(reply: str, callsite: Callsite) -> list[str]:
    try:
        data = json.loads(reply)
        entries = data["placeholders"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedBackendOutput(f"reconstruction reply not parseable: {exc}") from exc
    by_expr: dict[str, str] = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise MalformedBackendOutput("reconstruction entry is not an object")
        by_expr[entry.get("original_expression", "")] = str(entry.get("guessed_value", ""))
    values = []
    for ph in callsite.placeholders:
        value = by_expr.get(ph.original_expression, "")
        if not value:
            raise MalformedBackendOutput(
                f"no guessed value for placeholder {ph.original_expression!r}"
            )
        values.append(value)
    return values


def reconstruct_callsite(source: str, extraction: CallsiteExtraction, backend) -> Callsite:
    """Fill guessed values and the rendered prompt for one callsite.

    The prompt text itself is rendered locally from the recovered template, so
    every guessed value is a substring of the rendered prompt by construction.
    Zero-placeholder callsites render without any backend call.
    """
    callsite = extraction.callsite
    if not callsite.placeholders:
        rendered = render_template(extraction, [])
        return Callsite(
            callsite_id=callsite.callsite_id,
            file=callsite.file,
            line=callsite.line,
            callee=callsite.callee,
            framework=callsite.framework,
            rendered_prompt=rendered,
            placeholders=(),
        )
    system, user = build_reconstruct_request(source, callsite)
    reply = backend.complete(system, user)
    values = _parse_reconstruct_reply(reply, callsite)
    rendered = render_template(extraction, values)
    placeholders = tuple(
        Placeholder(
            original_expression=ph.original_expression,
            guessed_value=value,
            extraction_kind=ph.extraction_kind,
            span=ph.span,
            variable_names=ph.variable_names,
        )
        for ph, value in zip(callsite.placeholders, values)
    )
    return Callsite(
        callsite_id=callsite.callsite_id,
        file=callsite.file,
        line=callsite.line,
        callee=callsite.callee,
        framework=callsite.framework,
        rendered_prompt=rendered,
        placeholders=placeholders,
    )


# ---------------------------------------------------------------------------
# Phase 1: output generation
# ---------------------------------------------------------------------------


def generate_output(rendered_prompt: str, backend) -> str:
    """Send the rendered prompt as-is and return the reply text."""
    if not rendered_prompt:
        raise ValueError("rendered prompt must be non-empty")
    return backend.complete("", rendered_prompt)


def triples_for_callsite(callsite: Callsite, model_output: str, generator_model: str) -> list[Triple]:
    return [
        Triple(
            callsite_id=callsite.callsite_id,
            placeholder_index=i,
            rendered_prompt=callsite.rendered_prompt,
            model_output=model_output,
            generator_model=generator_model,
        )
        for i in range(len(callsite.placeholders))
    ]


# ---------------------------------------------------------------------------
# Phase 2: labeling
# ---------------------------------------------------------------------------


def build_label_request(placeholder: Placeholder, triple: Triple) -> tuple[str, str]:
    system = load_prompt_asset("label_system.txt")
    placeholders_json = json.dumps(
        [
            {
                "original_expression": placeholder.original_expression,
                "guessed_value": placeholder.guessed_value,
            }
        ],
        ensure_ascii=False,
    )
    user = fill_template(
        load_prompt_asset("label_user.tmpl"),
        {
            "placeholders_json": placeholders_json,
            "rendered_prompt": triple.rendered_prompt,
            "model_output": triple.model_output,
        },
        required=("placeholders_json", "rendered_prompt", "model_output"),
    )
    return system, user


def _parse_label_reply(reply: str, placeholder: Placeholder, triple: Triple, labeler: Labeler) -> LabelAssignment:
    try:
        data = json.loads(reply)
        entries = data["labels"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedBackendOutput(f"label reply not parseable: {exc}") from exc
    entry = None
    for candidate in entries:
        if isinstance(candidate, dict) and candidate.get("original_expression") == placeholder.original_expression:
            entry = candidate
            break
    if entry is None and entries and isinstance(entries[0], dict):
        entry = entries[0]
    if entry is None:
        raise MalformedBackendOutput("label reply contains no placeholder entries")

    raw_labels = entry.get("assigned_labels") or []
    if not raw_labels:
        raise MalformedBackendOutput("label reply assigned no labels")
    labels = tuple(dict.fromkeys(parse_label(l).value for l in raw_labels))

    norm_output = _norm_ws(triple.model_output)
    evidence: list[EvidenceItem] = []
    for item in entry.get("evidence") or []:
        label = parse_label(item.get("label", "")).value
        quote = str(item.get("quote", ""))
        verbatim = _norm_ws(quote) in norm_output if quote else True
        evidence.append(
            EvidenceItem(
                label=label,
                quote=quote,
                why=str(item.get("why", "")),
                non_verbatim=not verbatim,
            )
        )
    covered = {e.label for e in evidence}
    for label in labels:
        if label not in covered:
            raise MalformedBackendOutput(f"label {label} has no evidence entry")
    return LabelAssignment(
        triple_id=triple.triple_id, labels=labels, evidence=tuple(evidence), labeler=labeler
    )


def label_triple(triple: Triple, placeholder: Placeholder, backend) -> LabelAssignment:
    """Ask the backend for taxonomy labels; one reprompt on malformed output."""
    system, user = build_label_request(placeholder, triple)
    labeler = Labeler.MOCK_BACKEND if isinstance(backend, MockBackend) else Labeler.LLM_BACKEND
    reply = backend.complete(system, user)
    try:
        return _parse_label_reply(reply, placeholder, triple, labeler)
    except (MalformedBackendOutput, UnknownLabel):
        reply = backend.complete(system, user)
        return _parse_label_reply(reply, placeholder, triple, labeler)


# ---------------------------------------------------------------------------
# Stage runner with bounded concurrency and checkpoint resume
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageReport:
    stage: Stage
    completed: int
    failed: int
    skipped: int
    errors: tuple[tuple[str, str], ...] = ()  # (item id, message)


_HANDLED = (BackendError, MalformedBackendOutput, UnknownLabel, NlplFlowError, ValueError)


def run_stage(
    stage: Stage,
    items: Sequence[Any],
    worker: Callable[[Any], Sequence[Any]],
    *,
    out_path: str | Path,
    checkpoint_file: str | Path,
    id_of: Callable[[Any], str],
    jobs: int = 1,
) -> StageReport:
    """Process pending items; append each item's records then checkpoint it.

    Per-item failures are recorded and do not abort the run; unexpected
    exceptions (including simulated kills) propagate after in-flight work
    settles, leaving the checkpoint consistent for resume.
    """
    checkpoint = load_checkpoint(checkpoint_file, stage)
    pending = resume_filter(checkpoint, list(items), id_of)
    skipped = len(items) - len(pending)
    completed = 0
    failures: list[tuple[str, str]] = []
    write_lock = threading.Lock()

    def finish(item_id: str, records: Sequence[Any]) -> None:
        nonlocal checkpoint, completed
        with write_lock:
            if records:
                append_records(out_path, records, dedupe=True)
            checkpoint = Checkpoint(
                stage=stage,
                completed_ids=checkpoint.completed_ids | {item_id},
                created_at=checkpoint.created_at,
            )
            save_checkpoint(checkpoint_file, checkpoint)
            completed += 1

    if jobs <= 1:
        for item in pending:
            item_id = id_of(item)
            try:
                records = worker(item)
            except _HANDLED as exc:
                failures.append((item_id, str(exc)))
                continue
            finish(item_id, records)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(worker, item): id_of(item) for item in pending}
            fatal: Exception | None = None
            for future in futures:
                item_id = futures[future]
                try:
                    records = future.result()
                except _HANDLED as exc:
                    failures.append((item_id, str(exc)))
                    continue
                except BaseException as exc:  # fatal: surface after the pool drains
                    fatal = exc if isinstance(exc, Exception) else None
                    if fatal is None:
                        raise
                    continue
                finish(item_id, records)
            if fatal is not None:
                raise fatal
    return StageReport(
        stage=stage,
        completed=completed,
        failed=len(failures),
        skipped=skipped,
        errors=tuple(failures),
    )
