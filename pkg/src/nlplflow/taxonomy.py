"""The 24-label flow taxonomy for placeholder-to-output relationships.

Each label describes how a prompt placeholder's content shows up (or fails to
show up) in the model output. Labels are organized along two dimensions:

* a preservation level (L0 blocked/absent up to L4 lexically preserved), and
* a group (A..H) that fixes the level set for its members.

Four labels form the non-propagating set: when every label on a placeholder
belongs to it, the model output carries no trace of the placeholder's content
and downstream flows can be pruned.

All data here is immutable after import and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from importlib import resources
from typing import FrozenSet, Iterable, Union

from .errors import EmptyLabelSet, UnknownLabel

TAXONOMY_SCHEMA_VERSION = 1


class PreservationLevel(IntEnum):
    """How much of the placeholder's content survives into the output."""

    L0 = 0  # blocked or absent
    L1 = 1  # reduced to a signal (boolean, score, category)
    L2 = 2  # lossy compression, key content retained
    L3 = 3  # meaning preserved, surface form changed
    L4 = 4  # lexically preserved


class LabelGroup(Enum):
    A_Verbatim = "A_Verbatim"
    B_Rewrite = "B_Rewrite"
    C_Compression = "C_Compression"
    D_Format = "D_Format"
    E_Decision = "E_Decision"
    F_Generation = "F_Generation"
    G_Gating = "G_Gating"
    H_WeakNone = "H_WeakNone"


class Label(Enum):
    """Canonical ids of the 24 flow labels."""

    FRAGMENT_COPY = "FragmentCopy"
    TEMPLATE_SLOTTING = "TemplateSlotting"
    KEYWORD_ECHO = "KeywordEcho"
    PARAPHRASE_REWRITE = "ParaphraseRewrite"
    PERSONA_REWRITING = "PersonaRewriting"
    TRANSLATION = "Translation"
    STANDALONE_QUESTION_REWRITE = "StandaloneQuestionRewrite"
    GENERAL_SUMMARIZATION = "GeneralSummarization"
    EVIDENCE_CONSTRAINED_SUMMARY = "EvidenceConstrainedSummary"
    JSON_ONLY_TEMPLATE = "JsonOnlyTemplate"
    NON_JSON_TEMPLATE = "NonJsonTemplate"
    BINARY_DECISION = "BinaryDecision"
    COMPUTED_NUMBER = "ComputedNumber"
    CATEGORY_LABEL = "CategoryLabel"
    RANKING = "Ranking"
    CONTENT_EXPANSION = "ContentExpansion"
    CODE_SNIPPET = "CodeSnippet"
    CLI_COMMANDS = "CliCommands"
    MISSING_CONTEXT = "MissingContext"
    MISSING_CAPABILITIES = "MissingCapabilities"
    POLICY_REFUSAL = "PolicyRefusal"
    MOSTLY_COMMON_KNOWLEDGE = "MostlyCommonKnowledge"
    IGNORED = "Ignored"
    UNCLASSIFIABLE = "Unclassifiable"


LabelSet = FrozenSet[Label]

_ALL_LEVELS = frozenset(PreservationLevel)
_SPAN_L1_L4 = frozenset(
    {PreservationLevel.L1, PreservationLevel.L2, PreservationLevel.L3, PreservationLevel.L4}
)

# Level set per group. Groups D and F span L1-L4 because output formatting and
# content generation can coexist with any degree of input preservation.
GROUP_LEVELS: dict[LabelGroup, frozenset[PreservationLevel]] = {
    LabelGroup.A_Verbatim: frozenset({PreservationLevel.L4}),
    LabelGroup.B_Rewrite: frozenset({PreservationLevel.L3}),
    LabelGroup.C_Compression: frozenset({PreservationLevel.L2}),
    LabelGroup.D_Format: _SPAN_L1_L4,
    LabelGroup.E_Decision: frozenset({PreservationLevel.L1}),
    LabelGroup.F_Generation: _SPAN_L1_L4,
    LabelGroup.G_Gating: frozenset({PreservationLevel.L0}),
    LabelGroup.H_WeakNone: frozenset({PreservationLevel.L0}),
}


@dataclass(frozen=True)
class LabelInfo:
    """Static metadata for one label: group, level set, names, description."""

    label: Label
    group: LabelGroup
    levels: frozenset[PreservationLevel]
    display_name: str
    description: str
    aliases: tuple[str, ...] = ()


_ROWS: tuple[tuple[Label, LabelGroup, str, str, tuple[str, ...]], ...] = (
    (
        Label.FRAGMENT_COPY,
        LabelGroup.A_Verbatim,
        "Fragment Copy",
        "Entire phrases/sentences copied verbatim from input",
        (),
    ),
    (
        Label.TEMPLATE_SLOTTING,
        LabelGroup.A_Verbatim,
        "Template Slotting",
        "Input inserted into specific slots in a template-structured output",
        (),
    ),
    (
        Label.KEYWORD_ECHO,
        LabelGroup.A_Verbatim,
        "Keyword Echo",
        "Key terms/entities preserved; surrounding text reorganized",
        (),
    ),
    (
        Label.PARAPHRASE_REWRITE,
        LabelGroup.B_Rewrite,
        "Paraphrase Rewrite",
        "Same meaning, different wording (formal/informal/clearer)",
        (),
    ),
    (
        Label.PERSONA_REWRITING,
        LabelGroup.B_Rewrite,
        "Persona Rewriting",
        "Same facts rewritten in a different persona or tone",
        (),
    ),
    (
        Label.TRANSLATION,
        LabelGroup.B_Rewrite,
        "Translation",
        "Cross-language transfer preserving meaning",
        (),
    ),
    (
        Label.STANDALONE_QUESTION_REWRITE,
        LabelGroup.B_Rewrite,
        "Standalone Question Rewrite",
        "Follow-up rewritten as self-contained question (RAG/dialogue)",
        (),
    ),
    (
        Label.GENERAL_SUMMARIZATION,
        LabelGroup.C_Compression,
        "General Summarization",
        "Unrestricted condensation of input content",
        (),
    ),
    (
        Label.EVIDENCE_CONSTRAINED_SUMMARY,
        LabelGroup.C_Compression,
        "Evidence-Constrained Summary",
        "Summary restricted to provided context only (RAG)",
        ("Evidence-Construction Summary",),
    ),
    (
        Label.JSON_ONLY_TEMPLATE,
        LabelGroup.D_Format,
        "JSON-Only Template",
        "Output constrained to JSON schema",
        (),
    ),
    (
        Label.NON_JSON_TEMPLATE,
        LabelGroup.D_Format,
        "Non-JSON Template",
        "Output constrained to other structured formats (XML, CSV, etc.)",
        (),
    ),
    (
        Label.BINARY_DECISION,
        LabelGroup.E_Decision,
        "Binary Decision",
        "Yes/no, true/false, or similar binary output",
        (),
    ),
    (
        Label.COMPUTED_NUMBER,
        LabelGroup.E_Decision,
        "Computed Number",
        "Numeric score, rating, or count",
        (),
    ),
    (
        Label.CATEGORY_LABEL,
        LabelGroup.E_Decision,
        "Category Label",
        "Classification into predefined categories",
        (),
    ),
    (
        Label.RANKING,
        LabelGroup.E_Decision,
        "Ranking",
        "Ordered selection or prioritization",
        (),
    ),
    (
        Label.CONTENT_EXPANSION,
        LabelGroup.F_Generation,
        "Content Expansion",
        "New content generated based on input direction/constraints",
        (),
    ),
    (
        Label.CODE_SNIPPET,
        LabelGroup.F_Generation,
        "Code Snippet",
        "Executable program code generated from input specification",
        (),
    ),
    (
        Label.CLI_COMMANDS,
        LabelGroup.F_Generation,
        "CLI Commands",
        "Terminal/shell commands generated from input",
        (),
    ),
    (
        Label.MISSING_CONTEXT,
        LabelGroup.G_Gating,
        "Missing Context",
        "LLM lacks required information to use placeholder",
        (),
    ),
    (
        Label.MISSING_CAPABILITIES,
        LabelGroup.G_Gating,
        "Missing Capabilities",
        "LLM lacks required tools/abilities",
        (),
    ),
    (
        Label.POLICY_REFUSAL,
        LabelGroup.G_Gating,
        "Policy Refusal",
        "LLM refuses due to safety/policy constraints",
        (),
    ),
    (
        Label.MOSTLY_COMMON_KNOWLEDGE,
        LabelGroup.H_WeakNone,
        "Mostly Common Knowledge",
        "Output relies on general knowledge; input influence is weak",
        (),
    ),
    (
        Label.IGNORED,
        LabelGroup.H_WeakNone,
        "Ignored",
        "Placeholder present but no observable effect on output",
        (),
    ),
    (
        Label.UNCLASSIFIABLE,
        LabelGroup.H_WeakNone,
        "Unclassifiable",
        "Does not fit any other category",
        (),
    ),
)

LABEL_INFO: dict[Label, LabelInfo] = {
    label: LabelInfo(
        label=label,
        group=group,
        levels=GROUP_LEVELS[group],
        display_name=display,
        description=description,
        aliases=aliases,
    )
    for label, group, display, description, aliases in _ROWS
}

ALL_LABELS: tuple[Label, ...] = tuple(info.label for info in LABEL_INFO.values())

# The non-propagating set: a placeholder whose labels all fall here leaves no
# trace in the model output. Unclassifiable and MostlyCommonKnowledge are L0 as
# well but are deliberately excluded, so they predict propagation.
NON_PROPAGATING: LabelSet = frozenset(
    {
        Label.IGNORED,
        Label.MISSING_CONTEXT,
        Label.MISSING_CAPABILITIES,
        Label.POLICY_REFUSAL,
    }
)


def _normalize(text: str) -> str:
    return "".join(ch for ch in text.casefold() if ch.isalnum())


def _build_lookup() -> dict[str, Label]:
    lookup: dict[str, Label] = {}
    for info in LABEL_INFO.values():
        for form in (info.label.value, info.display_name, *info.aliases):
            key = _normalize(form)
            existing = lookup.get(key)
            if existing is not None and existing is not info.label:
                raise RuntimeError(f"ambiguous label surface form: {form!r}")
            lookup[key] = info.label
    return lookup


_LOOKUP = _build_lookup()


def parse_label(text: str) -> Label:
    """Resolve a label string (canonical id or display form) to its Label.

    Matching is case-insensitive and ignores whitespace and punctuation, so
    "json-only template" and "JsonOnlyTemplate" both resolve. Unknown strings
    raise UnknownLabel; nothing is silently coerced to Unclassifiable.
    """
    if not isinstance(text, str):
        raise UnknownLabel(repr(text))
    key = _normalize(text)
    if not key or key not in _LOOKUP:
        raise UnknownLabel(text)
    return _LOOKUP[key]


def format_label(label: Label) -> str:
    """Canonical string form; round-trips through parse_label."""
    return label.value


def label_metadata(label: Union[Label, str]) -> LabelInfo:
    """Static group/levels/description row for a label id."""
    if isinstance(label, str):
        label = parse_label(label)
    return LABEL_INFO[label]


def as_label_set(labels: Iterable[Union[Label, str]]) -> LabelSet:
    """Validate and freeze a collection of labels; empty input is an error."""
    out = frozenset(l if isinstance(l, Label) else parse_label(l) for l in labels)
    if not out:
        raise EmptyLabelSet("a placeholder must carry at least one label")
    return out


def is_non_propagating(labels: Iterable[Union[Label, str]]) -> bool:
    """True iff every label in the (non-empty) set is non-propagating."""
    return as_label_set(labels) <= NON_PROPAGATING


def to_json_document() -> dict:
    """Serialize the taxonomy as the versioned document bundled with the tool."""
    return {
        "schema_version": TAXONOMY_SCHEMA_VERSION,
        "labels": [
            {
                "id": info.label.value,
                "display_name": info.display_name,
                "aliases": list(info.aliases),
                "group": info.group.value,
                "levels": sorted(level.name for level in info.levels),
                "description": info.description,
            }
            for info in LABEL_INFO.values()
        ],
        "non_propagating": sorted(label.value for label in NON_PROPAGATING),
    }


def load_bundled_document() -> dict:
    """Load taxonomy.json as shipped with the package."""
    raw = resources.files(__package__).joinpath("taxonomy.json").read_text("utf-8")
    return json.loads(raw)


def definition_text() -> str:
    """Plain-text rendering of all 24 labels, used in labeling/prediction prompts."""
    lines = []
    for i, info in enumerate(LABEL_INFO.values(), start=1):
        levels = "-".join(sorted(level.name for level in info.levels))
        if len(info.levels) == 1:
            levels = next(iter(info.levels)).name
        else:
            ordered = sorted(info.levels)
            levels = f"{ordered[0].name}-{ordered[-1].name}"
        group = info.group.value.replace("_", ": ", 1)
        lines.append(f"{i}. {info.display_name} (group {group}; level {levels}): {info.description}.")
    return "\n".join(lines)
