"""Detection rules: which calls are LLM callsites and which are dangerous sinks.

Patterns are dotted call paths with fnmatch-style wildcards; "*" may span
several leading segments ("*.chat.completions.create" matches
"client.chat.completions.create"). A default rule set is embedded; rules can
also be loaded from a versioned JSON config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path

from .errors import SchemaMismatch
from .records import Framework, SinkKind

RULES_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CallPattern:
    pattern: str
    framework: Framework

    def matches(self, path: str) -> bool:
        return fnmatchcase(path, self.pattern)


@dataclass(frozen=True)
class DetectionRules:
    llm_call_patterns: tuple[CallPattern, ...]
    sink_patterns: dict[SinkKind, tuple[str, ...]]
    template_constructors: tuple[str, ...]
    excluded_kwargs: frozenset[str]

    def __post_init__(self):
        if not self.llm_call_patterns:
            raise ValueError("llm_call_patterns must be non-empty")
        missing = [k for k in SinkKind if not self.sink_patterns.get(k)]
        if missing:
            raise ValueError(f"sink_patterns must cover all sink kinds; missing {missing}")

    def match_llm_call(self, *paths: str) -> CallPattern | None:
        for path in paths:
            if not path:
                continue
            for cp in self.llm_call_patterns:
                if cp.matches(path):
                    return cp
        return None

    def match_sink(self, *paths: str) -> SinkKind | None:
        for path in paths:
            if not path:
                continue
            for kind, patterns in self.sink_patterns.items():
                for pattern in patterns:
                    if fnmatchcase(path, pattern):
                        return kind
        return None

    def is_template_constructor(self, path: str) -> bool:
        return any(fnmatchcase(path, p) for p in self.template_constructors)


_DIRECT = Framework.DIRECT_API
_WRAPPED = Framework.FRAMEWORK_WRAPPED

DEFAULT_LLM_PATTERNS: tuple[CallPattern, ...] = (
    CallPattern("*.chat.completions.create", _DIRECT),
    CallPattern("*.completions.create", _DIRECT),
    CallPattern("*.ChatCompletion.create", _DIRECT),
    CallPattern("ChatCompletion.create", _DIRECT),
    CallPattern("*.Completion.create", _DIRECT),
    CallPattern("*.messages.create", _DIRECT),
    CallPattern("*.generate_content", _DIRECT),
    CallPattern("LLMChain.run", _WRAPPED),
    CallPattern("ConversationChain.run", _WRAPPED),
    CallPattern("*.invoke", _WRAPPED),
    CallPattern("*.predict", _WRAPPED),
)

DEFAULT_SINK_PATTERNS: dict[SinkKind, tuple[str, ...]] = {
    SinkKind.EXEC: ("exec",),
    SinkKind.EVAL: ("eval",),
    SinkKind.SUBPROCESS: (
        "subprocess.run",
        "subprocess.Popen",
        "subprocess.call",
        "subprocess.check_call",
        "subprocess.check_output",
        "os.system",
        "os.popen",
    ),
    SinkKind.SQL_EXECUTE: ("*.execute", "*.executemany", "*.executescript"),
    SinkKind.HTTP_REQUEST: ("requests.get",),
    SinkKind.UNSAFE_YAML_LOAD: ("yaml.unsafe_load",),
}

DEFAULT_TEMPLATE_CONSTRUCTORS: tuple[str, ...] = (
    "PromptTemplate",
    "*.PromptTemplate",
    "ChatPromptTemplate.from_template",
    "PromptTemplate.from_template",
)

# Call keyword arguments that configure the request rather than feed the prompt.
DEFAULT_EXCLUDED_KWARGS = frozenset(
    {
        "model",
        "engine",
        "temperature",
        "top_p",
        "top_k",
        "n",
        "max_tokens",
        "max_completion_tokens",
        "max_output_tokens",
        "stream",
        "stop",
        "seed",
        "timeout",
        "api_key",
        "frequency_penalty",
        "presence_penalty",
        "logit_bias",
        "response_format",
        "tools",
        "tool_choice",
        "user",
        "callbacks",
        "config",
        "input_variables",
    }
)


def default_rules() -> DetectionRules:
    return DetectionRules(
        llm_call_patterns=DEFAULT_LLM_PATTERNS,
        sink_patterns=dict(DEFAULT_SINK_PATTERNS),
        template_constructors=DEFAULT_TEMPLATE_CONSTRUCTORS,
        excluded_kwargs=DEFAULT_EXCLUDED_KWARGS,
    )


def rules_to_dict(rules: DetectionRules) -> dict:
    return {
        "schema_version": RULES_SCHEMA_VERSION,
        "llm_call_patterns": [
            {"pattern": cp.pattern, "framework": cp.framework.value}
            for cp in rules.llm_call_patterns
        ],
        "sink_patterns": {k.value: list(v) for k, v in rules.sink_patterns.items()},
        "template_constructors": list(rules.template_constructors),
        "excluded_kwargs": sorted(rules.excluded_kwargs),
    }


def load_rules(path: str | Path) -> DetectionRules:
    """Load rules from a JSON config; omitted sections fall back to defaults."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version") != RULES_SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: rules schema_version must be {RULES_SCHEMA_VERSION}")
    base = default_rules()
    llm = tuple(
        CallPattern(entry["pattern"], Framework(entry.get("framework", "unknown")))
        for entry in data.get("llm_call_patterns", ())
    ) or base.llm_call_patterns
    sinks = {
        SinkKind(kind): tuple(patterns)
        for kind, patterns in data.get("sink_patterns", {}).items()
    }
    merged_sinks = dict(base.sink_patterns)
    merged_sinks.update(sinks)
    return DetectionRules(
        llm_call_patterns=llm,
        sink_patterns=merged_sinks,
        template_constructors=tuple(data.get("template_constructors", base.template_constructors)),
        excluded_kwargs=frozenset(data.get("excluded_kwargs", base.excluded_kwargs)),
    )
