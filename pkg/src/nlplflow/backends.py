"""Chat-completion backends: a live HTTP client and a deterministic mock.

Both speak the same one-method interface, complete(system, user) -> text, so
every pipeline stage exercises identical templating and parsing code paths
regardless of backend. The mock recognizes the stage from the prompt's section
markers and fabricates deterministic replies, making the whole pipeline
runnable offline and byte-stable across runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import BackendError, MalformedBackendOutput, RateLimited

API_KEY_ENV = "NLPL_API_KEY"
API_BASE_ENV = "NLPL_API_BASE"


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "mock" | "live"
    endpoint: str = ""
    model: str = "mock"
    api_key_env: str = API_KEY_ENV
    max_concurrent: int = 4
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self):
        if self.kind not in ("mock", "live"):
            raise ValueError(f"backend kind must be mock or live, got {self.kind!r}")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.kind == "live" and (not self.endpoint or not self.model):
            raise ValueError("live backend requires endpoint and model")


def prompt_key(text: str) -> str:
    """Stable key for canned-reply lookup tables."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class LiveHTTPBackend:
    """Minimal chat-completion client: JSON POST, temperature 0, retry/backoff."""

    def __init__(self, config: BackendConfig, post: Optional[Callable] = None):
        if config.kind != "live":
            raise ValueError("LiveHTTPBackend requires a live BackendConfig")
        self.config = config
        if post is None:
            import requests

            post = requests.post
        self._post = post
        self.retries_last_call = 0

    def complete(self, system: str, user: str) -> str:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        payload = {"model": self.config.model, "messages": messages, "temperature": 0}
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error: Exception | None = None
        rate_limited = False
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            self.retries_last_call = attempt
            try:
                response = self._post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout,
                )
                status = getattr(response, "status_code", 200)
                if status == 429:
                    rate_limited = True
                    raise BackendError("rate limited (429)")
                if status >= 400:
                    body = getattr(response, "text", "")[:500]
                    raise BackendError(f"HTTP {status}: {body}")
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise MalformedBackendOutput(f"unexpected response shape: {exc}") from exc
            except Exception as exc:  # request errors and HTTP failures
                last_error = exc
                if attempt < attempts - 1:
                    time.sleep(min(2**attempt, 30))
        if rate_limited:
            raise RateLimited(f"rate limited after {attempts} attempts")
        raise BackendError(f"request failed after {attempts} attempts: {last_error}")


_VERDICT_MARKER = 'Answer with ONLY "yes" or "no"'
_RECONSTRUCT_MARKER = "[PLACEHOLDER EXPRESSIONS]"
_LABEL_MARKERS = ("[PLACEHOLDERS]", "[RENDERED PROMPT]", "[MODEL OUTPUT]")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _looks_like_system_slot(expression: str) -> bool:
    # Mock heuristic only: ALL_CAPS constants and system*-named expressions
    # stand in for placeholders a real model tends to ignore.
    if expression.lower().startswith("system"):
        return True
    return any(tok.isupper() and len(tok) > 1 for tok in _IDENT.findall(expression))


def _section(text: str, name: str) -> str:
    start = text.find(name)
    if start < 0:
        return ""
    start += len(name)
    next_pos = len(text)
    for match in re.finditer(r"^\[[A-Z ]+\]$", text[start:], flags=re.MULTILINE):
        next_pos = start + match.start()
        break
    return text[start:next_pos].strip("\n").strip()


def _norm_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass
class MockBackend:
    """Offline stand-in for a chat-completion endpoint.

    Deterministic: the reply is a pure function of the request text plus the
    seeded override tables. Also instrumented for tests: per-kind call counts,
    an in-flight high-water mark, and an optional kill switch that raises after
    a fixed number of calls.
    """

    guess_overrides: dict[str, str] = field(default_factory=dict)
    canned_outputs: dict[str, str] = field(default_factory=dict)  # prompt text -> output
    label_overrides: dict[str, list[str]] = field(default_factory=dict)  # expr -> labels
    verdict_fn: Optional[Callable[[str], str]] = None
    default_verdict: str = "yes"
    kill_after: Optional[int] = None  # total calls before simulated crash
    reply_overrides: dict[str, str] = field(default_factory=dict)  # prompt_key -> raw reply

    def __post_init__(self):
        self.calls: dict[str, int] = {"reconstruct": 0, "generate": 0, "label": 0, "verdict": 0}
        self.total_calls = 0
        self.max_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    # ------------------------------------------------------------------

    def complete(self, system: str, user: str) -> str:
        with self._lock:
            self.total_calls += 1
            if self.kill_after is not None and self.total_calls > self.kill_after:
                raise KeyboardInterrupt("mock backend kill switch")
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        try:
            return self._dispatch(system, user)
        finally:
            with self._lock:
                self._in_flight -= 1

    def _dispatch(self, system: str, user: str) -> str:
        key = prompt_key(user)
        if key in self.reply_overrides:
            return self.reply_overrides[key]
        if _VERDICT_MARKER in user:
            self._count("verdict")
            if self.verdict_fn is not None:
                return self.verdict_fn(user)
            return self.default_verdict
        if _RECONSTRUCT_MARKER in user:
            self._count("reconstruct")
            return self._reconstruct(user)
        if all(marker in user for marker in _LABEL_MARKERS):
            self._count("label")
            return self._label(user)
        self._count("generate")
        return self._generate(user)

    def _count(self, kind: str) -> None:
        with self._lock:
            self.calls[kind] += 1

    # ------------------------------------------------------------------

    def _reconstruct(self, user: str) -> str:
        raw = _section(user, _RECONSTRUCT_MARKER)
        try:
            expressions = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedBackendOutput(f"mock reconstruct request unreadable: {exc}") from exc
        placeholders = [
            {
                "original_expression": expr,
                "guessed_value": self.guess_overrides.get(expr, f"<{expr}:example>"),
            }
            for expr in expressions
        ]
        return json.dumps({"placeholders": placeholders}, ensure_ascii=False)

    def _generate(self, prompt: str) -> str:
        if prompt in self.canned_outputs:
            return self.canned_outputs[prompt]
        return f"Mock response echoing the request.\n{prompt}\nEnd of mock response."

    def _label(self, user: str) -> str:
        try:
            placeholders = json.loads(_section(user, "[PLACEHOLDERS]"))
        except json.JSONDecodeError as exc:
            raise MalformedBackendOutput(f"mock label request unreadable: {exc}") from exc
        output = _section(user, "[MODEL OUTPUT]")
        norm_output = _norm_ws(output)
        entries = []
        for ph in placeholders:
            expr = ph.get("original_expression", "")
            value = ph.get("guessed_value", "")
            if expr in self.label_overrides:
                labels = list(self.label_overrides[expr])
            elif _looks_like_system_slot(expr):
                labels = ["Ignored"]
            elif value and _norm_ws(value) in norm_output:
                labels = ["Keyword Echo"]
            else:
                labels = ["Ignored"]
            evidence = []
            for label in labels:
                quoted = value if (label != "Ignored" and value and _norm_ws(value) in norm_output) else ""
                evidence.append(
                    {
                        "label": label,
                        "quote": quoted,
                        "why": f"deterministic mock rule for {label}",
                    }
                )
            entries.append(
                {
                    "original_expression": expr,
                    "guessed_value": value,
                    "assigned_labels": labels,
                    "evidence": evidence,
                }
            )
        return json.dumps({"labels": entries}, ensure_ascii=False)


def make_backend(config: BackendConfig, **mock_kwargs):
    if config.kind == "mock":
        return MockBackend(**mock_kwargs)
    return LiveHTTPBackend(config)
