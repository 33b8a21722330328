"""Run configuration: a simple key=value config file plus flag overrides.

Precedence: command-line flags beat config-file values. Environment variables
are only consulted for secrets and soft defaults (NLPL_API_KEY names the key;
NLPL_API_BASE supplies the endpoint when neither flag nor config sets one).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends import API_BASE_ENV, API_KEY_ENV, BackendConfig
from .predict import MethodId

DEFAULT_METHODS = (MethodId.A, MethodId.C, MethodId.CPLUS)

CONFIG_KEYS = {
    "corpus",
    "out",
    "backend",
    "endpoint",
    "model",
    "api_key_env",
    "timeout",
    "max_retries",
    "jobs",
    "methods",
    "rules",
    "seed",
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Parse `key = value` lines; # starts a comment; unknown keys rejected."""
    values: dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{i}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{i}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def parse_methods(text: str) -> tuple[MethodId, ...]:
    return tuple(MethodId.parse(part) for part in text.split(",") if part.strip())


@dataclass
class RunConfig:
    corpus_root: Optional[Path] = None
    out_dir: Path = Path("out")
    backend: BackendConfig = field(default_factory=BackendConfig)
    rules_path: Optional[Path] = None
    methods: tuple[MethodId, ...] = DEFAULT_METHODS
    jobs: int = 1
    seed: int = 0
    verbosity: int = 0

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError("jobs must be positive")


def build_run_config(args) -> RunConfig:
    """Merge config file and argparse namespace into a RunConfig."""
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)

    def pick(flag_name: str, key: str, default=None):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        if key in file_values:
            return file_values[key]
        return default

    backend_kind = pick("backend", "backend", "mock")
    endpoint = pick("endpoint", "endpoint", None)
    if endpoint is None and backend_kind == "live":
        endpoint = os.environ.get(API_BASE_ENV, "")
    backend = BackendConfig(
        kind=backend_kind,
        endpoint=endpoint or "",
        model=pick("model", "model", "mock"),
        api_key_env=pick("api_key_env", "api_key_env", API_KEY_ENV),
        max_concurrent=int(pick("jobs", "jobs", 1)),
        timeout=float(pick("timeout", "timeout", 60.0)),
        max_retries=int(pick("max_retries", "max_retries", 3)),
    )
    corpus = pick("corpus", "corpus", None)
    rules = pick("rules", "rules", None)
    methods_text = pick("methods", "methods", None)
    return RunConfig(
        corpus_root=Path(corpus) if corpus else None,
        out_dir=Path(pick("out", "out", "out")),
        backend=backend,
        rules_path=Path(rules) if rules else None,
        methods=parse_methods(methods_text) if methods_text else DEFAULT_METHODS,
        jobs=int(pick("jobs", "jobs", 1)),
        seed=int(pick("seed", "seed", 0)),
        verbosity=getattr(args, "verbose", 0) or 0,
    )
