"""Versioned JSONL persistence with atomic appends and checkpoint resume.

Each file starts with a header line carrying schema_version and record_type.
Appends rewrite the file through a temp-file-plus-rename step so a crash mid
write leaves the previous contents intact. One writer per file; any number of
readers.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

from .errors import SchemaMismatch
from .records import RECORD_TYPES, Stage, record_type_name

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LineError:
    line_no: int
    message: str


def _json_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False, separators=(", ", ": "))


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _read_lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def _parse_header(line: str, path: Path) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: header line is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or "schema_version" not in header:
        raise SchemaMismatch(f"{path}: first line is not a schema header")
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{path}: schema_version {header['schema_version']} != supported {SCHEMA_VERSION}"
        )
    return header


def append_records(path: str | os.PathLike, records: Sequence[Any], *, dedupe: bool = False) -> int:
    """Append records as JSON lines; returns the number actually written.

    Records must be homogeneous in type and match the file's header record
    type. With dedupe=True, records whose record_id already exists in the file
    are skipped. The whole file is rewritten atomically (flush + rename).
    """
    path = Path(path)
    records = list(records)
    if not records:
        return 0
    type_name = record_type_name(records[0])
    for r in records[1:]:
        if record_type_name(r) != type_name:
            raise TypeError("append_records requires records of a single type")

    existing_lines: list[str]
    existing_ids: set[str] = set()
    if path.exists() and path.stat().st_size > 0:
        existing_lines = _read_lines(path)
        header = _parse_header(existing_lines[0], path)
        if header.get("record_type") != type_name:
            raise SchemaMismatch(
                f"{path}: file holds {header.get('record_type')} records, not {type_name}"
            )
        if dedupe:
            cls = RECORD_TYPES[type_name]
            for line in existing_lines[1:]:
                try:
                    existing_ids.add(cls.from_dict(json.loads(line)).record_id)
                except Exception:
                    continue
    else:
        existing_lines = [_json_line({"schema_version": SCHEMA_VERSION, "record_type": type_name})]

    new_lines = []
    seen_new: set[str] = set()
    for r in records:
        rid = r.record_id
        if dedupe and (rid in existing_ids or rid in seen_new):
            continue
        seen_new.add(rid)
        new_lines.append(_json_line(r.to_dict()))

    if new_lines:
        _atomic_write_text(path, "\n".join(existing_lines + new_lines) + "\n")
    return len(new_lines)


def ensure_file(path: str | os.PathLike, record_type: type) -> None:
    """Create a header-only JSONL file when absent, so empty stages still emit."""
    path = Path(path)
    name = record_type.__name__
    if name not in RECORD_TYPES:
        raise TypeError(f"not a persistable record type: {name}")
    if path.exists() and path.stat().st_size > 0:
        _parse_header(_read_lines(path)[0], path)
        return
    _atomic_write_text(
        path, _json_line({"schema_version": SCHEMA_VERSION, "record_type": name}) + "\n"
    )


def load_records(
    path: str | os.PathLike, expected_type: Optional[type] = None
) -> tuple[list[Any], list[LineError]]:
    """Load all records, collecting malformed lines as errors instead of failing.

    Returns (records, errors). The header determines the record class; pass
    expected_type to assert it. Raises SchemaMismatch on version or type
    mismatch, OSError on unreadable files. An empty file yields ([], []).
    """
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        return [], []
    header = _parse_header(lines[0], path)
    type_name = header.get("record_type")
    if type_name not in RECORD_TYPES:
        raise SchemaMismatch(f"{path}: unknown record_type {type_name!r}")
    cls = RECORD_TYPES[type_name]
    if expected_type is not None and cls is not expected_type:
        raise SchemaMismatch(f"{path}: holds {type_name}, expected {expected_type.__name__}")

    out: list[Any] = []
    errors: list[LineError] = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            out.append(cls.from_dict(json.loads(line)))
        except Exception as exc:
            errors.append(LineError(i, str(exc)))
    return out, errors


def latest_by_id(records: Iterable[Any]) -> dict[str, Any]:
    """Collapse an append-only stream to its latest record per id."""
    out: dict[str, Any] = {}
    for r in records:
        out[r.record_id] = r
    return out


@dataclass(frozen=True)
class Checkpoint:
    stage: Stage
    completed_ids: frozenset[str]
    created_at: str
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "completed_ids": sorted(self.completed_ids),
            "created_at": self.created_at,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        return cls(
            stage=Stage(d["stage"]),
            completed_ids=frozenset(d.get("completed_ids", ())),
            created_at=d.get("created_at", ""),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
        )

    @classmethod
    def fresh(cls, stage: Stage) -> "Checkpoint":
        return cls(stage=stage, completed_ids=frozenset(), created_at=_now())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def checkpoint_path(out_dir: str | os.PathLike, stage: Stage) -> Path:
    return Path(out_dir) / f"checkpoint.{stage.value}.json"


def load_checkpoint(path: str | os.PathLike, stage: Stage) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        return Checkpoint.fresh(stage)
    data = json.loads(path.read_text(encoding="utf-8"))
    cp = Checkpoint.from_dict(data)
    if cp.schema_version != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: checkpoint schema_version {cp.schema_version}")
    if cp.stage != stage:
        raise SchemaMismatch(f"{path}: checkpoint is for stage {cp.stage.value}, not {stage.value}")
    return cp


def save_checkpoint(path: str | os.PathLike, checkpoint: Checkpoint) -> Checkpoint:
    """Persist atomically, merging with any ids already on disk (only grows)."""
    path = Path(path)
    merged = checkpoint
    if path.exists():
        on_disk = load_checkpoint(path, checkpoint.stage)
        merged = Checkpoint(
            stage=checkpoint.stage,
            completed_ids=checkpoint.completed_ids | on_disk.completed_ids,
            created_at=on_disk.created_at or checkpoint.created_at,
        )
    _atomic_write_text(path, json.dumps(merged.to_dict(), indent=2) + "\n")
    return merged


def _default_id(item: Any) -> str:
    if isinstance(item, str):
        return item
    rid = getattr(item, "record_id", None)
    if rid is None:
        raise TypeError(f"cannot derive an id for work item {item!r}")
    return rid


def resume_filter(
    checkpoint: Checkpoint, items: Sequence[Any], id_of: Callable[[Any], str] = _default_id
) -> list[Any]:
    """Items not yet marked completed, in their original order."""
    ids = [id_of(it) for it in items]
    if len(set(ids)) != len(ids):
        raise ValueError("work item ids must be unique")
    return [it for it, item_id in zip(items, ids) if item_id not in checkpoint.completed_ids]
