"""Append-only JSON Lines files for dialogues, validations and BFI scores."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import EmptySeedFile, MalformedLine, SchemaMismatch

SCHEMA_VERSION = 1


class CorpusKind(str, Enum):
    DIALOGUES = "dialogues"
    VALIDATIONS = "validations"
    BFI_SCORES = "bfi_scores"
    SEEDS = "seeds"


# required top-level fields and their JSON types, plus the field that must be unique
_SCHEMAS: dict[CorpusKind, tuple[dict[str, type | tuple[type, ...]], str]] = {
    CorpusKind.DIALOGUES: (
        {"id": str, "image_description": str, "profile": dict, "utterances": list, "metadata": dict},
        "id",
    ),
    CorpusKind.VALIDATIONS: (
        {
            "dialogue_id": str,
            "predicted_traits": dict,
            "predicted_ability": str,
            "bfi_ratings": (list, type(None)),
            "scaffolding": list,
            "judge_model": str,
        },
        "dialogue_id",
    ),
    CorpusKind.BFI_SCORES: ({"dialogue_id": str, "threshold_mode": str, "traits": dict}, "dialogue_id"),
    CorpusKind.SEEDS: ({"id": str, "description": str}, "id"),
}


def check_schema(kind: CorpusKind, record: Any) -> None:
    if not isinstance(record, dict):
        raise SchemaMismatch(f"{kind.value}: record must be a JSON object")
    if record.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"{kind.value}: missing or unsupported schema_version")
    fields, _ = _SCHEMAS[kind]
    for name, typ in fields.items():
        if name not in record:
            raise SchemaMismatch(f"{kind.value}: missing field {name!r}")
        if not isinstance(record[name], typ):
            raise SchemaMismatch(f"{kind.value}: field {name!r} has type {type(record[name]).__name__}")


def stamp(record: dict) -> dict:
    """Copy of ``record`` carrying the current schema_version."""
    return {"schema_version": SCHEMA_VERSION, **record}


class CorpusFile:
    """One line-delimited JSON file of a single record kind.

    Appends are serialized through a lock and fsync'd before returning.
    """

    def __init__(self, path: str | Path, kind: CorpusKind):
        self.path = Path(path)
        self.kind = CorpusKind(kind)
        self._lock = threading.Lock()
        self._keys: set[str] | None = None

    @property
    def key_field(self) -> str:
        return _SCHEMAS[self.kind][1]

    def keys(self) -> set[str]:
        if self._keys is None:
            self._keys = {r[self.key_field] for r in self.read_all()} if self.path.exists() else set()
        return self._keys

    def append(self, record: dict) -> None:
        check_schema(self.kind, record)
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            key = record[self.key_field]
            if key in self.keys():
                raise SchemaMismatch(f"{self.kind.value}: duplicate {self.key_field} {key!r}")
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._keys.add(key)

    def read_all(self) -> list[dict]:
        records = []
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedLine(lineno, str(exc)) from exc
                try:
                    check_schema(self.kind, record)
                except SchemaMismatch as exc:
                    raise MalformedLine(lineno, str(exc)) from exc
                records.append(record)
        return records


@dataclass(frozen=True)
class ImageSeed:
    id: str
    description: str

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError("image seed description must be non-empty")


def load_seeds(path: str | Path) -> list[ImageSeed]:
    """Read image descriptions: plain text (one per line) or JSONL ``{id, description}``."""
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise EmptySeedFile(f"{path}: no image descriptions")
    if path.suffix == ".jsonl" or all(ln.startswith("{") for ln in lines):
        seeds = []
        for lineno, ln in enumerate(lines, start=1):
            try:
                obj = json.loads(ln)
                seeds.append(ImageSeed(str(obj.get("id") or f"seed-{lineno:04d}"), obj["description"].strip()))
            except (json.JSONDecodeError, KeyError, AttributeError, ValueError) as exc:
                raise MalformedLine(lineno, str(exc)) from exc
        if len({s.id for s in seeds}) != len(seeds):
            raise SchemaMismatch(f"{path}: duplicate seed ids")
        return seeds
    return [ImageSeed(f"seed-{i:04d}", ln) for i, ln in enumerate(lines, start=1)]


def run_files(run_dir: str | Path) -> dict[CorpusKind, CorpusFile]:
    run_dir = Path(run_dir)
    return {
        kind: CorpusFile(run_dir / f"{kind.value}.jsonl", kind)
        for kind in (CorpusKind.DIALOGUES, CorpusKind.VALIDATIONS, CorpusKind.BFI_SCORES)
    }
