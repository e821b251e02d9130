"""Run configuration, loaded from a single JSON file."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dialogue import SessionConfig
from .errors import ConfigError
from .llm import (
    JUDGE_TEMPERATURE,
    ROLEPLAY_TEMPERATURE,
    AuditLog,
    GenerationParams,
    HttpChatBackend,
    RateLimitedBackend,
    ScriptedBackend,
)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackendSpec(_Model):
    kind: Literal["http", "scripted"]
    endpoint: Optional[str] = None  # falls back to TUTORSIM_ENDPOINT
    max_retries: int = Field(3, ge=0)
    backoff_base: float = Field(1.0, ge=0)
    # scripted: every session gets a fresh copy of ``responses``, or
    # ``sessions[i % len(sessions)]`` when per-session scripts are given
    responses: Optional[list[str]] = None
    sessions: Optional[list[list[str]]] = None

    @model_validator(mode="after")
    def _scripted_needs_script(self):
        if self.kind == "scripted" and self.responses is None and not self.sessions:
            raise ValueError("scripted backend needs 'responses' or 'sessions'")
        return self


class ParamsSpec(_Model):
    model_name: str = "gpt-4-1106-preview"
    temperature: float = Field(ROLEPLAY_TEMPERATURE, ge=0.0, le=2.0)
    max_tokens: int = Field(512, ge=1)
    request_timeout: float = Field(60.0, gt=0)

    def to_params(self) -> GenerationParams:
        return GenerationParams(**self.model_dump())


class RoleSpec(_Model):
    backend: BackendSpec
    params: ParamsSpec = Field(default_factory=ParamsSpec)


class JudgeSpec(RoleSpec):
    params: ParamsSpec = Field(default_factory=lambda: ParamsSpec(temperature=JUDGE_TEMPERATURE))


class ProfileSpec(_Model):
    strategy: Literal["grid", "uniform"] = "grid"
    count: int = Field(64, ge=0)
    rng_seed: int = 0
    # cross: every seed with every profile; cycle: profile i gets seed i mod n_seeds
    pairing: Literal["cross", "cycle"] = "cross"
    no_persona: bool = False


class SessionSpec(_Model):
    min_utterances: int = 6
    max_utterances: int = 20
    termination_mode: Literal["heuristic", "max_only"] = "heuristic"

    def to_config(self) -> SessionConfig:
        return SessionConfig(**self.model_dump())


class RunConfig(_Model):
    seeds_path: Path
    output_dir: Path = Path("runs")
    run_id: Optional[str] = None
    profiles: ProfileSpec = Field(default_factory=ProfileSpec)
    teacher: RoleSpec
    student: RoleSpec
    judge: Optional[JudgeSpec] = None
    session: SessionSpec = Field(default_factory=SessionSpec)
    threshold_mode: Literal["midpoint", "corpus_mean"] = "midpoint"
    parallelism: int = Field(1, ge=1)
    judge_concurrency: int = Field(4, ge=1)
    with_bfi: bool = True
    max_failure_rate: float = Field(0.10, ge=0.0, le=1.0)
    # reserved for few-shot dialogue generation; not implemented
    few_shot_examples: Optional[list] = None

    @model_validator(mode="after")
    def _check(self):
        if self.few_shot_examples:
            raise ValueError("few_shot_examples is reserved and not implemented")
        self.session.to_config()  # surfaces even/min<=max violations as config errors
        return self

    def resolved_run_dir(self) -> Path:
        return self.output_dir / (self.run_id or "run")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        cfg = RunConfig.model_validate(raw)
    except (ValidationError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent
    if not cfg.seeds_path.is_absolute():
        cfg.seeds_path = base / cfg.seeds_path
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = base / cfg.output_dir
    if cfg.run_id is None:
        cfg.run_id = path.stem
    return cfg


class BackendFactory:
    """Hands out backends per session: fresh scripted queues, or one shared HTTP client."""

    def __init__(self, spec: BackendSpec, name: str, audit: AuditLog | None = None, max_concurrent: int | None = None):
        self.spec = spec
        self.name = name
        self.audit = audit
        self._shared = None
        if spec.kind == "http":
            backend = HttpChatBackend(
                spec.endpoint,
                max_retries=spec.max_retries,
                backoff_base=spec.backoff_base,
                name=name,
                audit=audit,
            )
            self._shared = RateLimitedBackend(backend, max_concurrent) if max_concurrent else backend

    def for_session(self, index: int):
        if self._shared is not None:
            return self._shared
        script = self.spec.sessions[index % len(self.spec.sessions)] if self.spec.sessions else self.spec.responses
        return ScriptedBackend(script, name=f"{self.name}#{index}", audit=self.audit)
