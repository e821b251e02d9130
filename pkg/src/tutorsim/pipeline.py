"""Batch drivers for dialogue generation and judge validation."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import BackendFactory, RunConfig
from .corpus import CorpusKind, load_seeds, run_files, stamp
from .dialogue import Dialogue, run_session
from .errors import BackendError, ConfigError, EmptySeedFile, JudgeParseFailure
from .llm import AuditLog
from .persona import StudentProfile, sample_profiles
from .validators import validate_dialogue

log = logging.getLogger(__name__)


@dataclass
class StageSummary:
    attempted: int = 0
    written: int = 0
    skipped: int = 0
    failed: int = 0
    per_profile: dict[str, int] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    def failure_rate(self) -> float:
        return self.failed / self.attempted if self.attempted else 0.0

    def to_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "written": self.written,
            "skipped": self.skipped,
            "failed": self.failed,
            "per_profile": dict(sorted(self.per_profile.items())),
            "failures": self.failures,
        }


def plan_sessions(cfg: RunConfig) -> list[tuple[str, str, str, StudentProfile]]:
    """(dialogue id, seed id, image description, profile) for every planned session."""
    if not cfg.seeds_path.exists():
        raise ConfigError(f"seeds file not found: {cfg.seeds_path}")
    try:
        seeds = load_seeds(cfg.seeds_path)
    except EmptySeedFile as exc:
        raise ConfigError(str(exc)) from exc
    ps = cfg.profiles
    profiles = sample_profiles(ps.count, ps.rng_seed, ps.strategy)
    if ps.no_persona:
        profiles = [StudentProfile(p.ability, None) for p in profiles]
    if ps.pairing == "cross":
        pairs = [(s, p) for s in seeds for p in profiles]
    else:
        pairs = [(seeds[i % len(seeds)], p) for i, p in enumerate(profiles)]
    return [(f"dlg-{i:05d}", s.id, s.description, p) for i, (s, p) in enumerate(pairs)]


def _write_config_snapshot(cfg: RunConfig, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")


def generate(cfg: RunConfig) -> StageSummary:
    run_dir = cfg.resolved_run_dir()
    plan = plan_sessions(cfg)
    _write_config_snapshot(cfg, run_dir)
    files = run_files(run_dir)
    dialogues = files[CorpusKind.DIALOGUES]
    dialogues.path.touch()  # an empty plan still leaves an (empty) corpus behind
    audit = AuditLog(run_dir / "audit.jsonl")
    teacher = BackendFactory(cfg.teacher.backend, "teacher", audit)
    student = BackendFactory(cfg.student.backend, "student", audit)
    session_cfg = cfg.session.to_config()
    t_params, s_params = cfg.teacher.params.to_params(), cfg.student.params.to_params()

    summary = StageSummary()
    existing = dialogues.keys()
    todo = []
    for i, (did, seed_id, description, profile) in enumerate(plan):
        if did in existing:
            summary.skipped += 1
        else:
            todo.append((i, did, seed_id, description, profile))

    def job(item):
        i, did, seed_id, description, profile = item
        try:
            d = run_session(
                description,
                profile,
                teacher.for_session(i),
                student.for_session(i),
                session_cfg,
                t_params,
                student_params=s_params,
                dialogue_id=did,
                seed=cfg.profiles.rng_seed,
                audit=audit,
            )
            d.metadata["image_seed_id"] = seed_id
            return d
        except BackendError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        # map preserves plan order, so the corpus is identical for any parallelism
        for item, result in zip(todo, pool.map(job, todo)):
            summary.attempted += 1
            if isinstance(result, Exception):
                summary.failed += 1
                summary.failures.append({"dialogue_id": item[1], "error": f"{type(result).__name__}: {result}"})
                log.warning("session %s abandoned: %s", item[1], result)
                continue
            dialogues.append(stamp(result.to_dict()))
            summary.written += 1
            code = result.profile.code
            summary.per_profile[code] = summary.per_profile.get(code, 0) + 1

    (run_dir / "generate_summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
    return summary


def load_dialogues(run_dir: Path) -> list[Dialogue]:
    f = run_files(run_dir)[CorpusKind.DIALOGUES]
    return [Dialogue.from_dict(r) for r in f.read_all()] if f.path.exists() else []


def validate(cfg: RunConfig, run_dir: Path) -> StageSummary:
    """Judge every dialogue not yet validated; failures are logged and skipped."""
    if cfg.judge is None:
        raise ConfigError("config has no 'judge' section")
    files = run_files(run_dir)
    if not files[CorpusKind.DIALOGUES].path.exists():
        raise ConfigError(f"no dialogue corpus in {run_dir}")
    dialogues = load_dialogues(run_dir)
    validations = files[CorpusKind.VALIDATIONS]
    validations.path.touch()
    done = validations.keys()
    audit = AuditLog(run_dir / "audit.jsonl")
    judge = BackendFactory(cfg.judge.backend, "judge", audit, max_concurrent=cfg.judge_concurrency)
    params = cfg.judge.params.to_params()

    summary = StageSummary()
    todo = []
    for i, d in enumerate(dialogues):
        if d.id in done:
            summary.skipped += 1
        else:
            todo.append((i, d))

    def job(item):
        i, d = item
        try:
            return validate_dialogue(d, judge.for_session(i), params, with_bfi=cfg.with_bfi)
        except (JudgeParseFailure, BackendError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        for (i, d), result in zip(todo, pool.map(job, todo)):
            summary.attempted += 1
            if isinstance(result, Exception):
                summary.failed += 1
                summary.failures.append({"dialogue_id": d.id, "error": f"{type(result).__name__}: {result}"})
                log.warning("validation of %s failed: %s", d.id, result)
                continue
            validations.append(stamp(result.to_dict()))
            summary.written += 1
            summary.per_profile[d.profile.code] = summary.per_profile.get(d.profile.code, 0) + 1

    (run_dir / "validate_summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
    return summary


def profile_counts(dialogues) -> Counter:
    return Counter(d.profile.code for d in dialogues)
