"""Teacher-led tutoring sessions between two chat backends."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping

from .errors import BackendError, EmptyImageDescription
from .llm import AuditLog, Backend, GenerationParams, chat
from .persona import StudentProfile
from .prompts import ChatMessage, build_student_prompt, build_teacher_prompt, template_checksums

QUESTION_MARKS = ("?", "？")


class Speaker(str, Enum):
    TEACHER = "Teacher"
    STUDENT = "Student"


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: Speaker
    text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "speaker", Speaker(self.speaker))
        if self.index < 0:
            raise ValueError("utterance index must be >= 0")
        if not self.text:
            raise ValueError("utterance text must be non-empty")

    def to_dict(self) -> dict:
        return {"index": self.index, "speaker": self.speaker.value, "text": self.text}

    @classmethod
    def from_dict(cls, data: Mapping) -> Utterance:
        return cls(int(data["index"]), Speaker(data["speaker"]), data["text"])


def check_transcript(utterances) -> None:
    """Raise ValueError unless indices are 0..n-1 and speakers alternate from Teacher."""
    for i, u in enumerate(utterances):
        if u.index != i:
            raise ValueError(f"utterance {i} carries index {u.index}")
        expected = Speaker.TEACHER if i % 2 == 0 else Speaker.STUDENT
        if u.speaker is not expected:
            raise ValueError(f"utterance {i} should be spoken by {expected.value}")


@dataclass
class Dialogue:
    id: str
    image_description: str
    profile: StudentProfile
    utterances: list[Utterance]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.utterances) < 2:
            raise ValueError("a dialogue needs at least two utterances")
        check_transcript(self.utterances)

    @property
    def teacher_utterances(self) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker is Speaker.TEACHER]

    @property
    def student_utterances(self) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker is Speaker.STUDENT]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_description": self.image_description,
            "profile": self.profile.to_dict(),
            "utterances": [u.to_dict() for u in self.utterances],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Dialogue:
        return cls(
            id=data["id"],
            image_description=data["image_description"],
            profile=StudentProfile.from_dict(data["profile"]),
            utterances=[Utterance.from_dict(u) for u in data["utterances"]],
            metadata=dict(data.get("metadata") or {}),
        )


@dataclass(frozen=True)
class SessionConfig:
    min_utterances: int = 6
    max_utterances: int = 20
    termination_mode: str = "heuristic"

    def __post_init__(self) -> None:
        for name in ("min_utterances", "max_utterances"):
            value = getattr(self, name)
            if value < 2 or value % 2:
                raise ValueError(f"{name} must be a positive even integer, got {value}")
        if self.min_utterances > self.max_utterances:
            raise ValueError("min_utterances must not exceed max_utterances")
        if self.termination_mode not in ("heuristic", "max_only"):
            raise ValueError(f"unknown termination mode {self.termination_mode!r}")


def is_terminal(teacher_text: str, utterance_count_so_far: int, config: SessionConfig) -> bool:
    """Whether a teacher line closes the session.

    Heuristic mode ends on the first question-free teacher line once the
    dialogue would reach ``min_utterances``.
    """
    if config.termination_mode == "max_only":
        return False
    if utterance_count_so_far + 1 < config.min_utterances:
        return False
    return not any(mark in teacher_text for mark in QUESTION_MARKS)


def role_messages(system: list[ChatMessage], transcript: list[Utterance], own: Speaker) -> list[ChatMessage]:
    """System prompt plus the transcript seen from one role: own lines are assistant turns."""
    msgs = list(system)
    for u in transcript:
        msgs.append(ChatMessage("assistant" if u.speaker is own else "user", u.text))
    return msgs


def run_session(
    image_description: str,
    profile: StudentProfile,
    teacher_backend: Backend,
    student_backend: Backend,
    config: SessionConfig = SessionConfig(),
    params: GenerationParams = GenerationParams(),
    *,
    student_params: GenerationParams | None = None,
    dialogue_id: str = "dialogue",
    seed: int | None = None,
    audit: AuditLog | None = None,
) -> Dialogue:
    """Alternate teacher and student turns until the stopping rule fires.

    Backend errors abandon the session: the partial transcript goes to the
    audit trail and the error propagates.
    """
    if not image_description or not image_description.strip():
        raise EmptyImageDescription("image description must be non-empty")
    student_params = student_params or params
    teacher_system = build_teacher_prompt(image_description)
    student_system = build_student_prompt(profile, image_description)
    started_at = datetime.now(timezone.utc).isoformat()

    transcript: list[Utterance] = []
    try:
        while len(transcript) < config.max_utterances:
            count = len(transcript)
            reply = chat(teacher_backend, role_messages(teacher_system, transcript, Speaker.TEACHER), params)
            transcript.append(Utterance(count, Speaker.TEACHER, reply.content))
            if is_terminal(reply.content, count, config):
                break
            if len(transcript) >= config.max_utterances:
                break
            reply = chat(student_backend, role_messages(student_system, transcript, Speaker.STUDENT), student_params)
            transcript.append(Utterance(count + 1, Speaker.STUDENT, reply.content))
    except BackendError as exc:
        if audit:
            audit.record(
                "abandoned",
                dialogue_id=dialogue_id,
                error=f"{type(exc).__name__}: {exc}",
                partial_transcript=[u.to_dict() for u in transcript],
            )
        raise

    return Dialogue(
        id=dialogue_id,
        image_description=image_description.strip(),
        profile=profile,
        utterances=transcript,
        metadata={
            "teacher_model": params.model_name,
            "student_model": student_params.model_name,
            "params": {"teacher": params.to_dict(), "student": student_params.to_dict()},
            "session": {
                "min_utterances": config.min_utterances,
                "max_utterances": config.max_utterances,
                "termination_mode": config.termination_mode,
            },
            "seed": seed,
            "started_at": started_at,
            "template_checksums": template_checksums(),
        },
    )
