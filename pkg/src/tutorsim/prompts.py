"""Rendering of role and judge prompts from the template snapshot files.

Templates use ``{{name}}`` placeholders. A line holding nothing but a
placeholder bound to an empty string is dropped from the output, which is how
the student prompt omits its personality block in no-persona mode.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Iterable

from .errors import EmptyPayload, EmptyTask, UnboundPlaceholder, WrongPayloadShape
from .persona import TRAITS, StudentProfile, ability_description, trait_description

PLACEHOLDER = re.compile(r"\{\{\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*\}\}")


class TemplateKind(str, Enum):
    TEACHER_ROLE = "teacher_role"
    STUDENT_ROLE = "student_role"
    BFTC_JUDGE = "bftc_judge"
    ABILITY_JUDGE = "ability_judge"
    BFI_JUDGE = "bfi_judge"
    SCAFFOLD_JUDGE = "scaffold_judge"


JUDGE_KINDS = (
    TemplateKind.BFTC_JUDGE,
    TemplateKind.ABILITY_JUDGE,
    TemplateKind.BFI_JUDGE,
    TemplateKind.SCAFFOLD_JUDGE,
)

# Our own answer-format contract; the parsers in ``validators`` read exactly this.
OUTPUT_FORMATS: dict[TemplateKind, str] = {
    TemplateKind.BFTC_JUDGE: (
        "Answer with exactly five lines, one per dimension, in the format "
        "'<Dimension>: <High|Low>' (Openness, Conscientiousness, Extraversion, "
        "Agreeableness, Neuroticism)."
    ),
    TemplateKind.ABILITY_JUDGE: "Answer with a single word: High or Low.",
    TemplateKind.BFI_JUDGE: (
        "Answer with exactly 44 lines in the format '<item number>) <rating>', "
        "where rating is an integer from 1 to 5."
    ),
    TemplateKind.SCAFFOLD_JUDGE: (
        "Answer with a comma-separated list of scaffolding type names taken "
        "from the definitions above."
    ),
}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"invalid chat role {self.role!r}")
        if not self.content:
            raise ValueError("chat message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class PromptTemplate:
    kind: TemplateKind
    body: str
    # sha256 of the file bytes as shipped; empty for templates built in memory
    checksum: str = ""

    @property
    def placeholders(self) -> set[str]:
        return set(PLACEHOLDER.findall(self.body))

    def render(self, **values: str) -> str:
        missing = self.placeholders - values.keys()
        if missing:
            raise UnboundPlaceholder(f"{self.kind.value}: unbound placeholders {sorted(missing)}")
        lines = []
        for line in self.body.splitlines():
            whole = PLACEHOLDER.fullmatch(line.strip())
            if whole and values[whole.group(1)] == "":
                continue
            lines.append(PLACEHOLDER.sub(lambda m: values[m.group(1)], line))
        return "\n".join(lines)


@lru_cache(maxsize=None)
def load_template(kind: TemplateKind) -> PromptTemplate:
    kind = TemplateKind(kind)
    raw = resources.files("tutorsim.data.prompts").joinpath(f"{kind.value}.txt").read_bytes()
    return PromptTemplate(kind, raw.decode("utf-8").rstrip("\n"), hashlib.sha256(raw).hexdigest())


def template_checksums() -> dict[str, str]:
    return {kind.value: load_template(kind).checksum for kind in TemplateKind}


def personality_block(profile: StudentProfile) -> str:
    if profile.traits is None:
        return ""
    lines = ["[Personality Description]"]
    for dim in TRAITS:
        phrases = trait_description(dim, profile.traits[dim]).descriptors
        lines.append(f"{dim.value}: " + "; ".join(phrases) + ";")
    return "\n".join(lines)


def ability_block(profile: StudentProfile) -> str:
    phrases = ability_description(profile.ability).descriptors
    return "[Language Ability Description]\n" + "; ".join(phrases) + ";"


def build_teacher_prompt(task: str) -> list[ChatMessage]:
    if not task or not task.strip():
        raise EmptyTask("image description must be non-empty")
    body = load_template(TemplateKind.TEACHER_ROLE).render(image_description=task.strip())
    return [ChatMessage("system", body)]


def build_student_prompt(profile: StudentProfile, task: str) -> list[ChatMessage]:
    if not task or not task.strip():
        raise EmptyTask("image description must be non-empty")
    body = load_template(TemplateKind.STUDENT_ROLE).render(
        personality_description=personality_block(profile),
        language_ability_description=ability_block(profile),
        image_description=task.strip(),
    )
    return [ChatMessage("system", body)]


def serialize_dialogue(utterances: Iterable) -> str:
    """``Teacher: ...`` / ``Student: ...`` lines, in order."""
    return "\n".join(f"{u.speaker.value}: {u.text}" for u in utterances)


def build_judge_prompt(kind: TemplateKind, payload) -> list[ChatMessage]:
    """Render one judge instrument.

    ``payload`` is a single teacher ``Utterance`` for the scaffolding judge and a
    ``Dialogue`` (or a sequence of utterances) for the three dialogue-level
    judges. Pre-serialized strings are accepted as well; a multi-line string
    counts as a dialogue.
    """
    kind = TemplateKind(kind)
    if kind not in JUDGE_KINDS:
        raise ValueError(f"{kind.value} is not a judge template")
    text = _payload_text(kind, payload)
    slot = "utterance" if kind is TemplateKind.SCAFFOLD_JUDGE else "dialogue_content"
    body = load_template(kind).render(**{slot: text, "output_format": OUTPUT_FORMATS[kind]})
    return [ChatMessage("user", body)]


def _payload_text(kind: TemplateKind, payload) -> str:
    # local import: dialogue depends on this module
    from .dialogue import Dialogue, Speaker, Utterance

    wants_utterance = kind is TemplateKind.SCAFFOLD_JUDGE
    if isinstance(payload, Utterance):
        if not wants_utterance:
            raise WrongPayloadShape(f"{kind.value} needs a whole dialogue, got one utterance")
        if payload.speaker is not Speaker.TEACHER:
            raise WrongPayloadShape("scaffolding judge labels teacher utterances only")
        text = payload.text
    elif isinstance(payload, Dialogue) or (isinstance(payload, (list, tuple)) and payload):
        if wants_utterance:
            raise WrongPayloadShape("scaffolding judge takes a single utterance, got a dialogue")
        utterances = payload.utterances if isinstance(payload, Dialogue) else payload
        text = serialize_dialogue(utterances)
    elif isinstance(payload, str):
        text = payload.strip()
        if text and wants_utterance and "\n" in text:
            raise WrongPayloadShape("scaffolding judge takes a single utterance, got a dialogue")
    else:
        text = ""
    if not text.strip():
        raise EmptyPayload(f"{kind.value}: empty payload")
    return text
