"""Judge instruments and the parsers that read their answers.

Every parser is total: it returns a typed value or raises ``JudgeParseFailure``
carrying the offending span.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, TypeVar

from .dialogue import Dialogue, Speaker, Utterance
from .errors import JudgeParseFailure, NotTeacherUtterance
from .llm import JUDGE_TEMPERATURE, Backend, GenerationParams, chat
from .persona import TRAITS, Level, TraitDimension
from .prompts import OUTPUT_FORMATS, ChatMessage, TemplateKind, build_judge_prompt

log = logging.getLogger(__name__)

T = TypeVar("T")

PARSE_RETRIES = 2
BFI_ITEMS = 44
DEFAULT_JUDGE_PARAMS = GenerationParams(temperature=JUDGE_TEMPERATURE)

TraitLabels = dict  # TraitDimension -> Level, all five present


class ScaffoldingType(str, Enum):
    FEEDING_BACK = "Feeding back"
    HINTS = "Hints"
    INSTRUCTING = "Instructing"
    EXPLAINING = "Explaining"
    MODELING = "Modeling"
    QUESTIONING = "Questioning"
    SOCIAL_EMOTIONAL_SUPPORT = "Social-emotional Support"


SCAFFOLDING_TYPES: tuple[ScaffoldingType, ...] = tuple(ScaffoldingType)


def _squash(text: str) -> str:
    return re.sub(r"[^a-z]", "", text.lower())


_SCAFFOLD_ALIASES = {
    "feedingback": ScaffoldingType.FEEDING_BACK,
    "feedback": ScaffoldingType.FEEDING_BACK,
    "hints": ScaffoldingType.HINTS,
    "hint": ScaffoldingType.HINTS,
    "instructing": ScaffoldingType.INSTRUCTING,
    "instruction": ScaffoldingType.INSTRUCTING,
    "explaining": ScaffoldingType.EXPLAINING,
    "explanation": ScaffoldingType.EXPLAINING,
    "modeling": ScaffoldingType.MODELING,
    "modelling": ScaffoldingType.MODELING,
    "questioning": ScaffoldingType.QUESTIONING,
    "socialemotionalsupport": ScaffoldingType.SOCIAL_EMOTIONAL_SUPPORT,
    "socioemotionalsupport": ScaffoldingType.SOCIAL_EMOTIONAL_SUPPORT,
    "socialemotional": ScaffoldingType.SOCIAL_EMOTIONAL_SUPPORT,
    "socioemotional": ScaffoldingType.SOCIAL_EMOTIONAL_SUPPORT,
}

_TRAIT_ALIASES = {
    "openness": TraitDimension.OPENNESS,
    "conscientiousness": TraitDimension.CONSCIENTIOUSNESS,
    "extraversion": TraitDimension.EXTRAVERSION,
    "extroversion": TraitDimension.EXTRAVERSION,
    "agreeableness": TraitDimension.AGREEABLENESS,
    "neuroticism": TraitDimension.NEUROTICISM,
    "neuroticisim": TraitDimension.NEUROTICISM,
}

_TRAIT_LABEL = re.compile(
    r"\b(" + "|".join(_TRAIT_ALIASES) + r")\b[^a-z\n]{0,12}?\b(high|low)\b",
    re.IGNORECASE,
)
_LEVEL_WORD = re.compile(r"\b(high|low)\b", re.IGNORECASE)
_LIKERT_PAIR = re.compile(r"(?<![\d.])(\d{1,3})\s*[).:]\s*(-?\d+)(?![\d.])")
_LIKERT_TRAILING = re.compile(r"^(\d{1,3})\s*[).:]\s*\D*?(-?\d+)\s*$")
_MARKDOWN = re.compile(r"[*_`#>|]")


def parse_trait_labels(text: str) -> TraitLabels:
    """Read one High/Low label per BF-TC dimension, in any order."""
    found: dict[TraitDimension, Level] = {}
    for m in _TRAIT_LABEL.finditer(_MARKDOWN.sub(" ", text or "")):
        dim = _TRAIT_ALIASES[m.group(1).lower()]
        level = Level(m.group(2).capitalize())
        if dim in found:
            raise JudgeParseFailure(f"more than one label for {dim.value}", m.group(0))
        found[dim] = level
    missing = [d.value for d in TRAITS if d not in found]
    if missing:
        raise JudgeParseFailure(f"no label for {', '.join(missing)}", (text or "")[:200])
    return {d: found[d] for d in TRAITS}


def parse_level(text: str) -> Level:
    """Extract the one High/Low word from a free-text answer."""
    words = {m.group(1).capitalize() for m in _LEVEL_WORD.finditer(text or "")}
    if len(words) != 1:
        reason = "ambiguous label" if words else "no High/Low label"
        raise JudgeParseFailure(reason, (text or "")[:200])
    return Level(words.pop())


def parse_likert_ratings(text: str, n_items: int = BFI_ITEMS) -> list[int]:
    """Parse numbered ratings such as ``12) 4`` into a list indexed by item."""
    ratings: dict[int, int] = {}
    for raw in (text or "").splitlines():
        line = _MARKDOWN.sub(" ", raw).strip().lstrip("-• ").strip()
        if not line:
            continue
        if _LIKERT_PAIR.match(line):
            pairs = _LIKERT_PAIR.findall(line)  # "1) 4", or several pairs on one line
        elif trailing := _LIKERT_TRAILING.match(line):
            pairs = [trailing.groups()]  # "1) Is talkative: 4"
        else:
            continue
        for item_s, rating_s in pairs:
            item, rating = int(item_s), int(rating_s)
            if not 1 <= item <= n_items:
                raise JudgeParseFailure(f"item number {item} outside 1..{n_items}", raw)
            if not 1 <= rating <= 5:
                raise JudgeParseFailure(f"rating {rating} outside 1..5", raw)
            if item in ratings:
                raise JudgeParseFailure(f"duplicate item {item}", raw)
            ratings[item] = rating
    if len(ratings) != n_items:
        missing = sorted(set(range(1, n_items + 1)) - ratings.keys())
        raise JudgeParseFailure(f"expected {n_items} ratings, got {len(ratings)} (missing {missing[:10]})", (text or "")[:200])
    return [ratings[i] for i in range(1, n_items + 1)]


def parse_scaffolding_labels(text: str) -> frozenset[ScaffoldingType]:
    """Read a list of scaffolding type names, tolerating spelling variants."""
    labels: set[ScaffoldingType] = set()
    for line in (text or "").splitlines():
        line = _MARKDOWN.sub(" ", line).strip()
        if ":" in line:
            head, _, tail = line.rpartition(":")
            if _squash(tail):
                line = tail
        for piece in re.split(r"[,;/\n\[\]]|\band\b|\+", line):
            key = _squash(piece.strip().lstrip("-•").strip(" ."))
            if not key:
                continue
            if key not in _SCAFFOLD_ALIASES:
                raise JudgeParseFailure("unknown scaffolding type", piece.strip())
            labels.add(_SCAFFOLD_ALIASES[key])
    if not labels:
        raise JudgeParseFailure("no scaffolding type", (text or "")[:200])
    return frozenset(labels)


@dataclass(frozen=True)
class ScaffoldingLabelSet:
    utterance_index: int
    labels: frozenset[ScaffoldingType]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("a scaffolding label set must be non-empty")
        object.__setattr__(self, "labels", frozenset(ScaffoldingType(x) for x in self.labels))

    def to_dict(self) -> dict:
        return {
            "utterance_index": self.utterance_index,
            "labels": [t.value for t in SCAFFOLDING_TYPES if t in self.labels],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ScaffoldingLabelSet:
        return cls(int(data["utterance_index"]), frozenset(ScaffoldingType(x) for x in data["labels"]))


@dataclass
class ValidationRecord:
    dialogue_id: str
    predicted_traits: TraitLabels
    predicted_ability: Level
    bfi_ratings: list[int] | None
    scaffolding: list[ScaffoldingLabelSet] = field(default_factory=list)
    judge_model: str = ""

    def __post_init__(self) -> None:
        if set(self.predicted_traits) != set(TRAITS):
            raise ValueError("predicted traits must cover all five dimensions")
        if self.bfi_ratings is not None:
            if len(self.bfi_ratings) != BFI_ITEMS or not all(1 <= r <= 5 for r in self.bfi_ratings):
                raise ValueError("bfi_ratings must be 44 integers in 1..5")

    def to_dict(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "predicted_traits": {d.value: self.predicted_traits[d].value for d in TRAITS},
            "predicted_ability": self.predicted_ability.value,
            "bfi_ratings": self.bfi_ratings,
            "scaffolding": [s.to_dict() for s in self.scaffolding],
            "judge_model": self.judge_model,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ValidationRecord:
        return cls(
            dialogue_id=data["dialogue_id"],
            predicted_traits={TraitDimension(k): Level(v) for k, v in data["predicted_traits"].items()},
            predicted_ability=Level(data["predicted_ability"]),
            bfi_ratings=None if data.get("bfi_ratings") is None else [int(x) for x in data["bfi_ratings"]],
            scaffolding=[ScaffoldingLabelSet.from_dict(s) for s in data.get("scaffolding", [])],
            judge_model=data.get("judge_model", ""),
        )


def ask_judge(
    kind: TemplateKind,
    messages: list[ChatMessage],
    judge: Backend,
    parse: Callable[[str], T],
    params: GenerationParams = DEFAULT_JUDGE_PARAMS,
    retries: int = PARSE_RETRIES,
) -> T:
    """Call the judge and parse; on a parse failure re-ask with a format reminder."""
    convo = list(messages)
    for attempt in range(retries + 1):
        reply = chat(judge, convo, params)
        try:
            return parse(reply.content)
        except JudgeParseFailure as exc:
            log.info("%s parse failure (attempt %d): %s", kind.value, attempt + 1, exc)
            if attempt == retries:
                raise
            convo = convo + [
                reply,
                ChatMessage(
                    "user",
                    f"Your answer could not be read ({exc.reason}). "
                    f"Answer only in the format requested: {OUTPUT_FORMATS[kind]}",
                ),
            ]
    raise AssertionError("unreachable")


def categorize_bftc(dialogue: Dialogue, judge: Backend, params: GenerationParams = DEFAULT_JUDGE_PARAMS) -> TraitLabels:
    kind = TemplateKind.BFTC_JUDGE
    return ask_judge(kind, build_judge_prompt(kind, dialogue), judge, parse_trait_labels, params)


def label_language_ability(dialogue: Dialogue, judge: Backend, params: GenerationParams = DEFAULT_JUDGE_PARAMS) -> Level:
    kind = TemplateKind.ABILITY_JUDGE
    return ask_judge(kind, build_judge_prompt(kind, dialogue), judge, parse_level, params)


def administer_bfi(dialogue: Dialogue, judge: Backend, params: GenerationParams = DEFAULT_JUDGE_PARAMS) -> list[int]:
    kind = TemplateKind.BFI_JUDGE
    return ask_judge(kind, build_judge_prompt(kind, dialogue), judge, parse_likert_ratings, params)


def label_scaffolding(
    utterance: Utterance, judge: Backend, params: GenerationParams = DEFAULT_JUDGE_PARAMS
) -> ScaffoldingLabelSet:
    if utterance.speaker is not Speaker.TEACHER:
        raise NotTeacherUtterance(f"utterance {utterance.index} is spoken by {utterance.speaker.value}")
    kind = TemplateKind.SCAFFOLD_JUDGE
    labels = ask_judge(kind, build_judge_prompt(kind, utterance), judge, parse_scaffolding_labels, params)
    return ScaffoldingLabelSet(utterance.index, labels)


def validate_dialogue(
    dialogue: Dialogue,
    judge: Backend,
    params: GenerationParams = DEFAULT_JUDGE_PARAMS,
    *,
    with_bfi: bool = True,
) -> ValidationRecord:
    """Run all four instruments; judge calls happen in a fixed order."""
    traits = categorize_bftc(dialogue, judge, params)
    ability = label_language_ability(dialogue, judge, params)
    ratings = administer_bfi(dialogue, judge, params) if with_bfi else None
    scaffolding = [label_scaffolding(u, judge, params) for u in dialogue.teacher_utterances]
    return ValidationRecord(dialogue.id, traits, ability, ratings, scaffolding, params.model_name)


def format_trait_labels(labels: TraitLabels) -> str:
    return "\n".join(f"{d.value}: {labels[d].value}" for d in TRAITS)


def format_likert_ratings(ratings: list[int]) -> str:
    return "\n".join(f"{i}) {r}" for i, r in enumerate(ratings, start=1))


def format_scaffolding_labels(labels) -> str:
    return ", ".join(t.value for t in SCAFFOLDING_TYPES if t in labels)
