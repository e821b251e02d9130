"""Student profiles: BF-TC trait levels, language ability, and profile sampling."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping


class TraitDimension(str, Enum):
    # declaration order is the canonical O, C, E, A, N row order
    OPENNESS = "Openness"
    CONSCIENTIOUSNESS = "Conscientiousness"
    EXTRAVERSION = "Extraversion"
    AGREEABLENESS = "Agreeableness"
    NEUROTICISM = "Neuroticism"

    @property
    def short(self) -> str:
        return self.value[0]


TRAITS: tuple[TraitDimension, ...] = tuple(TraitDimension)


class Level(str, Enum):
    HIGH = "High"
    LOW = "Low"

    @property
    def short(self) -> str:
        return self.value[0]

    @classmethod
    def from_short(cls, code: str) -> Level:
        return {"H": cls.HIGH, "L": cls.LOW}[code]


LEVELS: tuple[Level, ...] = (Level.HIGH, Level.LOW)


@dataclass(frozen=True)
class StudentProfile:
    """Ability level plus one level per trait.

    ``traits`` is None for the no-persona control, where the student prompt
    carries no personality block.
    """

    ability: Level
    traits: Mapping[TraitDimension, Level] | None

    def __post_init__(self) -> None:
        if self.traits is not None:
            if set(self.traits) != set(TRAITS):
                raise ValueError("profile must assign exactly the five trait dimensions")
            # freeze into canonical order so equality and hashing are stable
            object.__setattr__(self, "traits", {d: Level(self.traits[d]) for d in TRAITS})
        object.__setattr__(self, "ability", Level(self.ability))

    def __hash__(self) -> int:
        return hash(self.code)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StudentProfile) and self.code == other.code

    @property
    def has_persona(self) -> bool:
        return self.traits is not None

    @property
    def code(self) -> str:
        """Compact id such as ``H-HHLHL``: ability, then O, C, E, A, N."""
        if self.traits is None:
            return f"{self.ability.short}-none"
        return f"{self.ability.short}-" + "".join(self.traits[d].short for d in TRAITS)

    @classmethod
    def from_code(cls, code: str) -> StudentProfile:
        ability, _, rest = code.partition("-")
        if rest == "none":
            return cls(Level.from_short(ability), None)
        if len(rest) != len(TRAITS):
            raise ValueError(f"bad profile code {code!r}")
        return cls(Level.from_short(ability), {d: Level.from_short(c) for d, c in zip(TRAITS, rest)})

    def to_dict(self) -> dict:
        return {
            "ability": self.ability.value,
            "traits": None if self.traits is None else {d.value: self.traits[d].value for d in TRAITS},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> StudentProfile:
        traits = data.get("traits")
        return cls(
            Level(data["ability"]),
            None if traits is None else {TraitDimension(k): Level(v) for k, v in traits.items()},
        )


@dataclass(frozen=True)
class TraitDescriptor:
    dimension: TraitDimension
    level: Level
    descriptors: tuple[str, ...]


@dataclass(frozen=True)
class AbilityDescriptor:
    level: Level
    descriptors: tuple[str, ...]


def _read_lines(name: str) -> tuple[str, ...]:
    text = resources.files("tutorsim.data.persona").joinpath(name).read_text(encoding="utf-8")
    return tuple(line for line in text.splitlines() if line.strip())


@lru_cache(maxsize=None)
def trait_description(dimension: TraitDimension, level: Level) -> TraitDescriptor:
    dimension, level = TraitDimension(dimension), Level(level)
    phrases = _read_lines(f"{dimension.value.lower()}_{level.value.lower()}.txt")
    return TraitDescriptor(dimension, level, phrases)


@lru_cache(maxsize=None)
def ability_description(level: Level) -> AbilityDescriptor:
    level = Level(level)
    return AbilityDescriptor(level, _read_lines(f"ability_{level.value.lower()}.txt"))


def all_profiles() -> list[StudentProfile]:
    """The 64 persona profiles in canonical order (ability first, then O..N, High before Low)."""
    out = []
    for ability in LEVELS:
        for combo in itertools.product(LEVELS, repeat=len(TRAITS)):
            out.append(StudentProfile(ability, dict(zip(TRAITS, combo))))
    return out


def sample_profiles(count: int, seed: int = 0, strategy: str = "grid") -> list[StudentProfile]:
    """Draw ``count`` profiles.

    ``grid`` cycles through the canonical 64-profile enumeration, truncated to
    ``count``; ``uniform`` draws independently with a seeded RNG.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    space = all_profiles()
    if strategy == "grid":
        return [space[i % len(space)] for i in range(count)]
    if strategy == "uniform":
        rng = random.Random(seed)
        return [rng.choice(space) for _ in range(count)]
    raise ValueError(f"unknown sampling strategy {strategy!r}")
