from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from tutorsim.dialogue import Dialogue, Speaker, Utterance
from tutorsim.persona import TRAITS, Level, StudentProfile
from tutorsim.psychometrics import BFI_KEY
from tutorsim.validators import format_likert_ratings, format_trait_labels

# reference transcript (High O/C, Low E/A/N setting, Low ability)
RAINBOW = "In a classroom, one girl drew a rainbow and another girl drew a fish under the sea."
RAINBOW_LOW_TURNS = [
    "What a lovely picture here. What do you see in this picture that's colorful and appears in the sky sometimes after it rains?",
    "...",
    "It's quite alright. Think about the colors you know and how they form a beautiful arc in the sky. What is it called?",
    "... a rainbow.",
    "Exactly, a rainbow! Now, in our picture, where did the girl draw the rainbow?",
    "Up sky.",
    "Very close! You meant to say 'A girl drew a rainbow in the sky.' You've done a really good job describing the picture.",
]


def profile(code: str) -> StudentProfile:
    return StudentProfile.from_code(code)


def make_dialogue(turns: list[str], code: str = "H-HHHHL", did: str = "d1", image: str = RAINBOW) -> Dialogue:
    utts = [Utterance(i, Speaker.TEACHER if i % 2 == 0 else Speaker.STUDENT, t) for i, t in enumerate(turns)]
    return Dialogue(did, image, profile(code), utts, {})


def ratings_for_sums(sums: dict) -> list[int]:
    """A 44-item rating vector whose keyed trait sums equal ``sums``.

    Keyed item values are spread as evenly as possible, then reverse-keyed
    items are reflected back to raw ratings.
    """
    ratings = [0] * 44
    for dim, total in sums.items():
        items = BFI_KEY[dim]
        k = len(items)
        base, extra = divmod(total, k)
        assert 1 <= base <= 5 and (base < 5 or extra == 0)
        for j, (item, rev) in enumerate(items):
            keyed = base + (1 if j < extra else 0)
            ratings[item - 1] = 6 - keyed if rev else keyed
    assert all(1 <= r <= 5 for r in ratings)
    return ratings


def judge_script(traits: str, ability: str, ratings: list[int], scaffolds: list[str]) -> list[str]:
    """Scripted judge answers in the order ``validate_dialogue`` asks them."""
    labels = {d: Level.from_short(c) for d, c in zip(TRAITS, traits)}
    return [format_trait_labels(labels), ability, format_likert_ratings(ratings), *scaffolds]


def write_config(tmp_path: Path, **overrides) -> Path:
    cfg = {
        "seeds_path": "seeds.txt",
        "output_dir": "runs",
        "run_id": "test",
        "profiles": {"strategy": "grid", "count": 4},
        "teacher": {"backend": {"kind": "scripted", "responses": ["What do you see?", "Where is it?", "Well done, great work."]}},
        "student": {"backend": {"kind": "scripted", "responses": ["A rainbow.", "In the sky."]}},
        "judge": {
            "backend": {
                "kind": "scripted",
                "responses": judge_script("HHHHL", "High", [3] * 44, ["Questioning", "Feeding back, Questioning", "Feeding back, Social-emotional Support"]),
            }
        },
        "session": {"min_utterances": 4, "max_utterances": 10},
    }
    for key, value in overrides.items():
        cfg[key] = value
    if not (tmp_path / "seeds.txt").exists():
        (tmp_path / "seeds.txt").write_text(RAINBOW + "\n", encoding="utf-8")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def noisy(text: str, rnd: random.Random) -> str:
    """Same content with random letter case and whitespace jitter."""
    out = []
    for ch in text:
        ch = ch.upper() if rnd.random() < 0.3 else (ch.lower() if rnd.random() < 0.3 else ch)
        if ch == " ":
            ch = rnd.choice([" ", "  ", "\t", " "])
        out.append(ch)
    pad = lambda: rnd.choice(["", " ", "\n", "  \n"])
    lines = ["\t" * rnd.randint(0, 1) + ln + " " * rnd.randint(0, 2) for ln in "".join(out).split("\n")]
    return pad() + "\n".join(lines) + pad()


@pytest.fixture
def rainbow_low() -> Dialogue:
    return make_dialogue(RAINBOW_LOW_TURNS, code="L-HHLLL")
