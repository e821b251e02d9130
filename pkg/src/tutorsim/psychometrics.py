"""BFI scoring, reliability, correlation and agreement statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .errors import (
    CoverageMismatch,
    DegenerateVariance,
    EmptyInput,
    InsufficientStratum,
    LengthMismatch,
    OutOfRange,
    TooFewPoints,
    WrongLength,
    ZeroVariance,
)
from .persona import LEVELS, TRAITS, Level, TraitDimension
from .validators import SCAFFOLDING_TYPES, ScaffoldingType

LIKERT_MIN, LIKERT_MAX = 1, 5
MIDPOINT = 3.0

# (item number, reverse-keyed); order follows the instrument's scoring key
BFI_KEY: dict[TraitDimension, tuple[tuple[int, bool], ...]] = {
    TraitDimension.EXTRAVERSION: ((1, False), (6, True), (11, False), (16, False), (21, True), (26, False), (31, True), (36, False)),
    TraitDimension.AGREEABLENESS: ((2, True), (7, False), (12, True), (17, False), (22, False), (27, True), (32, False), (37, True), (42, False)),
    TraitDimension.CONSCIENTIOUSNESS: ((3, False), (8, True), (13, False), (18, True), (23, True), (28, False), (33, False), (38, False), (43, True)),
    TraitDimension.NEUROTICISM: ((4, False), (9, True), (14, False), (19, False), (24, True), (29, False), (34, True), (39, False)),
    TraitDimension.OPENNESS: ((5, False), (10, False), (15, False), (20, False), (25, False), (30, False), (35, True), (40, False), (41, True), (44, False)),
}
BFI_ITEM_COUNT = sum(len(v) for v in BFI_KEY.values())


def reverse_score(x: int) -> int:
    if not LIKERT_MIN <= x <= LIKERT_MAX:
        raise OutOfRange(f"rating {x} outside {LIKERT_MIN}..{LIKERT_MAX}")
    return LIKERT_MIN + LIKERT_MAX - x


@dataclass(frozen=True)
class TraitScore:
    sum: int
    mean: float
    label: Level


@dataclass(frozen=True)
class BfiScore:
    traits: Mapping[TraitDimension, TraitScore]
    threshold_mode: str

    def labels(self) -> dict[TraitDimension, Level]:
        return {d: self.traits[d].label for d in TRAITS}

    def to_dict(self) -> dict:
        return {
            "threshold_mode": self.threshold_mode,
            "traits": {
                d.value: {"sum": s.sum, "mean": s.mean, "label": s.label.value}
                for d, s in ((d, self.traits[d]) for d in TRAITS)
            },
        }


def keyed_items(ratings: Sequence[int], dim: TraitDimension) -> list[int]:
    """Ratings of one trait's items with reverse-keyed items reflected."""
    return [reverse_score(ratings[i - 1]) if rev else ratings[i - 1] for i, rev in BFI_KEY[dim]]


def _check_ratings(ratings: Sequence[int]) -> None:
    if len(ratings) != BFI_ITEM_COUNT:
        raise WrongLength(f"expected {BFI_ITEM_COUNT} ratings, got {len(ratings)}")
    for i, r in enumerate(ratings, start=1):
        if not LIKERT_MIN <= r <= LIKERT_MAX:
            raise OutOfRange(f"item {i}: rating {r} outside {LIKERT_MIN}..{LIKERT_MAX}")


def score_bfi(
    ratings: Sequence[int],
    threshold_mode: str = "midpoint",
    reference_means: Mapping[TraitDimension, float] | None = None,
) -> BfiScore:
    """Sum and average each trait's keyed items and label High iff mean >= threshold.

    ``midpoint`` uses 3.0; ``corpus_mean`` compares against ``reference_means``.
    """
    _check_ratings(ratings)
    if threshold_mode == "midpoint":
        thresholds = {d: MIDPOINT for d in TRAITS}
    elif threshold_mode == "corpus_mean":
        if reference_means is None or set(reference_means) != set(TRAITS):
            raise ValueError("corpus_mean mode needs a reference mean for all five traits")
        thresholds = dict(reference_means)
    else:
        raise ValueError(f"unknown threshold mode {threshold_mode!r}")
    out = {}
    for dim in TRAITS:
        items = keyed_items(ratings, dim)
        total = sum(items)
        mean = total / len(items)
        out[dim] = TraitScore(total, mean, Level.HIGH if mean >= thresholds[dim] else Level.LOW)
    return BfiScore(out, threshold_mode)


def trait_means(ratings: Sequence[int]) -> dict[TraitDimension, float]:
    _check_ratings(ratings)
    return {d: float(np.mean(keyed_items(ratings, d))) for d in TRAITS}


def corpus_reference_means(all_ratings: Iterable[Sequence[int]]) -> dict[TraitDimension, float]:
    """Per-trait mean of per-respondent trait means, for ``corpus_mean`` labelling."""
    rows = [trait_means(r) for r in all_ratings]
    if not rows:
        raise EmptyInput("no BFI ratings to average")
    return {d: float(np.mean([row[d] for row in rows])) for d in TRAITS}


def cronbach_alpha(matrix) -> float:
    """Internal consistency of an (n respondents x k items) matrix, ddof=1 throughout."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2:
        raise ValueError("cronbach_alpha expects a 2-D matrix")
    n, k = x.shape
    if n < 2 or k < 2:
        raise TooFewPoints(f"need at least 2 respondents and 2 items, got {n}x{k}")
    totals = x.sum(axis=1)
    if np.ptp(totals) == 0:
        raise DegenerateVariance("row totals have zero variance")
    return float(k / (k - 1) * (1 - x.var(axis=0, ddof=1).sum() / totals.var(ddof=1)))


@dataclass(frozen=True)
class CorrelationCell:
    r: float
    p: float
    n: int


def student_t_two_tailed(t: float, df: int) -> float:
    """Two-tailed p of Student's t via the regularized incomplete beta function."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationCell:
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise TooFewPoints(f"pearson needs n >= 3, got {n}")
    xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    # exact constancy test; the mean of repeated floats can leave rounding residue
    if np.ptp(xa) == 0 or np.ptp(ya) == 0:
        raise ZeroVariance("one of the variables is constant")
    dx, dy = xa - xa.mean(), ya - ya.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return CorrelationCell(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1 - r * r))
    p = min(1.0, max(0.0, student_t_two_tailed(t, n - 2)))
    return CorrelationCell(r, p, n)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool  # some ratio was 0/0 and was set to 0


@dataclass(frozen=True)
class Agreement:
    per_class: Mapping[Level, ClassScores]
    macro: ClassScores
    n: int


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def agreement(gold: Sequence[Level], pred: Sequence[Level]) -> Agreement:
    """Per-class and macro precision/recall/F1 over the two levels."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"lengths differ: {len(gold)} vs {len(pred)}")
    if not gold:
        raise EmptyInput("agreement over an empty sample")
    gold = [Level(g) for g in gold]
    pred = [Level(p) for p in pred]
    per_class = {}
    for cls in LEVELS:
        tp = sum(g is cls and p is cls for g, p in zip(gold, pred))
        fp = sum(g is not cls and p is cls for g, p in zip(gold, pred))
        fn = sum(g is cls and p is not cls for g, p in zip(gold, pred))
        prec, d1 = _ratio(tp, tp + fp)
        rec, d2 = _ratio(tp, tp + fn)
        f1, d3 = (2 * prec * rec / (prec + rec), False) if prec + rec else (0.0, True)
        per_class[cls] = ClassScores(prec, rec, f1, tp + fn, d1 or d2 or d3)
    macro = ClassScores(
        float(np.mean([c.precision for c in per_class.values()])),
        float(np.mean([c.recall for c in per_class.values()])),
        float(np.mean([c.f1 for c in per_class.values()])),
        len(gold),
        any(c.degenerate for c in per_class.values()),
    )
    return Agreement(per_class, macro, len(gold))


def descriptive(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation."""
    if len(values) < 2:
        raise TooFewPoints(f"sd needs at least 2 values, got {len(values)}")
    a = np.asarray(values, dtype=float)
    sd = 0.0 if np.ptp(a) == 0 else float(a.std(ddof=1))
    return float(a.mean()), sd


def scaffolding_frequency(record, dialogue) -> dict[ScaffoldingType, float]:
    """Share of the dialogue's teacher utterances carrying each scaffolding type."""
    teacher_idx = [u.index for u in dialogue.teacher_utterances]
    labelled = [s.utterance_index for s in record.scaffolding]
    if sorted(labelled) != teacher_idx:
        raise CoverageMismatch(
            f"{record.dialogue_id}: scaffolding labels cover {sorted(labelled)}, teacher turns are {teacher_idx}"
        )
    m = len(teacher_idx)
    return {t: sum(t in s.labels for s in record.scaffolding) / m for t in SCAFFOLDING_TYPES}


@dataclass(frozen=True)
class ScaffoldRecord:
    traits: Mapping[TraitDimension, Level]
    ability: Level
    frequencies: Mapping[ScaffoldingType, float]


def _encode(level: Level) -> float:
    return 1.0 if level is Level.HIGH else 0.0


def _cell(x, y) -> CorrelationCell | str:
    # undefined cells carry the reason instead of a value
    try:
        return pearson(x, y)
    except ZeroVariance:
        return "zero_variance"
    except TooFewPoints:
        return "too_few_points"


def trait_scaffolding_grid(records: Sequence[ScaffoldRecord]) -> dict[tuple[TraitDimension, ScaffoldingType], CorrelationCell | str]:
    if len(records) < 3:
        raise InsufficientStratum(f"need at least 3 records, got {len(records)}")
    grid = {}
    for dim in TRAITS:
        x = [_encode(r.traits[dim]) for r in records]
        for t in SCAFFOLDING_TYPES:
            grid[dim, t] = _cell(x, [r.frequencies[t] for r in records])
    return grid


def trait_scaffolding_matrix(records: Sequence[ScaffoldRecord], strict: bool = True) -> dict[Level, dict | None]:
    """One 5x7 trait-by-scaffolding correlation grid per ability stratum.

    With ``strict=False`` a stratum holding fewer than three records maps to
    None instead of raising ``InsufficientStratum``.
    """
    out: dict[Level, dict | None] = {}
    for ability in LEVELS:
        stratum = [r for r in records if r.ability is ability]
        try:
            out[ability] = trait_scaffolding_grid(stratum)
        except InsufficientStratum:
            if strict:
                raise
            out[ability] = None
    return out


def ability_scaffolding_correlation(records: Sequence[ScaffoldRecord]) -> dict[ScaffoldingType, CorrelationCell | str]:
    """Point-biserial correlation of ability (High=1) with each scaffolding frequency."""
    x = [_encode(r.ability) for r in records]
    return {t: _cell(x, [r.frequencies[t] for r in records]) for t in SCAFFOLDING_TYPES}
