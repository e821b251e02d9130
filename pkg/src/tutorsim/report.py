"""Report tables (CSV) and the student-response export.

Column layouts are documented in docs/schemas.md and pinned by tests.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Sequence

from .corpus import CorpusKind, run_files, stamp
from .dialogue import Dialogue
from .errors import CorpusError, DegenerateVariance, TooFewPoints, ZeroVariance
from .persona import LEVELS, TRAITS, Level, all_profiles
from .pipeline import load_dialogues
from .psychometrics import (
    CorrelationCell,
    ScaffoldRecord,
    ability_scaffolding_correlation,
    agreement,
    corpus_reference_means,
    cronbach_alpha,
    descriptive,
    keyed_items,
    pearson,
    scaffolding_frequency,
    score_bfi,
    significance_stars,
    trait_means,
    trait_scaffolding_matrix,
)
from .validators import SCAFFOLDING_TYPES, ValidationRecord

log = logging.getLogger(__name__)

AGREEMENT_HEADER = ["dimension", "n", "precision", "recall", "f1", "degenerate"]
BFI_STATS_HEADER = ["trait", "n", "mean", "sd", "cronbach_alpha"] + [d.value for d in TRAITS[:-1]]
BFI_CORR_HEADER = ["trait_a", "trait_b", "n", "r", "p", "stars", "status"]
SCAFFOLD_TRAIT_HEADER = ["ability", "trait", "scaffolding", "n", "r", "p", "stars", "status"]
SCAFFOLD_ABILITY_HEADER = ["scaffolding", "n", "r", "p", "stars", "status"]
FREQ_HEADER = ["dialogue_id", "profile"] + [t.value for t in SCAFFOLDING_TYPES]

EXPORT_HEADER = "# tutorsim student responses; one utterance per line (\\n and \\\\ escaped)"

NA = "NA"


class ReportError(CorpusError):
    pass


def _f(x: float, digits: int = 6) -> str:
    out = f"{x:.{digits}f}"
    # values that round to zero print unsigned
    return out[1:] if out.startswith("-") and not out.strip("-0.") else out


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _agreement_row(name: str, gold: Sequence[Level], pred: Sequence[Level]) -> list:
    if not gold:
        return [name, 0, NA, NA, NA, NA]
    m = agreement(gold, pred).macro
    return [name, len(gold), _f(m.precision), _f(m.recall), _f(m.f1), str(m.degenerate).lower()]


def agreement_rows(gold_labels: list[dict], pred_labels: list[dict]) -> list[list]:
    """Per-trait macro P/R/F1 rows plus the unweighted average over traits."""
    rows = []
    scores = []
    for dim in TRAITS:
        gold = [g[dim] for g in gold_labels]
        pred = [p[dim] for p in pred_labels]
        rows.append(_agreement_row(dim.value, gold, pred))
        if gold:
            scores.append(agreement(gold, pred).macro)
    if scores:
        avg = [sum(getattr(s, k) for s in scores) / len(scores) for k in ("precision", "recall", "f1")]
        rows.append(["Averaged", len(gold_labels), *map(_f, avg), str(any(s.degenerate for s in scores)).lower()])
    else:
        rows.append(["Averaged", 0, NA, NA, NA, NA])
    return rows


def _cell_fields(cell) -> list:
    if isinstance(cell, CorrelationCell):
        return [cell.n, _f(cell.r), _f(cell.p), significance_stars(cell.p), "ok"]
    return ["", "", "", "", cell]


def _pearson_or_reason(x, y):
    try:
        return pearson(x, y)
    except ZeroVariance:
        return "zero_variance"
    except TooFewPoints:
        return "too_few_points"


def _join(dialogues: list[Dialogue], records: list[ValidationRecord]) -> list[tuple[Dialogue, ValidationRecord]]:
    by_id = {d.id: d for d in dialogues}
    orphans = [r.dialogue_id for r in records if r.dialogue_id not in by_id]
    if orphans:
        raise ReportError(f"validations reference unknown dialogues: {orphans[:5]}")
    return [(by_id[r.dialogue_id], r) for r in records]


def build_report(run_dir: str | Path, threshold_mode: str | None = None) -> dict[str, Path]:
    """Write every report file under ``<run_dir>/report`` and return their paths."""
    run_dir = Path(run_dir)
    files = run_files(run_dir)
    if not files[CorpusKind.DIALOGUES].path.exists() or not files[CorpusKind.VALIDATIONS].path.exists():
        raise ReportError(f"{run_dir}: dialogues.jsonl and validations.jsonl are both required")
    if threshold_mode is None:
        threshold_mode = _configured_threshold_mode(run_dir)
    dialogues = load_dialogues(run_dir)
    records = [ValidationRecord.from_dict(r) for r in files[CorpusKind.VALIDATIONS].read_all()]
    joined = _join(dialogues, records)
    out_dir = run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    persona = [(d, r) for d, r in joined if d.profile.has_persona]

    # gold BF-TC setting vs judge categorization
    path = out_dir / "agreement_bftc.csv"
    _write_csv(path, AGREEMENT_HEADER, agreement_rows([d.profile.traits for d, _ in persona], [r.predicted_traits for _, r in persona]))
    written["agreement_bftc"] = path

    path = out_dir / "agreement_ability.csv"
    _write_csv(
        path,
        AGREEMENT_HEADER,
        [_agreement_row("Language ability", [d.profile.ability for d, _ in joined], [r.predicted_ability for _, r in joined])],
    )
    written["agreement_ability"] = path

    # BFI scoring, descriptives, reliability, inter-trait correlations
    rated = [(d, r) for d, r in joined if r.bfi_ratings is not None]
    reference = corpus_reference_means([r.bfi_ratings for _, r in rated]) if rated else None
    mode = threshold_mode
    if mode == "corpus_mean" and reference is None:
        mode = "midpoint"
    scores = {r.dialogue_id: score_bfi(r.bfi_ratings, mode, reference) for _, r in rated}
    _rewrite_bfi_scores(files[CorpusKind.BFI_SCORES].path, rated, scores)
    written["bfi_scores"] = files[CorpusKind.BFI_SCORES].path

    means = {dim: [trait_means(r.bfi_ratings)[dim] for _, r in rated] for dim in TRAITS}
    stats_rows, corr_rows = [], []
    for i, dim in enumerate(TRAITS):
        vals = means[dim]
        try:
            mean, sd = descriptive(vals)
            mean_s, sd_s = _f(mean, 3), _f(sd, 3)
        except TooFewPoints:
            mean_s = _f(vals[0], 3) if vals else NA
            sd_s = NA
        try:
            alpha_s = _f(cronbach_alpha([keyed_items(r.bfi_ratings, dim) for _, r in rated]), 3)
        except (TooFewPoints, DegenerateVariance):
            alpha_s = NA
        row = [dim.value, len(vals), mean_s, sd_s, alpha_s]
        for j, other in enumerate(TRAITS[:-1]):
            if j >= i:
                row.append("--")
                continue
            cell = _pearson_or_reason(means[other], vals)
            if isinstance(cell, CorrelationCell):
                row.append(_f(cell.r, 3) + significance_stars(cell.p))
            else:
                row.append(NA)
            corr_rows.append([other.value, dim.value, *_corr_fields(cell, len(vals))])
        stats_rows.append(row)
    path = out_dir / "bfi_stats.csv"
    _write_csv(path, BFI_STATS_HEADER, stats_rows)
    written["bfi_stats"] = path
    path = out_dir / "bfi_correlations.csv"
    _write_csv(path, BFI_CORR_HEADER, corr_rows)
    written["bfi_correlations"] = path

    # BF-TC judge labels as reference, BFI-derived labels as prediction
    path = out_dir / "agreement_bftc_vs_bfi.csv"
    _write_csv(
        path,
        AGREEMENT_HEADER,
        agreement_rows([r.predicted_traits for _, r in rated], [scores[r.dialogue_id].labels() for _, r in rated]),
    )
    written["agreement_bftc_vs_bfi"] = path

    # scaffolding frequencies and their correlations with the conditioning profile
    freq_rows, scaffold_records, all_ability = [], [], []
    for d, r in joined:
        freqs = scaffolding_frequency(r, d)
        freq_rows.append([d.id, d.profile.code, *(_f(freqs[t]) for t in SCAFFOLDING_TYPES)])
        all_ability.append(ScaffoldRecord(d.profile.traits or {}, d.profile.ability, freqs))
        if d.profile.has_persona:
            scaffold_records.append(ScaffoldRecord(d.profile.traits, d.profile.ability, freqs))
    path = out_dir / "scaffold_frequencies.csv"
    _write_csv(path, FREQ_HEADER, freq_rows)
    written["scaffold_frequencies"] = path

    grids = trait_scaffolding_matrix(scaffold_records, strict=False)
    for ability in LEVELS:
        grid = grids[ability]
        rows = []
        for dim in TRAITS:
            for t in SCAFFOLDING_TYPES:
                cell = "insufficient_stratum" if grid is None else grid[dim, t]
                rows.append([ability.value, dim.value, t.value, *_cell_fields(cell)])
        path = out_dir / f"scaffold_trait_{ability.value.lower()}.csv"
        _write_csv(path, SCAFFOLD_TRAIT_HEADER, rows)
        written[f"scaffold_trait_{ability.value.lower()}"] = path

    cells = ability_scaffolding_correlation(all_ability) if all_ability else {t: "too_few_points" for t in SCAFFOLDING_TYPES}
    path = out_dir / "scaffold_ability.csv"
    _write_csv(path, SCAFFOLD_ABILITY_HEADER, [[t.value, *_cell_fields(cells[t])] for t in SCAFFOLDING_TYPES])
    written["scaffold_ability"] = path

    path = out_dir / "summary.txt"
    path.write_text(_summary_text(run_dir, dialogues, joined, mode, grids), encoding="utf-8")
    written["summary"] = path
    return written


def _corr_fields(cell, n: int) -> list:
    if isinstance(cell, CorrelationCell):
        return [cell.n, _f(cell.r), _f(cell.p), significance_stars(cell.p), "ok"]
    return [n, "", "", "", cell]


def _configured_threshold_mode(run_dir: Path) -> str:
    cfg = run_dir / "config.json"
    if cfg.exists():
        try:
            return json.loads(cfg.read_text(encoding="utf-8")).get("threshold_mode", "midpoint")
        except json.JSONDecodeError:
            log.warning("%s is not valid JSON; using midpoint labelling", cfg)
    return "midpoint"


def _rewrite_bfi_scores(path: Path, rated, scores) -> None:
    # derived from validations on every report run, so regenerate rather than append
    if path.exists():
        path.unlink()
    f = run_files(path.parent)[CorpusKind.BFI_SCORES]
    for _, r in rated:
        f.append(stamp({"dialogue_id": r.dialogue_id, **scores[r.dialogue_id].to_dict()}))


def _summary_text(run_dir: Path, dialogues, joined, mode: str, grids) -> str:
    lines = ["tutorsim run summary", ""]
    lines.append(f"dialogues: {len(dialogues)}")
    lines.append(f"validated dialogues: {len(joined)}")
    n_utt = sum(len(d.utterances) for d in dialogues)
    lines.append(f"utterances: {n_utt}")
    if dialogues:
        lines.append(f"mean utterances per dialogue: {n_utt / len(dialogues):.2f}")
    for stage in ("generate", "validate"):
        p = run_dir / f"{stage}_summary.json"
        if p.exists():
            s = json.loads(p.read_text(encoding="utf-8"))
            lines.append(f"{stage}: attempted {s['attempted']}, written {s['written']}, skipped {s['skipped']}, failed {s['failed']}")
    lines.append(f"BFI labelling threshold: {mode}")
    for ability in LEVELS:
        status = "insufficient data" if grids[ability] is None else "computed"
        lines.append(f"trait x scaffolding grid ({ability.value} ability): {status}")
    counts: dict[str, int] = {}
    for d in dialogues:
        counts[d.profile.code] = counts.get(d.profile.code, 0) + 1
    lines.append(f"distinct profiles: {len(counts)}")
    lines.append("")
    lines.append("dialogues per profile (ability-OCEAN):")
    for code in sorted(counts, key=_profile_sort_key):
        lines.append(f"  {code}: {counts[code]}")
    return "\n".join(lines) + "\n"


_CANONICAL = {p.code: i for i, p in enumerate(all_profiles())}


def _profile_sort_key(code: str):
    return (_CANONICAL.get(code, len(_CANONICAL)), code)


def escape_line(text: str) -> str:
    out = text.replace("\\", "\\\\").replace("\n", "\\n")
    return "\\" + out if out.startswith("#") else out


def unescape_line(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append("\n" if text[i + 1] == "n" else text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def export_responses(run_dir: str | Path, output: str | Path | None = None) -> Path:
    """Student utterances grouped into one block per profile, for external embedding."""
    run_dir = Path(run_dir)
    if not run_files(run_dir)[CorpusKind.DIALOGUES].path.exists():
        raise ReportError(f"no dialogue corpus in {run_dir}")
    dialogues = load_dialogues(run_dir)
    groups: dict[str, list[Dialogue]] = {}
    for d in dialogues:
        groups.setdefault(d.profile.code, []).append(d)
    lines = [EXPORT_HEADER]
    for code in sorted(groups, key=_profile_sort_key):
        ds = groups[code]
        utts = [u.text for d in ds for u in d.student_utterances]
        lines.append(f"## profile {code} dialogues={len(ds)} utterances={len(utts)}")
        lines.extend(escape_line(t) for t in utts)
    path = Path(output) if output else run_dir / "report" / "student_responses.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_export(path: str | Path) -> dict[str, list[str]]:
    """Parse an export file back into {profile code: utterances}."""
    groups: dict[str, list[str]] = {}
    current = None
    for line in Path(path).read_text(encoding="utf-8").split("\n"):
        if line.startswith("# ") or line == "":
            continue
        if line.startswith("## profile "):
            current = line.split()[2]
            groups[current] = []
        elif current is not None:
            groups[current].append(unescape_line(line))
    return groups
