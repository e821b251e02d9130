import csv
import json
import re
from pathlib import Path

import pytest

from conftest import RAINBOW, judge_script, write_config
from tutorsim.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PARTIAL, main
from tutorsim.corpus import CorpusFile, CorpusKind, stamp
from tutorsim.persona import TRAITS, Level, all_profiles
from tutorsim.psychometrics import BFI_KEY
from tutorsim.report import EXPORT_HEADER, read_export

DOCS = Path(__file__).resolve().parents[1] / "docs" / "schemas.md"
SCAFFOLDS = ["Questioning", "Feeding back, Questioning", "Feeding back, Social-emotional Support"]


def documented_headers() -> dict[str, str]:
    """CSV header line per file name, as written in docs/schemas.md."""
    text = DOCS.read_text(encoding="utf-8")
    out = {}
    for section in re.split(r"^### ", text, flags=re.M)[1:]:
        title, _, body = section.partition("\n")
        block = re.search(r"```csv\n(.+?)\n```", body)
        if block:
            for name in re.findall(r"\w+\.csv", title):
                out[name] = block.group(1)
    return out


def ratings_matching(profile) -> list[int]:
    """BFI ratings whose midpoint labels reproduce the profile's traits."""
    ratings = [0] * 44
    for dim in TRAITS:
        keyed = 4 if profile.traits[dim] is Level.HIGH else 2
        for item, rev in BFI_KEY[dim]:
            ratings[item - 1] = 6 - keyed if rev else keyed
    return ratings


def gold_sessions(profiles) -> list[list[str]]:
    return [
        judge_script(p.code[2:], p.ability.value, ratings_matching(p), SCAFFOLDS)
        for p in profiles
    ]


def run_dir(tmp_path) -> Path:
    return tmp_path / "runs" / "test"


def run_all(tmp_path, **overrides) -> list[int]:
    cfg = str(write_config(tmp_path, **overrides))
    rd = str(run_dir(tmp_path))
    return [
        main(["generate", "--config", cfg]),
        main(["validate", "--config", cfg]),
        main(["report", "--run", rd]),
        main(["export-responses", "--run", rd]),
    ]


def read_jsonl(path):
    return [json.loads(ln) for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- generate ---

def test_generate_two_seeds_full_grid(tmp_path):
    (tmp_path / "seeds.txt").write_text(RAINBOW + "\nAn owl sits on a branch at night.\n")
    cfg = write_config(tmp_path, profiles={"strategy": "grid", "count": 64})
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    dialogues = read_jsonl(run_dir(tmp_path) / "dialogues.jsonl")
    assert len(dialogues) == 128
    assert len({d["id"] for d in dialogues}) == 128
    seeds = [d["metadata"]["image_seed_id"] for d in dialogues]
    assert seeds.count("seed-0001") == seeds.count("seed-0002") == 64
    summary = json.loads((run_dir(tmp_path) / "generate_summary.json").read_text())
    assert summary["written"] == 128 and len(summary["per_profile"]) == 64
    assert all(v == 2 for v in summary["per_profile"].values())


def test_generate_count_zero(tmp_path):
    cfg = write_config(tmp_path, profiles={"strategy": "grid", "count": 0})
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    assert (run_dir(tmp_path) / "dialogues.jsonl").read_text() == ""


def test_generate_missing_seeds(tmp_path, capsys):
    cfg = write_config(tmp_path, seeds_path="nope.txt")
    assert main(["generate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "seeds" in capsys.readouterr().err


def test_bad_config_exit(tmp_path):
    p = tmp_path / "config.json"
    p.write_text("{not json")
    assert main(["generate", "--config", str(p)]) == EXIT_CONFIG
    p.write_text(json.dumps({"seeds_path": "x", "mystery": 1}))
    assert main(["generate", "--config", str(p)]) == EXIT_CONFIG


def test_generate_resume_skips_existing(tmp_path):
    cfg = str(write_config(tmp_path))
    assert main(["generate", "--config", cfg]) == EXIT_OK
    before = (run_dir(tmp_path) / "dialogues.jsonl").read_bytes()
    assert main(["generate", "--config", cfg]) == EXIT_OK
    assert (run_dir(tmp_path) / "dialogues.jsonl").read_bytes() == before
    assert json.loads((run_dir(tmp_path) / "generate_summary.json").read_text())["skipped"] == 4


def test_generate_backend_outage_exit_partial(tmp_path):
    # teacher script runs dry after a single line, so every session is abandoned
    cfg = write_config(tmp_path, teacher={"backend": {"kind": "scripted", "responses": ["What do you see?"]}})
    assert main(["generate", "--config", str(cfg)]) == EXIT_PARTIAL
    events = [e["event"] for e in read_jsonl(run_dir(tmp_path) / "audit.jsonl")]
    assert events.count("abandoned") == 4
    assert (run_dir(tmp_path) / "dialogues.jsonl").read_text() == ""


# --- validate ---

def test_validate_three_records(tmp_path):
    cfg = str(write_config(tmp_path, profiles={"strategy": "grid", "count": 3}))
    assert main(["generate", "--config", cfg]) == EXIT_OK
    assert main(["validate", "--config", cfg]) == EXIT_OK
    recs = read_jsonl(run_dir(tmp_path) / "validations.jsonl")
    assert [r["dialogue_id"] for r in recs] == ["dlg-00000", "dlg-00001", "dlg-00002"]
    assert all(len(r["scaffolding"]) == 3 and len(r["bfi_ratings"]) == 44 for r in recs)


def test_validate_one_unparsable(tmp_path):
    good = judge_script("HHHHL", "High", [3] * 44, SCAFFOLDS)
    bad = ["I would rather not say."] * 3
    cfg = str(write_config(
        tmp_path,
        profiles={"strategy": "grid", "count": 3},
        judge={"backend": {"kind": "scripted", "sessions": [good, bad, good]}},
    ))
    assert main(["generate", "--config", cfg]) == EXIT_OK
    assert main(["validate", "--config", cfg]) == EXIT_PARTIAL
    recs = read_jsonl(run_dir(tmp_path) / "validations.jsonl")
    assert [r["dialogue_id"] for r in recs] == ["dlg-00000", "dlg-00002"]
    summary = json.loads((run_dir(tmp_path) / "validate_summary.json").read_text())
    assert summary["failed"] == 1 and summary["failures"][0]["dialogue_id"] == "dlg-00001"


def test_validate_idempotent(tmp_path):
    cfg = str(write_config(tmp_path))
    main(["generate", "--config", cfg])
    assert main(["validate", "--config", cfg]) == EXIT_OK
    first = (run_dir(tmp_path) / "validations.jsonl").read_bytes()
    assert main(["validate", "--config", cfg]) == EXIT_OK
    assert (run_dir(tmp_path) / "validations.jsonl").read_bytes() == first
    summary = json.loads((run_dir(tmp_path) / "validate_summary.json").read_text())
    assert summary["skipped"] == 4 and summary["attempted"] == 0


def test_validate_without_corpus(tmp_path):
    cfg = str(write_config(tmp_path))
    assert main(["validate", "--config", cfg]) == EXIT_CONFIG


def test_audit_indices_monotonic_across_stages(tmp_path):
    run_all(tmp_path)
    idx = [e["call_index"] for e in read_jsonl(run_dir(tmp_path) / "audit.jsonl")]
    assert idx == list(range(len(idx)))


# --- report ---

def test_report_perfect_agreement(tmp_path):
    profiles = all_profiles()
    codes = run_all(
        tmp_path,
        profiles={"strategy": "grid", "count": 64},
        judge={"backend": {"kind": "scripted", "sessions": gold_sessions(profiles)}},
    )
    assert codes == [EXIT_OK] * 4
    rep = run_dir(tmp_path) / "report"
    for name in ("agreement_bftc.csv", "agreement_ability.csv", "agreement_bftc_vs_bfi.csv"):
        for row in read_csv(rep / name):
            assert (row["precision"], row["recall"], row["f1"], row["degenerate"]) == ("1.000000",) * 3 + ("false",), (name, row)
    rows = read_csv(rep / "agreement_bftc.csv")
    assert [r["dimension"] for r in rows] == [d.value for d in TRAITS] + ["Averaged"]
    assert all(r["n"] == "64" for r in rows)


def test_report_empty_stratum(tmp_path):
    # the first four grid profiles are all High ability
    assert run_all(tmp_path) == [EXIT_OK] * 4
    rep = run_dir(tmp_path) / "report"
    low = read_csv(rep / "scaffold_trait_low.csv")
    assert len(low) == 35 and all(r["status"] == "insufficient_stratum" and r["r"] == "" for r in low)
    high = read_csv(rep / "scaffold_trait_high.csv")
    assert len(high) == 35 and {r["status"] for r in high} <= {"ok", "zero_variance"}
    assert len(read_csv(rep / "agreement_bftc.csv")) == 6
    assert "insufficient data" in (rep / "summary.txt").read_text()


def test_report_csv_headers_match_docs(tmp_path):
    run_all(tmp_path, profiles={"strategy": "grid", "count": 64})
    headers = documented_headers()
    rep = run_dir(tmp_path) / "report"
    produced = sorted(p.name for p in rep.glob("*.csv"))
    assert sorted(headers) == produced
    for name, header in headers.items():
        assert (rep / name).read_text(encoding="utf-8").split("\n", 1)[0] == header, name


def test_report_orphan_validation(tmp_path):
    run_all(tmp_path)
    f = CorpusFile(run_dir(tmp_path) / "validations.jsonl", CorpusKind.VALIDATIONS)
    rec = dict(f.read_all()[0])
    rec["dialogue_id"] = "dlg-99999"
    f.append(rec)
    assert main(["report", "--run", str(run_dir(tmp_path))]) == EXIT_IO


def test_report_missing_inputs(tmp_path):
    assert main(["report", "--run", str(tmp_path / "nowhere")]) == EXIT_IO


def test_report_threshold_override(tmp_path):
    run_all(tmp_path)
    rd = run_dir(tmp_path)
    assert main(["report", "--run", str(rd), "--threshold-mode", "corpus_mean"]) == EXIT_OK
    assert {r["threshold_mode"] for r in read_jsonl(rd / "bfi_scores.jsonl")} == {"corpus_mean"}
    assert main(["report", "--run", str(rd)]) == EXIT_OK
    assert {r["threshold_mode"] for r in read_jsonl(rd / "bfi_scores.jsonl")} == {"midpoint"}


def test_report_bfi_scores_regenerated(tmp_path):
    run_all(tmp_path)
    rd = str(run_dir(tmp_path))
    first = (run_dir(tmp_path) / "bfi_scores.jsonl").read_bytes()
    assert main(["report", "--run", rd]) == EXIT_OK
    assert (run_dir(tmp_path) / "bfi_scores.jsonl").read_bytes() == first


# --- export-responses ---

def _write_corpus(rd: Path, dialogues):
    f = CorpusFile(rd / "dialogues.jsonl", CorpusKind.DIALOGUES)
    rd.mkdir(parents=True, exist_ok=True)
    (rd / "dialogues.jsonl").touch()
    for d in dialogues:
        f.append(stamp(d.to_dict()))


def test_export_student_only(tmp_path):
    from conftest import make_dialogue

    a = make_dialogue(["Teacher one?", "Student one.", "Teacher two?", "Student two."], code="H-HHHHL", did="a")
    b = make_dialogue(["Teacher three?", "Student three."], code="L-LLLLL", did="b")
    rd = tmp_path / "run"
    _write_corpus(rd, [a, b])
    assert main(["export-responses", "--run", str(rd)]) == EXIT_OK
    text = (rd / "report" / "student_responses.txt").read_text(encoding="utf-8")
    assert "Teacher" not in text.replace("tutorsim", "")
    assert read_export(rd / "report" / "student_responses.txt") == {
        "H-HHHHL": ["Student one.", "Student two."],
        "L-LLLLL": ["Student three."],
    }
    assert "## profile H-HHHHL dialogues=1 utterances=2" in text


def test_export_empty_corpus(tmp_path):
    rd = tmp_path / "run"
    _write_corpus(rd, [])
    out = tmp_path / "out.txt"
    assert main(["export-responses", "--run", str(rd), "--output", str(out)]) == EXIT_OK
    assert out.read_text(encoding="utf-8") == EXPORT_HEADER + "\n"


def test_export_byte_exact(tmp_path):
    from conftest import make_dialogue

    tricky = [
        "Ein Regenbogen… 🌈  mit  Leerzeichen ",
        "back\\slash and \\n literal",
        "two\nlines",
        "# looks like a comment",
        "## profile H-HHHHH dialogues=9 utterances=9",
        "\\",
    ]
    turns = []
    for t in tricky:
        turns += ["Tell me more?", t]
    rd = tmp_path / "run"
    _write_corpus(rd, [make_dialogue(turns, did="x")])
    out = tmp_path / "out.txt"
    assert main(["export-responses", "--run", str(rd), "--output", str(out)]) == EXIT_OK
    assert read_export(out) == {"H-HHHHL": tricky}
    assert len(out.read_text(encoding="utf-8").split("\n")) == len(tricky) + 3


def test_export_missing_corpus(tmp_path):
    assert main(["export-responses", "--run", str(tmp_path / "none")]) == EXIT_IO


# --- determinism ---

def _outputs(base: Path) -> dict[str, bytes]:
    rep = base / "runs" / "test" / "report"
    files = {p.name: p.read_bytes() for p in rep.iterdir()}
    files["validations.jsonl"] = (base / "runs" / "test" / "validations.jsonl").read_bytes()
    return files


@pytest.mark.parametrize("parallelism", [1, 4])
def test_end_to_end_deterministic(tmp_path, parallelism):
    outs = []
    for name in ("one", "two"):
        base = tmp_path / name
        base.mkdir()
        assert run_all(base, profiles={"strategy": "grid", "count": 16}, parallelism=parallelism) == [EXIT_OK] * 4
        outs.append(_outputs(base))
    assert outs[0] == outs[1]


def test_shipped_example_config(tmp_path):
    import shutil

    for name in ("example_config.json", "example_seeds.txt"):
        shutil.copy(DOCS.parent / name, tmp_path / name)
    cfg = str(tmp_path / "example_config.json")
    assert main(["generate", "--config", cfg]) == EXIT_OK
    assert main(["validate", "--config", cfg]) == EXIT_OK
    rd = str(tmp_path / "runs" / "demo")
    assert main(["report", "--run", rd]) == EXIT_OK
    assert len(read_jsonl(Path(rd) / "validations.jsonl")) == 64
