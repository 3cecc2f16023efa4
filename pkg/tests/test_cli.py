"""
Tests for the command-line interface.

EN: Drives every command through typer's CliRunner against temporary inputs.
FA: همه فرمان‌ها را با CliRunner از typer روی ورودی‌های موقت اجرا می‌کند.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest
import yaml
from typer.testing import CliRunner

from src.cli import app
from src.config import CONFIG_DIR
from src.data.lexicon_ingest import ConceptLexicon
from src.models.rag_retriever import ChunkStore
from src.pipeline.artifact import CHUNKS_FILE
from src.utils.io import read_jsonl
from tests.conftest import UMLS_MARKER

runner = CliRunner()


@pytest.fixture
def config_dir(tmp_path: Path) -> Path:
    """
    EN: Project YAML sections plus a pipeline.yaml that logs into the temporary directory.
    FA: بخش‌های YAML پروژه به همراه pipeline.yaml که لاگ را در پوشه موقت می‌نویسد.
    """
    out = tmp_path / "configs"
    out.mkdir()
    for name in ("generation", "lexicon", "rag"):
        shutil.copy(CONFIG_DIR / f"{name}.yaml", out / f"{name}.yaml")
    (out / "pipeline.yaml").write_text(
        yaml.safe_dump({"log_dir": str(tmp_path / "logs"), "max_retries": 1, "backoff_base": 0.0, "backoff_max": 0.0}),
        encoding="utf-8",
    )
    return out


def _invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def test_ingest_lexicon(tmp_path, rrf_files, config_dir):
    conso, sty = rrf_files
    out = tmp_path / "lexicon.jsonl"
    result = _invoke("ingest-lexicon", "--conso", conso, "--sty", sty, "--out", out, "--config-dir", config_dir)
    assert result.exit_code == 0, result.output
    assert "Saved lexicon" in result.output
    lexicon = ConceptLexicon.load(out)
    assert lexicon.lookup("Plavix")
    assert not lexicon.lookup("hypertension")

    aborted = _invoke(
        "ingest-lexicon", "--conso", conso, "--sty", sty, "--out", tmp_path / "x.jsonl",
        "--on-malformed", "abort", "--config-dir", config_dir,
    )
    assert aborted.exit_code == 1


def test_ingest_lexicon_with_sty_names(tmp_path, rrf_files, config_dir):
    conso, sty = rrf_files
    out = tmp_path / "antibiotics.jsonl"
    result = _invoke(
        "ingest-lexicon", "--conso", conso, "--sty", sty, "--out", out, "--sty-names", "Antibiotic",
        "--config-dir", config_dir,
    )
    assert result.exit_code == 0, result.output
    assert ConceptLexicon.load(out).cuis() == {"C0008809"}

    out = tmp_path / "pharm.jsonl"
    result = _invoke(
        "ingest-lexicon", "--conso", conso, "--sty", sty, "--out", out, "--sty-names", "pharmacologic substance",
        "--config-dir", config_dir,
    )
    assert result.exit_code == 0, result.output
    lexicon = ConceptLexicon.load(out)
    assert lexicon.lookup("aspirin") == frozenset({("C0004057", "pharmacologic substance")})
    assert lexicon.lookup("metoprolol") == frozenset({("C0025598", "pharmacologic substance")})
    assert not lexicon.lookup("Cipro")


def test_stats(note_corpus):
    result = _invoke("stats", "--corpus", note_corpus, "--dataset", "n2c2")
    assert result.exit_code == 0, result.output
    assert "Documents: 1" in result.output
    assert "Strength-Drug" in result.output
    assert "11" in result.output


def test_map_concepts_and_render(tmp_path, note_corpus, lexicon_file, config_dir):
    out = tmp_path / "concepts.jsonl"
    result = _invoke(
        "map-concepts", "--corpus", note_corpus, "--lexicon", lexicon_file, "--out", out, "--config-dir", config_dir
    )
    assert result.exit_code == 0, result.output
    (record,) = list(read_jsonl(out))
    assert record["doc_id"] == "note-001"

    rendered = _invoke(
        "render", "--corpus", note_corpus, "--doc", "note-001", "--rtype", "Strength-Drug",
        "--mode", "umls", "--lexicon", lexicon_file, "--config-dir", config_dir,
    )
    assert rendered.exit_code == 0, rendered.output
    assert UMLS_MARKER in rendered.output
    assert "Plavix" in rendered.output

    missing = _invoke(
        "render", "--corpus", note_corpus, "--doc-id", "nope", "--rtype", "Strength-Drug", "--config-dir", config_dir
    )
    assert missing.exit_code == 1


def test_build_and_query_index(tmp_path, rrf_files, config_dir):
    conso, sty = rrf_files
    index_dir = tmp_path / "index"
    built = _invoke(
        "build-index", "--conso", conso, "--sty", sty, "--out-dir", index_dir, "--max-tokens", 80,
        "--config-dir", config_dir,
    )
    assert built.exit_code == 0, built.output
    assert (index_dir / "chunks.jsonl").exists() and (index_dir / "index.jsonl").exists()

    queried = _invoke("query-index", "Plavix", "--index-dir", index_dir, "--k", 2, "--config-dir", config_dir)
    assert queried.exit_code == 0, queried.output
    lines = [line for line in queried.output.splitlines() if line.strip()]
    assert 1 <= len(lines) <= 2
    assert all(len(line.split("\t")) == 3 for line in lines)


def _indexed_cuis(index_dir: Path):
    rows = "".join(chunk.text for chunk in ChunkStore.load(index_dir / CHUNKS_FILE)).splitlines()
    return {row.split("|", 1)[0] for row in rows}


def test_index_defaults_to_medication_rows(tmp_path, rrf_files, lexicon_file, config_dir):
    conso, sty = rrf_files
    medications = {"C0004057", "C0070166", "C0008809", "C0025598"}

    by_sty = _invoke(
        "build-index", "--conso", conso, "--sty", sty, "--out-dir", tmp_path / "a", "--config-dir", config_dir
    )
    assert by_sty.exit_code == 0, by_sty.output
    assert _indexed_cuis(tmp_path / "a") == medications

    by_lexicon = _invoke(
        "build-index", "--conso", conso, "--lexicon", lexicon_file, "--out-dir", tmp_path / "b", "--config-dir", config_dir
    )
    assert by_lexicon.exit_code == 0, by_lexicon.output
    assert _indexed_cuis(tmp_path / "b") <= ConceptLexicon.load(lexicon_file).cuis()

    unfiltered = _invoke(
        "build-index", "--conso", conso, "--unfiltered", "--out-dir", tmp_path / "c", "--config-dir", config_dir
    )
    assert unfiltered.exit_code == 0, unfiltered.output
    assert {"C0020538", "C123"} <= _indexed_cuis(tmp_path / "c")

    unselected = _invoke("build-index", "--conso", conso, "--out-dir", tmp_path / "d", "--config-dir", config_dir)
    assert unselected.exit_code == 1


def test_run_evaluate_and_compare(tmp_path, note_corpus, mock_script, lexicon_file, config_dir):
    run_config = tmp_path / "run.json"
    run_config.write_text(
        json.dumps(
            {
                "mode": "baseline",
                "corpus_path": str(note_corpus),
                "output_dir": str(tmp_path / "baseline"),
                "lexicon_path": str(lexicon_file),
                "rtypes": ["Strength-Drug"],
                "mock_script": str(mock_script),
            }
        ),
        encoding="utf-8",
    )
    baseline = _invoke("run-extraction", "--config", run_config, "--config-dir", config_dir)
    assert baseline.exit_code == 0, baseline.output
    assert "Artifact hash:" in baseline.output
    umls = _invoke(
        "run-extraction", "--config", run_config, "--mode", "umls", "--output-dir", tmp_path / "umls",
        "--config-dir", config_dir,
    )
    assert umls.exit_code == 0, umls.output

    for name in ("baseline", "umls"):
        result = _invoke(
            "evaluate", "--artifact", tmp_path / name / "artifact.jsonl", "--gold", note_corpus,
            "--out-dir", tmp_path / f"eval_{name}",
        )
        assert result.exit_code == 0, result.output
        assert "Average" in result.output

    out = tmp_path / "comparison.json"
    compared = _invoke(
        "compare", tmp_path / "eval_baseline" / "report.json", tmp_path / "eval_umls" / "report.json",
        "--label", "baseline", "--label", "umls", "--out", out,
    )
    assert compared.exit_code == 0, compared.output
    comparison = json.loads(out.read_text(encoding="utf-8"))
    assert comparison["baseline"] == "baseline"
    row = next(r for r in comparison["rows"] if r["relation"] == "Strength-Drug")
    assert row["ΔR umls"] == pytest.approx(3 / 11)
    assert row["baseline P"] == 1.0

    single = _invoke("compare", tmp_path / "eval_baseline" / "report.json")
    assert single.exit_code == 1


def test_run_extraction_reports_missing_config(tmp_path, config_dir):
    result = _invoke("run-extraction", "--config", tmp_path / "absent.json", "--config-dir", config_dir)
    assert result.exit_code == 1
