"""
Command-line entry point.

EN: `python -m src.cli <command>`; one command per pipeline step plus full runs, evaluation and comparison.
FA: `python -m src.cli <command>`؛ برای هر گام پایپ‌لاین یک فرمان، به همراه اجرای کامل، ارزیابی و مقایسه.
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple

import typer

from src.config import CONFIG_DIR, TEMPLATE_DIR, load_pipeline_settings, load_section
from src.data.corpus_io import corpus_stats, load_corpus
from src.data.lexicon_ingest import (
    ConceptLexicon,
    LexiconBuildOptions,
    SemanticFilter,
    build_lexicon_from_files,
    iter_conso_lines,
    medication_cuis,
)
from src.data.schemas import RelationType
from src.errors import ExtractionError
from src.evaluation.run_evaluation import (
    compare_runs,
    evaluate_run,
    load_report,
    render_report_table,
    save_report,
)
from src.models.concept_mapper import DEFAULT_MIN_TERM_LENGTH, LexiconConceptMapper, map_corpus
from src.models.prompt_builder import load_template_library, render, template_for
from src.models.rag_retriever import (
    ChunkStore,
    HashingEmbedder,
    OpenAICompatibleEmbedder,
    RagRetriever,
    VectorIndex,
    build_index,
    chunk_rows,
    make_tokenizer,
)
from src.pipeline.artifact import CHUNKS_FILE, INDEX_FILE, RunConfig, load_artifact, load_run_config
from src.pipeline.run_extraction import build_retriever, run_extraction
from src.utils.io import write_jsonl

app = typer.Typer(help="UMLS-augmented medication relation extraction.", no_args_is_help=True)


def _fail(exc: Exception) -> None:
    typer.echo(f"Error: {exc}", err=True)
    raise typer.Exit(code=1) from exc


def lexicon_settings(config_dir: Optional[Path] = None) -> Tuple[SemanticFilter, LexiconBuildOptions, int]:
    """
    EN: Semantic filter, build options and minimum term length from configs/lexicon.yaml.
    FA: فیلتر معنایی، گزینه‌های ساخت و حداقل طول واژه از configs/lexicon.yaml.
    """
    cfg = load_section("lexicon", config_dir)
    default = SemanticFilter.default()
    semantic_filter = SemanticFilter(
        frozenset(cfg.get("sty_names") or default.allowed_sty_names),
        cfg.get("tui_aliases", default.tui_aliases) or {},
    )
    opts = LexiconBuildOptions(
        languages=frozenset(cfg.get("languages") or ["ENG"]),
        excluded_suppress=frozenset(cfg.get("excluded_suppress") or ["O", "E", "Y"]),
        on_malformed=cfg.get("on_malformed", "skip"),
    )
    return semantic_filter, opts, int(cfg.get("min_term_length", DEFAULT_MIN_TERM_LENGTH))


@app.command("ingest-lexicon")
def ingest_lexicon(
    conso: Path = typer.Option(..., "--conso", help="Path to MRCONSO.RRF"),
    sty: Path = typer.Option(..., "--sty", help="Path to MRSTY.RRF"),
    out: Path = typer.Option(Path("data/lexicon/lexicon.jsonl"), "--out", "-o", help="Lexicon cache file"),
    sty_names: Optional[List[str]] = typer.Option(
        None, "--sty-names", help="Allowed semantic type; repeat for several (overrides configs/lexicon.yaml)"
    ),
    no_tui_aliases: bool = typer.Option(False, "--no-tui-aliases", help="Match semantic types by name only"),
    on_malformed: Optional[str] = typer.Option(None, "--on-malformed", help="skip | abort"),
    config_dir: Path = typer.Option(CONFIG_DIR, "--config-dir"),
) -> None:
    """Build the medication lexicon from UMLS RRF files."""
    semantic_filter, opts, _ = lexicon_settings(config_dir)
    if on_malformed:
        opts = LexiconBuildOptions(opts.languages, opts.excluded_suppress, on_malformed)  # type: ignore[arg-type]
    try:
        if sty_names:
            # EN: Aliases survive only when they still target an allowed name
            # FA: نام‌های مستعار فقط وقتی می‌مانند که هنوز به نامی مجاز اشاره کنند
            wanted = {n.strip().casefold() for n in sty_names}
            aliases = {t: n for t, n in semantic_filter.tui_aliases.items() if n in wanted}
            semantic_filter = SemanticFilter(frozenset(sty_names), aliases)
        if no_tui_aliases:
            semantic_filter = SemanticFilter(semantic_filter.allowed_sty_names, {})
        lexicon, _, _ = build_lexicon_from_files(conso, sty, semantic_filter, opts)
        lexicon.save(out)
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    typer.echo(f"Saved lexicon -> {out}")


def _embedder(kind: str, dim: int, ngram_range: Tuple[int, int], cache_dir: Path):
    if kind == "live":
        settings = load_pipeline_settings()
        return OpenAICompatibleEmbedder(
            settings.embedding_endpoint or "",
            settings.embedding_api_key,
            settings.embedding_model,
            cache_path=cache_dir / "embedding_cache.jsonl",
            timeout=settings.request_timeout,
        )
    return HashingEmbedder(dim=dim, ngram_range=ngram_range)


@app.command("build-index")
def build_index_cmd(
    conso: Path = typer.Option(..., "--conso", help="Path to MRCONSO.RRF"),
    out_dir: Path = typer.Option(Path("data/index"), "--out-dir", "-o"),
    sty: Optional[Path] = typer.Option(None, "--sty", help="MRSTY.RRF; keeps rows of medication CUIs"),
    lexicon: Optional[Path] = typer.Option(None, "--lexicon", help="Keep rows of the lexicon's CUIs instead"),
    unfiltered: bool = typer.Option(False, "--unfiltered", help="Embed every MRCONSO row"),
    max_tokens: Optional[int] = typer.Option(None, "--max-tokens"),
    tokenizer: Optional[str] = typer.Option(None, "--tokenizer", help="regex | tiktoken"),
    embedder: Optional[str] = typer.Option(None, "--embedder", help="hashing | live"),
    parallelism: int = typer.Option(1, "--parallelism", min=1),
    config_dir: Path = typer.Option(CONFIG_DIR, "--config-dir"),
) -> None:
    """
    Chunk MRCONSO rows under the token budget and embed them.

    EN: By default only rows of medication concepts are indexed, taken from --lexicon or from --sty
        with the lexicon's semantic filter; --unfiltered indexes the whole file.
    FA: به طور پیش‌فرض فقط ردیف‌های مفاهیم دارویی نمایه می‌شوند (از --lexicon یا از --sty با فیلتر
        معنایی واژه‌نامه)؛ --unfiltered کل فایل را نمایه می‌کند.
    """
    rag = load_section("rag", config_dir)
    semantic_filter, opts, _ = lexicon_settings(config_dir)
    kind = embedder or rag.get("embedder", "hashing")
    try:
        cuis: Optional[Set[str]] = None
        if lexicon is not None:
            cuis = ConceptLexicon.load(lexicon).cuis()
        elif sty is not None:
            cuis = medication_cuis(sty, semantic_filter, opts.on_malformed)
        elif not unfiltered:
            raise ValueError("build-index needs --lexicon or --sty to select medication rows, or --unfiltered")
        chunks = chunk_rows(
            iter_conso_lines(conso, cuis, opts),
            max_tokens=max_tokens or int(rag.get("max_tokens", 8192)),
            tokenizer=make_tokenizer(tokenizer or rag.get("tokenizer", "regex")),
        )
        provider = _embedder(
            kind, int(rag.get("embedding_dim", 256)), tuple(rag.get("ngram_range", (1, 3))), out_dir
        )
        index = build_index(chunks, provider, batch_size=int(rag.get("batch_size", 32)), parallelism=parallelism)
        ChunkStore(chunks).save(out_dir / CHUNKS_FILE)
        index.save(out_dir / INDEX_FILE, meta=provider.describe())
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    typer.echo(f"Saved {len(chunks):,} chunks -> {out_dir}")


@app.command("query-index")
def query_index(
    text: str = typer.Argument(..., help="Query text"),
    index_dir: Path = typer.Option(Path("data/index"), "--index-dir"),
    k: int = typer.Option(5, "--k", "-k", min=1),
    config_dir: Path = typer.Option(CONFIG_DIR, "--config-dir"),
) -> None:
    """Show the top-k chunks for a query."""
    rag = load_section("rag", config_dir)
    try:
        store = ChunkStore.load(index_dir / CHUNKS_FILE)
        index = VectorIndex.load(index_dir / INDEX_FILE)
        provider = _embedder(
            rag.get("embedder", "hashing"), index.dim or 256, tuple(rag.get("ngram_range", (1, 3))), index_dir
        )
        hits = RagRetriever(store, index, provider, k=k).retrieve(text)
    except (ExtractionError, FileNotFoundError) as exc:
        _fail(exc)
    for hit in hits:
        lines = store.get(hit.chunk_id).text.splitlines()
        first_line = lines[0] if lines else ""
        typer.echo(f"{hit.chunk_id}\t{hit.score:.4f}\t{first_line[:100]}")


@app.command("map-concepts")
def map_concepts_cmd(
    corpus: Path = typer.Option(..., "--corpus"),
    lexicon: Path = typer.Option(..., "--lexicon"),
    out: Path = typer.Option(Path("results/concepts.jsonl"), "--out", "-o"),
    fmt: str = typer.Option("auto", "--format"),
    config_dir: Path = typer.Option(CONFIG_DIR, "--config-dir"),
) -> None:
    """Map lexicon concepts in every document and write the medication lists."""
    semantic_filter, _, min_len = lexicon_settings(config_dir)
    try:
        documents, _ = load_corpus(corpus, fmt)  # type: ignore[arg-type]
        mapper = LexiconConceptMapper(ConceptLexicon.load(lexicon), min_len)
        n = write_jsonl(map_corpus(documents, mapper, semantic_filter), out)
    except (ExtractionError, FileNotFoundError) as exc:
        _fail(exc)
    typer.echo(f"Mapped documents: {n:,} -> {out}")


@app.command("render")
def render_cmd(
    corpus: Path = typer.Option(..., "--corpus"),
    doc_id: str = typer.Option(..., "--doc", "--doc-id", help="Document id"),
    rtype: str = typer.Option(..., "--rtype", help="e.g. Strength-Drug"),
    mode: str = typer.Option("baseline", "--mode", help="baseline | umls | rag"),
    lexicon: Optional[Path] = typer.Option(None, "--lexicon"),
    index_dir: Optional[Path] = typer.Option(None, "--index-dir"),
    template_dir: Path = typer.Option(TEMPLATE_DIR, "--template-dir"),
    fmt: str = typer.Option("auto", "--format"),
    config_dir: Path = typer.Option(CONFIG_DIR, "--config-dir"),
) -> None:
    """Print the prompt one document would receive."""
    semantic_filter, _, min_len = lexicon_settings(config_dir)
    try:
        documents, _ = load_corpus(corpus, fmt)  # type: ignore[arg-type]
        doc = next((d for d in documents if d.doc_id == doc_id), None)
        if doc is None:
            raise ValueError(f"Unknown doc_id: {doc_id}")
        meds = None
        if mode == "umls":
            if lexicon is None:
                raise ValueError("umls mode needs --lexicon")
            meds = LexiconConceptMapper(ConceptLexicon.load(lexicon), min_len).map_and_filter(doc, semantic_filter)
        library = load_template_library(template_dir)
        prompt = render(template_for(RelationType.parse(rtype), mode, library), doc, meds, mode)  # type: ignore[arg-type]
        if mode == "rag":
            if index_dir is None:
                raise ValueError("rag mode needs --index-dir")
            cfg = RunConfig(mode="rag", corpus_path=corpus, output_dir=Path("."), index_dir=index_dir)
            prompt, _ = build_retriever(cfg, load_pipeline_settings()).augment(prompt, doc.text)
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    typer.echo(prompt.text)


@app.command("run-extraction")
def run_extraction_cmd(
    config: Path = typer.Option(..., "--config", "-c", help="RunConfig JSON document"),
    mode: Optional[str] = typer.Option(None, "--mode"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir"),
    mock_script: Optional[Path] = typer.Option(None, "--mock-script"),
    parallelism: Optional[int] = typer.Option(None, "--parallelism", min=1),
    config_dir: Path = typer.Option(CONFIG_DIR, "--config-dir"),
) -> None:
    """Run one extraction over a corpus and write the artifact."""
    defaults: Dict[str, Any] = dict(load_section("generation", config_dir))
    rag = load_section("rag", config_dir)
    for key in ("top_k", "query_scope", "embedder"):
        if key in rag:
            defaults[key] = rag[key]
    overrides = {"mode": mode, "output_dir": output_dir, "mock_script": mock_script, "parallelism": parallelism}
    try:
        cfg = load_run_config(config, overrides=overrides, defaults=defaults)
        artifact = run_extraction(cfg, settings=load_pipeline_settings(config_dir / "pipeline.yaml"))
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    typer.echo(f"Artifact hash: {artifact.content_hash}")


@app.command("evaluate")
def evaluate_cmd(
    artifact: Path = typer.Option(..., "--artifact"),
    gold: Path = typer.Option(..., "--gold", help="Gold corpus (any supported format)"),
    out_dir: Path = typer.Option(Path("results/eval"), "--out-dir", "-o"),
    fmt: str = typer.Option("auto", "--format"),
    lenient: bool = typer.Option(False, "--lenient", help="Also report containment matching"),
    timestamp: bool = typer.Option(False, "--timestamp", help="Stamp the report with the current time"),
) -> None:
    """Score a run artifact against gold relations."""
    try:
        run = load_artifact(artifact)
        documents, relations = load_corpus(gold, fmt)  # type: ignore[arg-type]
        generated_at = datetime.now(timezone.utc).isoformat() if timestamp else None
        report = evaluate_run(
            run, relations, gold_doc_ids=[d.doc_id for d in documents], lenient=lenient, generated_at=generated_at
        )
        save_report(report, out_dir)
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    typer.echo(render_report_table(report))


@app.command("compare")
def compare_cmd(
    reports: List[Path] = typer.Argument(..., help="Two or more report.json files"),
    labels: Optional[List[str]] = typer.Option(None, "--label", help="Column label per report, in order"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the comparison as JSON"),
) -> None:
    """Compare evaluation reports side by side."""
    try:
        comparison = compare_runs([load_report(p) for p in reports], labels or None)
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(comparison.to_json() + "\n", encoding="utf-8")
    typer.echo(comparison.to_text())


@app.command("stats")
def stats_cmd(
    corpus: Path = typer.Option(..., "--corpus"),
    fmt: str = typer.Option("auto", "--format"),
    dataset: Optional[str] = typer.Option(None, "--dataset", help="n2c2 | ade"),
) -> None:
    """Count relation instances per type."""
    try:
        documents, relations = load_corpus(corpus, fmt)  # type: ignore[arg-type]
    except (ExtractionError, FileNotFoundError, ValueError) as exc:
        _fail(exc)
    stats = corpus_stats(relations, documents)
    typer.echo(f"Documents: {stats.documents:,}")
    typer.echo(stats.as_frame(dataset).to_string(index=False))  # type: ignore[arg-type]


if __name__ == "__main__":
    app()
