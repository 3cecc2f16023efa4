"""
Extraction run orchestrator.

EN: For every (document, relation type): map concepts (umls), render the prompt, retrieve chunks (rag),
    call the model through the gateway and parse the answer into pairs. Records keep the corpus order.
FA: برای هر (سند، نوع رابطه): نگاشت مفاهیم (umls)، ساخت پرامپت، بازیابی بخش‌ها (rag)، فراخوانی مدل از طریق
    دروازه و تبدیل پاسخ به زوج‌ها. رکوردها ترتیب پیکره را حفظ می‌کنند.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from src.config import PipelineSettings, load_pipeline_settings
from src.data.corpus_io import load_corpus
from src.data.lexicon_ingest import ConceptLexicon, SemanticFilter
from src.data.schemas import Document, RelationType
from src.errors import AuthError, ExtractionError, PipelineError
from src.models.concept_mapper import LexiconConceptMapper, MedicationList
from src.models.llm_gateway import (
    ChatBackend,
    ChatRequest,
    LLMGateway,
    ResponseCache,
    RetryPolicy,
    build_backend,
)
from src.models.output_parser import pairs_to_records, parse_pairs
from src.models.prompt_builder import PromptTemplate, TemplateLibrary, load_template_library, render, template_for
from src.models.rag_retriever import (
    ChunkStore,
    Embedder,
    HashingEmbedder,
    OpenAICompatibleEmbedder,
    RagRetriever,
    VectorIndex,
)
from src.pipeline.artifact import CHUNKS_FILE, INDEX_FILE, RunArtifact, RunConfig, RunRecord
from src.utils.io import content_hash
from src.utils.log import log_event, setup_logger

logger = setup_logger("umls_extract.pipeline")


def params_fingerprint(cfg: RunConfig) -> str:
    """EN/FA: چکیده مدل، پیام سیستم و پارامترهای تولید؛ بخشی از شناسه پرامپت."""
    return content_hash(
        {"model_id": cfg.model_id, "system_message": cfg.system_message, "params": cfg.params.model_dump()}
    )


def build_retriever(
    cfg: RunConfig, settings: PipelineSettings, embedder: Optional[Embedder] = None
) -> RagRetriever:
    """
    EN: Load the chunk store and index from cfg.index_dir; the offline embedder takes the index dim.
    FA: مخزن بخش‌ها و نمایه را از index_dir می‌خواند؛ بردارساز آفلاین بعد نمایه را می‌گیرد.
    """
    root = Path(cfg.index_dir or "")
    store = ChunkStore.load(root / CHUNKS_FILE)
    index = VectorIndex.load(root / INDEX_FILE)
    if embedder is None:
        if cfg.embedder == "live":
            embedder = OpenAICompatibleEmbedder(
                settings.embedding_endpoint or "",
                settings.embedding_api_key,
                settings.embedding_model,
                cache_path=root / "embedding_cache.jsonl",
                retry=_retry_policy(settings),
                timeout=settings.request_timeout,
            )
        else:
            embedder = HashingEmbedder(dim=index.dim or 256, ngram_range=cfg.embedding_ngram_range)
    return RagRetriever(store, index, embedder, k=cfg.top_k, query_scope=cfg.query_scope)


def _retry_policy(settings: PipelineSettings) -> RetryPolicy:
    return RetryPolicy(
        max_retries=settings.max_retries, backoff_base=settings.backoff_base, backoff_max=settings.backoff_max
    )


@dataclass
class _RunContext:
    cfg: RunConfig
    library: TemplateLibrary
    gateway: LLMGateway
    fingerprint: str
    mapper: Optional[LexiconConceptMapper] = None
    semantic_filter: Optional[SemanticFilter] = None
    retriever: Optional[RagRetriever] = None

    def __post_init__(self) -> None:
        self._templates: Dict[RelationType, PromptTemplate] = {}
        self._meds: Dict[str, MedicationList] = {}
        self._lock = threading.Lock()

    def template(self, rtype: RelationType) -> PromptTemplate:
        with self._lock:
            if rtype not in self._templates:
                self._templates[rtype] = template_for(rtype, self.cfg.mode, self.library)
            return self._templates[rtype]

    def medications(self, doc: Document) -> Optional[MedicationList]:
        if self.mapper is None:
            return None
        with self._lock:
            cached = self._meds.get(doc.doc_id)
        if cached is None:
            cached = self.mapper.map_and_filter(doc, self.semantic_filter)
            with self._lock:
                self._meds[doc.doc_id] = cached
        return cached


def _process(ctx: _RunContext, doc: Document, rtype: RelationType) -> RunRecord:
    cfg = ctx.cfg
    prompt = render(ctx.template(rtype), doc, ctx.medications(doc), cfg.mode, ctx.fingerprint)
    hits: List[Tuple[int, float]] = []
    if ctx.retriever is not None:
        prompt, found = ctx.retriever.augment(prompt, doc.text)
        hits = [(h.chunk_id, h.score) for h in found]
    log_event(logger, "prompt_rendered", doc_id=doc.doc_id, rtype=rtype.value, prompt_id=prompt.prompt_id[:16])
    response = ctx.gateway.complete(
        ChatRequest(
            model_id=cfg.model_id, system_message=cfg.system_message, user_message=prompt.text, params=cfg.params
        )
    )
    outcome = parse_pairs(response.raw_text, doc.doc_id, rtype, cfg.mode, dedupe=cfg.dedupe_pairs)
    log_event(
        logger, "pairs_parsed", doc_id=doc.doc_id, rtype=rtype.value, pair_count=len(outcome.pairs),
        clean=outcome.clean,
    )
    return RunRecord(
        doc_id=doc.doc_id,
        rtype=rtype,
        mode=cfg.mode,
        prompt_id=prompt.prompt_id,
        prompt=prompt.text,
        medication_terms=prompt.medication_terms,
        retrieved_chunks=tuple(hits),
        raw_response=response.raw_text,
        finish_reason=response.finish_reason,
        pairs=tuple(tuple(p) for p in pairs_to_records(outcome.pairs)),
        diagnostics=tuple((d.severity, d.message) for d in outcome.diagnostics),
    )


def _safe_process(ctx: _RunContext, doc: Document, rtype: RelationType) -> RunRecord:
    try:
        return _process(ctx, doc, rtype)
    except AuthError as exc:
        # EN: A rejected credential fails every record; stop the run instead
        # FA: اعتبارنامه رد‌شده همه رکوردها را خراب می‌کند؛ اجرا متوقف می‌شود
        raise PipelineError(doc.doc_id, rtype.value, exc) from exc
    except (ExtractionError, ValueError) as exc:
        wrapped = PipelineError(doc.doc_id, rtype.value, exc)
        log_event(
            logger, "record_failed", level=logging.ERROR, doc_id=doc.doc_id, rtype=rtype.value, error=str(wrapped)
        )
        return RunRecord(doc_id=doc.doc_id, rtype=rtype, mode=ctx.cfg.mode, error=str(wrapped))


def run_extraction(
    cfg: RunConfig,
    backend: Optional[ChatBackend] = None,
    embedder: Optional[Embedder] = None,
    settings: Optional[PipelineSettings] = None,
    save: bool = True,
) -> RunArtifact:
    """
    Execute one extraction run.

    EN: Work is spread over cfg.parallelism threads but records come back in (document, rtype) order.
        Completed requests live in the response cache, so a rerun or a resumed run only calls the backend
        for requests it has not answered yet.
    FA: کار بین cfg.parallelism رشته پخش می‌شود اما رکوردها به ترتیب (سند، نوع رابطه) برمی‌گردند.
        پاسخ‌های کامل‌شده در کش می‌مانند، پس اجرای دوباره فقط برای درخواست‌های بی‌پاسخ به بک‌اند می‌رود.
    """
    cfg.check_paths()
    settings = settings or load_pipeline_settings()
    setup_logger("umls_extract.pipeline", settings.log_dir)

    documents, _ = load_corpus(cfg.corpus_path, cfg.corpus_format)
    library = load_template_library(cfg.template_dir, cfg.shots_per_template)
    backend = backend or build_backend(settings, cfg.mock_script)
    gateway = LLMGateway(
        backend,
        ResponseCache(cfg.response_cache_path),
        parallelism=cfg.parallelism,
        retry=_retry_policy(settings),
    )
    ctx = _RunContext(cfg=cfg, library=library, gateway=gateway, fingerprint=params_fingerprint(cfg))
    if cfg.mode == "umls":
        ctx.mapper = LexiconConceptMapper(ConceptLexicon.load(cfg.lexicon_path), cfg.min_term_length)
        ctx.semantic_filter = cfg.semantic_filter()
    elif cfg.mode == "rag":
        ctx.retriever = build_retriever(cfg, settings, embedder)

    tasks = [(doc, rtype) for doc in documents for rtype in cfg.rtypes]
    print(f"Documents: {len(documents):,} | relation types: {len(cfg.rtypes)} | mode: {cfg.mode}")
    # EN: map() yields results in submission order, which keeps the artifact deterministic
    # FA: map() نتایج را به ترتیب ارسال برمی‌گرداند و فایل اجرا قطعی می‌ماند
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        records = list(pool.map(lambda task: _safe_process(ctx, *task), tasks))

    artifact = RunArtifact(config=cfg, records=records)
    if save:
        artifact.save(cfg.artifact_path)
        print(f"Saved artifact -> {cfg.artifact_path}")
    log_event(
        logger, "run_finished", mode=cfg.mode, record_count=len(records),
        failure_count=len(artifact.failures), content_hash=artifact.content_hash[:16],
    )
    print(f"Records: {len(records):,} | failures: {len(artifact.failures):,}")
    return artifact


__all__ = ["params_fingerprint", "build_retriever", "run_extraction"]
