"""
FastAPI service exposing the deterministic pipeline steps.

EN: Loads the lexicon and templates once and serves concept mapping, prompt rendering and output parsing.
    Live model completions are not served here.
FA: واژه‌نامه و قالب‌ها را یک بار بارگذاری کرده و نگاشت مفاهیم، ساخت پرامپت و تجزیه خروجی را ارائه می‌دهد.
    پاسخ زنده مدل از این سرویس ارائه نمی‌شود.
"""

from __future__ import annotations

from typing import Optional

import uvicorn
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware

from service.config import ServiceSettings, load_service_settings
from service.schemas import (
    ConceptMapRequest,
    ConceptMapResponse,
    ConceptMatchOut,
    DiagnosticOut,
    HealthResponse,
    PairOut,
    ParseRequest,
    ParseResponse,
    RenderRequest,
    RenderResponse,
)
from src.data.lexicon_ingest import ConceptLexicon, SemanticFilter
from src.data.schemas import Document, RelationType
from src.models.concept_mapper import LexiconConceptMapper, MedicationList
from src.models.output_parser import parse_pairs
from src.models.prompt_builder import TemplateLibrary, load_template_library, render, template_for
from src.utils.log import log_event, setup_logger


def log_request(path: str, status_code: int, event: str, **fields: object) -> None:
    """
    EN: Log structured info about one API call.
    FA: اطلاعات ساخت‌یافته درباره یک فراخوانی API را لاگ می‌کند.
    """
    log_event(setup_logger("umls_extract.api"), event, path=path, status_code=status_code, **fields)


class PipelineRegistry:
    """
    EN: Holds the lexicon matcher and the template library in memory.
    FA: تطبیق‌دهنده واژه‌نامه و کتابخانه قالب‌ها را در حافظه نگه می‌دارد.
    """

    def __init__(self, settings: ServiceSettings) -> None:
        self.settings = settings
        self.semantic_filter = SemanticFilter.default()
        self.library: TemplateLibrary = load_template_library(settings.template_dir)
        self.mapper: Optional[LexiconConceptMapper] = None
        if settings.lexicon_path is not None and settings.lexicon_path.exists():
            lexicon = ConceptLexicon.load(settings.lexicon_path)
            self.mapper = LexiconConceptMapper(lexicon, settings.min_term_length)

    @property
    def lexicon_terms(self) -> Optional[int]:
        return self.mapper.lexicon.term_count if self.mapper is not None else None

    def medications(self, doc: Document) -> MedicationList:
        if self.mapper is None:
            raise RuntimeError("No lexicon loaded; set UMLS_EXTRACT_API_LEXICON_PATH")
        return self.mapper.map_and_filter(doc, self.semantic_filter)


def create_app(settings: Optional[ServiceSettings] = None) -> FastAPI:
    """
    EN: Build the API; ValueError maps to HTTP 400 and RuntimeError to 503 (missing lexicon).
    FA: API را می‌سازد؛ ValueError به 400 و RuntimeError (نبود واژه‌نامه) به 503 نگاشت می‌شود.
    """
    settings = settings or load_service_settings()
    setup_logger("umls_extract.api", settings.log_dir, filename="api_requests.jsonl")
    app = FastAPI(title="UMLS Medication Extraction API")
    app.state.registry = PipelineRegistry(settings)

    # EN: Enable CORS for allowed origins
    # FA: فعال کردن CORS برای مبداهای مجاز
    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.allowed_origins,
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        """
        EN: Health check endpoint.
        FA: اندپوینت بررسی سلامت سرویس.
        """
        registry: PipelineRegistry = app.state.registry
        return HealthResponse(status="ok", detail="service is running", lexicon_terms=registry.lexicon_terms)

    @app.post("/concepts/map", response_model=ConceptMapResponse)
    async def map_concepts(req: ConceptMapRequest, request: Request) -> ConceptMapResponse:
        """EN/FA: مفاهیم واژه‌نامه را در متن پیدا کرده و فهرست داروها را برمی‌گرداند."""
        registry: PipelineRegistry = app.state.registry
        doc = Document(doc_id=req.doc_id, text=req.text)
        try:
            meds = registry.medications(doc)
        except RuntimeError as e:
            raise HTTPException(status_code=503, detail=str(e))
        matches = [ConceptMatchOut(**m.to_record()) for m in registry.mapper.map_concepts(doc)]
        log_request(
            str(request.url.path), 200, "concepts_mapped", doc_id=req.doc_id, medication_count=len(meds)
        )
        return ConceptMapResponse(doc_id=req.doc_id, matches=matches, medication_list=list(meds.terms))

    @app.post("/prompts/render", response_model=RenderResponse)
    async def render_prompt(req: RenderRequest, request: Request) -> RenderResponse:
        """EN/FA: پرامپت نهایی را برای یک متن و نوع رابطه می‌سازد (حالت rag پشتیبانی نمی‌شود)."""
        registry: PipelineRegistry = app.state.registry
        if req.mode == "rag":
            raise HTTPException(status_code=400, detail="rag prompts need a vector index; use the CLI")
        doc = Document(doc_id=req.doc_id, text=req.text)
        try:
            template = template_for(RelationType.parse(req.rtype), req.mode, registry.library)
            meds = registry.medications(doc) if req.mode == "umls" else None
            prompt = render(template, doc, meds, req.mode)
        except RuntimeError as e:
            raise HTTPException(status_code=503, detail=str(e))
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        log_request(
            str(request.url.path), 200, "prompt_rendered", doc_id=req.doc_id, rtype=req.rtype, mode=req.mode
        )
        return RenderResponse(
            prompt_id=prompt.prompt_id,
            text=prompt.text,
            doc_id=prompt.doc_id,
            rtype=prompt.rtype.value,
            mode=prompt.mode,
            medication_terms=list(prompt.medication_terms),
        )

    @app.post("/pairs/parse", response_model=ParseResponse)
    async def parse(req: ParseRequest, request: Request) -> ParseResponse:
        """EN/FA: پاسخ خام مدل را به زوج‌ها و پیام‌های تشخیصی تبدیل می‌کند."""
        try:
            rtype = RelationType.parse(req.rtype)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        outcome = parse_pairs(req.raw, req.doc_id, rtype, req.mode, dedupe=req.dedupe)
        log_request(
            str(request.url.path), 200, "pairs_parsed", doc_id=req.doc_id, pair_count=len(outcome.pairs)
        )
        return ParseResponse(
            pairs=[PairOut(head=p.head, tail=p.tail) for p in outcome.pairs],
            diagnostics=[DiagnosticOut(severity=d.severity, message=d.message) for d in outcome.diagnostics],
            clean=outcome.clean,
        )

    return app


if __name__ == "__main__":
    _settings = load_service_settings()
    uvicorn.run(create_app(_settings), host=_settings.api_host, port=_settings.api_port)
