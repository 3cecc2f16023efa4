"""
Chat-completion gateway.

EN: Provider-agnostic client with the extraction hyperparameters, an on-disk response cache,
    tenacity-based retries and a scripted mock backend for offline runs.
FA: کلاینت مستقل از ارائه‌دهنده با ابرپارامترهای استخراج، کش پاسخ روی دیسک،
    تلاش مجدد مبتنی بر tenacity و بک‌اند ساختگی اسکریپتی برای اجرای آفلاین.
"""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Literal, Optional, Protocol, Sequence, Tuple, TypeVar, Union

import httpx
from pydantic import BaseModel, ConfigDict, Field, SecretStr, field_validator
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.errors import AuthError, BackendError, BackendScriptMiss, ExhaustedRetries, TransientBackendError
from src.utils.io import append_jsonl, content_hash, read_jsonl, text_hash
from src.utils.log import log_event, setup_logger

logger = setup_logger("umls_extract.gateway")

FinishReason = Literal["stop", "length", "error"]
T = TypeVar("T")

# EN: Model identifiers used in the experiments
# FA: شناسه مدل‌های استفاده‌شده در آزمایش‌ها
GPT4_32K = "gpt-4-32k-0613"
GPT35_TURBO = "gpt-35-turbo-0301"


class GenerationParams(BaseModel):
    """
    Generation hyperparameters.

    EN: Defaults: max_tokens=200, temperature=0, top_p=0.95, presence_penalty=-1.0 (passed through as is).
    FA: مقادیر پیش‌فرض: max_tokens=200، temperature=0، top_p=0.95 و presence_penalty=-1.0 (بدون تغییر ارسال می‌شود).
    """

    model_config = ConfigDict(frozen=True)

    max_tokens: int = Field(200, ge=1)
    temperature: float = Field(0.0, ge=0.0)
    top_p: float = Field(0.95, gt=0.0, le=1.0)
    presence_penalty: float = Field(-1.0, ge=-2.0, le=2.0)


class ChatRequest(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_id: str
    system_message: str = ""
    user_message: str
    params: GenerationParams = GenerationParams()

    @field_validator("user_message")
    @classmethod
    def _user_non_empty(cls, value: str) -> str:
        if not value:
            raise ValueError("user_message must be non-empty")
        return value

    def messages(self) -> List[Dict[str, str]]:
        msgs = []
        if self.system_message:
            msgs.append({"role": "system", "content": self.system_message})
        msgs.append({"role": "user", "content": self.user_message})
        return msgs


class ChatResponse(BaseModel):
    """
    EN: raw_text is defined whenever finish_reason is not "error".
    FA: وقتی finish_reason برابر "error" نباشد، raw_text مقدار دارد.
    """

    model_config = ConfigDict(frozen=True)

    raw_text: str = ""
    finish_reason: FinishReason = "stop"
    latency_ms: int = 0
    cached: bool = False
    attempts: int = 1
    retry_delays: Tuple[float, ...] = ()


@dataclass(frozen=True)
class BackendReply:
    raw_text: str
    finish_reason: FinishReason = "stop"


def hash_request(req: ChatRequest) -> str:
    """
    Cache key for a request.

    EN: SHA-256 over model_id, messages and params; any field change changes the key.
    FA: چکیده SHA-256 روی شناسه مدل، پیام‌ها و پارامترها؛ تغییر هر فیلد کلید را تغییر می‌دهد.
    """
    return content_hash(
        {"model_id": req.model_id, "messages": req.messages(), "params": req.params.model_dump()}
    )


class ChatBackend(Protocol):
    def send(self, req: ChatRequest) -> BackendReply:
        ...


@dataclass
class ScriptEntry:
    match: str
    response: str
    finish_reason: FinishReason = "stop"


class ScriptedMockBackend:
    """
    Deterministic backend answering from a script.

    EN: An entry's match is tried as a request hash, then as the SHA-256 of the user message,
        then as a substring of the user message (in script order; "" matches anything).
    FA: کلید هر ورودی ابتدا به عنوان چکیده درخواست، سپس چکیده پیام کاربر و در نهایت
        زیررشته پیام کاربر بررسی می‌شود (به ترتیب اسکریپت؛ رشته خالی با همه چیز تطبیق دارد).
    """

    def __init__(self, entries: Sequence[Union[ScriptEntry, Tuple[str, str]]]) -> None:
        self.entries: List[ScriptEntry] = [
            e if isinstance(e, ScriptEntry) else ScriptEntry(match=e[0], response=e[1]) for e in entries
        ]
        self.call_count = 0
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "ScriptedMockBackend":
        file_path = Path(path)
        if not file_path.exists():
            raise FileNotFoundError(f"Missing mock script: {file_path}")
        entries = [
            ScriptEntry(
                match=str(rec["match"]),
                response=str(rec["response"]),
                finish_reason=rec.get("finish_reason", "stop"),
            )
            for rec in read_jsonl(file_path)
        ]
        return cls(entries)

    def send(self, req: ChatRequest) -> BackendReply:
        with self._lock:
            self.call_count += 1
        exact = {hash_request(req), text_hash(req.user_message)}
        for entry in self.entries:
            if entry.match in exact:
                return BackendReply(entry.response, entry.finish_reason)
        for entry in self.entries:
            if entry.match in req.user_message:
                return BackendReply(entry.response, entry.finish_reason)
        raise BackendScriptMiss(f"No scripted response for request {hash_request(req)[:12]}")


def check_status(response: httpx.Response) -> None:
    """
    Map an HTTP status to the gateway's error classes.

    EN: 401/403 → AuthError; 429 and 5xx → TransientBackendError; other 4xx → BackendError.
    FA: 401/403 خطای احراز هویت، 429 و 5xx خطای گذرا و سایر 4xx خطای عمومی بک‌اند است.
    """
    status = response.status_code
    if status < 400:
        return
    if status in (401, 403):
        raise AuthError(f"Backend rejected the credential (HTTP {status})")
    if status == 429 or status >= 500:
        raise TransientBackendError(f"Backend returned HTTP {status}", status_code=status)
    raise BackendError(f"Backend returned HTTP {status}: {response.text[:200]}")


def auth_headers(api_key: Optional[Union[SecretStr, str]]) -> Dict[str, str]:
    if api_key is None:
        return {}
    secret = api_key.get_secret_value() if isinstance(api_key, SecretStr) else api_key
    # EN: Azure OpenAI reads api-key, OpenAI-compatible servers read the bearer token
    # FA: Azure سرآیند api-key و سرورهای سازگار با OpenAI توکن Bearer را می‌خوانند
    return {"Authorization": f"Bearer {secret}", "api-key": secret}


class OpenAICompatibleBackend:
    """EN/FA: بک‌اند زنده روی REST سازگار با OpenAI (با httpx)."""

    def __init__(
        self,
        endpoint: str,
        api_key: Optional[Union[SecretStr, str]],
        timeout: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        if not endpoint:
            raise ValueError("endpoint is required for the live backend")
        if api_key is None:
            raise AuthError("No credential configured for the live backend")
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport, headers=auth_headers(api_key))

    def close(self) -> None:
        self._client.close()

    def send(self, req: ChatRequest) -> BackendReply:
        payload = {"model": req.model_id, "messages": req.messages(), **req.params.model_dump()}
        try:
            response = self._client.post(self.endpoint, json=payload)
        except httpx.TransportError as exc:
            raise TransientBackendError(f"Transport failure: {exc}") from exc
        check_status(response)
        try:
            choice = response.json()["choices"][0]
            text = choice["message"].get("content") or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"Unexpected completion body: {response.text[:200]}") from exc
        finish: FinishReason = "length" if choice.get("finish_reason") == "length" else "stop"
        return BackendReply(text, finish)


@dataclass
class RetryPolicy:
    """
    Exponential backoff for transient failures.

    EN: Total attempts never exceed 1 + max_retries; delays grow monotonically up to backoff_max.
    FA: مجموع تلاش‌ها از 1 + max_retries بیشتر نمی‌شود؛ تأخیرها به صورت یکنوا تا backoff_max افزایش می‌یابند.
    """

    max_retries: int = 5
    backoff_base: float = 1.0
    backoff_max: float = 30.0
    sleep: Callable[[float], None] = time.sleep

    def run(self, fn: Callable[[], T], label: str = "") -> Tuple[T, int, Tuple[float, ...]]:
        delays: List[float] = []
        attempts = 0

        def _before_sleep(state) -> None:
            delay = float(state.next_action.sleep) if state.next_action else 0.0
            delays.append(delay)
            log_event(logger, "llm_retry", label=label, attempt=state.attempt_number, delay=delay)

        retrying = Retrying(
            stop=stop_after_attempt(1 + self.max_retries),
            wait=wait_exponential(multiplier=self.backoff_base, max=self.backoff_max),
            retry=retry_if_exception_type(TransientBackendError),
            sleep=self.sleep,
            before_sleep=_before_sleep,
        )
        try:
            for attempt in retrying:
                with attempt:
                    attempts += 1
                    result = fn()
        except RetryError as exc:
            last = exc.last_attempt.exception()
            raise ExhaustedRetries(f"Gave up after {attempts} attempts: {last}", attempts=attempts) from last
        return result, attempts, tuple(delays)


class ResponseCache:
    """
    Response cache keyed by hash_request.

    EN: In memory, optionally persisted as JSON lines {key, response, timestamp}; the last record for a
        key wins on reload. Only successful completions are stored.
    FA: در حافظه و در صورت نیاز روی دیسک به صورت JSONL؛ هنگام بارگذاری آخرین رکورد هر کلید معتبر است.
        فقط پاسخ‌های موفق ذخیره می‌شوند.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for rec in read_jsonl(self.path):
                self._entries[rec["key"]] = rec["response"]

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, reply: BackendReply) -> None:
        record = {"raw_text": reply.raw_text, "finish_reason": reply.finish_reason}
        with self._lock:
            self._entries[key] = record
            if self.path is not None:
                append_jsonl(
                    {"key": key, "response": record, "timestamp": datetime.now(timezone.utc).isoformat()},
                    self.path,
                )


class LLMGateway:
    """
    complete() front end shared by the pipeline and the embedder.

    EN: Bounds in-flight calls with a semaphore; identical concurrent requests wait on one per-key lock
        so only the first reaches the backend.
    FA: تعداد درخواست‌های هم‌زمان با سمافور محدود می‌شود؛ درخواست‌های یکسان هم‌زمان پشت یک قفل منتظر
        می‌مانند تا فقط اولی به بک‌اند برسد.
    """

    def __init__(
        self,
        backend: ChatBackend,
        cache: Optional[ResponseCache] = None,
        parallelism: int = 4,
        retry: Optional[RetryPolicy] = None,
    ) -> None:
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self.retry = retry or RetryPolicy()
        self._slots = threading.BoundedSemaphore(parallelism)
        # EN: key -> (lock, waiter count); an entry is dropped once its last waiter leaves
        # FA: کلید -> (قفل، تعداد منتظران)؛ با خروج آخرین منتظر مدخل حذف می‌شود
        self._key_locks: Dict[str, List[Any]] = {}
        self._guard = threading.Lock()

    @contextmanager
    def _lock_for(self, key: str) -> Iterator[None]:
        with self._guard:
            entry = self._key_locks.setdefault(key, [threading.Lock(), 0])
            entry[1] += 1
        try:
            with entry[0]:
                yield
        finally:
            with self._guard:
                entry[1] -= 1
                if entry[1] == 0:
                    del self._key_locks[key]

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = hash_request(req)
        with self._lock_for(key):
            hit = self.cache.get(key)
            if hit is not None:
                log_event(logger, "llm_completion", key=key[:16], cached=True)
                return ChatResponse(
                    raw_text=hit["raw_text"], finish_reason=hit["finish_reason"], cached=True, attempts=0
                )
            started = time.perf_counter()
            with self._slots:
                reply, attempts, delays = self.retry.run(lambda: self.backend.send(req), label=key[:16])
            latency_ms = int((time.perf_counter() - started) * 1000)
            self.cache.put(key, reply)
        log_event(
            logger, "llm_completion", key=key[:16], cached=False, attempts=attempts, latency_ms=latency_ms
        )
        return ChatResponse(
            raw_text=reply.raw_text,
            finish_reason=reply.finish_reason,
            latency_ms=latency_ms,
            cached=False,
            attempts=attempts,
            retry_delays=delays,
        )


def complete(req: ChatRequest, gateway: LLMGateway) -> ChatResponse:
    return gateway.complete(req)


def build_backend(
    settings: Any, mock_script: Optional[Union[str, Path]] = None, transport: Optional[httpx.BaseTransport] = None
) -> ChatBackend:
    """
    EN: Mock backend when a script is given, otherwise the live endpoint from settings.
    FA: اگر اسکریپت داده شود بک‌اند ساختگی، وگرنه بک‌اند زنده از تنظیمات.
    """
    if mock_script is not None:
        return ScriptedMockBackend.from_jsonl(mock_script)
    if not getattr(settings, "llm_endpoint", None):
        raise ValueError("Set UMLS_EXTRACT_LLM_ENDPOINT or pass a mock script")
    return OpenAICompatibleBackend(
        settings.llm_endpoint, settings.llm_api_key, timeout=settings.request_timeout, transport=transport
    )


__all__ = [
    "GPT4_32K",
    "GPT35_TURBO",
    "FinishReason",
    "GenerationParams",
    "ChatRequest",
    "ChatResponse",
    "BackendReply",
    "ChatBackend",
    "hash_request",
    "ScriptEntry",
    "ScriptedMockBackend",
    "check_status",
    "auth_headers",
    "OpenAICompatibleBackend",
    "RetryPolicy",
    "ResponseCache",
    "LLMGateway",
    "complete",
    "build_backend",
]
