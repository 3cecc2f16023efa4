"""
Tests for the chat-completion gateway.

EN: Retry/backoff on transient HTTP errors, auth failures, the response cache and the scripted mock.
FA: تلاش مجدد روی خطاهای گذرای HTTP، خطای احراز هویت، کش پاسخ و بک‌اند ساختگی را بررسی می‌کند.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List

import httpx
import pytest

from src.config import PipelineSettings
from src.errors import AuthError, BackendScriptMiss, ExhaustedRetries
from src.models.llm_gateway import (
    BackendReply,
    ChatRequest,
    GenerationParams,
    LLMGateway,
    OpenAICompatibleBackend,
    ResponseCache,
    RetryPolicy,
    ScriptedMockBackend,
    build_backend,
    hash_request,
)
from src.utils.io import text_hash

ENDPOINT = "https://llm.test/v1/chat/completions"


def _request(text: str = "Extract strengths.", **params) -> ChatRequest:
    return ChatRequest(model_id="gpt-4-32k-0613", user_message=text, params=GenerationParams(**params))


def _completion(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]}


class _Flaky:
    """EN/FA: پاسخ‌دهنده HTTP که ابتدا وضعیت‌های داده‌شده و سپس پاسخ موفق برمی‌گرداند."""

    def __init__(self, statuses: List[int], content: str = "[('aspirin', '81 mg')]") -> None:
        self.statuses = list(statuses)
        self.content = content
        self.calls = 0
        self.bodies: List[dict] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.calls += 1
        self.bodies.append(json.loads(request.content))
        if self.statuses:
            return httpx.Response(self.statuses.pop(0), json={"error": "busy"})
        return httpx.Response(200, json=_completion(self.content))


def _gateway(handler, sleeps: List[float], max_retries: int = 5) -> LLMGateway:
    backend = OpenAICompatibleBackend(ENDPOINT, "secret", transport=httpx.MockTransport(handler))
    retry = RetryPolicy(max_retries=max_retries, backoff_base=1.0, backoff_max=30.0, sleep=sleeps.append)
    return LLMGateway(backend, retry=retry)


def test_rate_limits_are_retried_with_growing_backoff():
    handler = _Flaky([429, 429])
    sleeps: List[float] = []
    response = _gateway(handler, sleeps).complete(_request())

    assert response.raw_text == "[('aspirin', '81 mg')]"
    assert response.finish_reason == "stop"
    assert response.attempts == 3
    assert handler.calls == 3
    assert len(sleeps) == 2
    assert list(response.retry_delays) == sleeps
    assert sleeps[0] > 0 and sleeps[0] <= sleeps[1] <= 30.0


def test_request_body_carries_generation_params():
    handler = _Flaky([])
    _gateway(handler, []).complete(_request(max_tokens=200, temperature=0.0, top_p=0.95, presence_penalty=-1.0))
    body = handler.bodies[0]
    assert body["model"] == "gpt-4-32k-0613"
    assert body["messages"] == [{"role": "user", "content": "Extract strengths."}]
    assert (body["max_tokens"], body["temperature"], body["top_p"], body["presence_penalty"]) == (
        200, 0.0, 0.95, -1.0,
    )


def test_retry_cap_raises_exhausted_retries():
    handler = _Flaky([503] * 10)
    with pytest.raises(ExhaustedRetries) as exc:
        _gateway(handler, [], max_retries=2).complete(_request())
    assert exc.value.attempts == 3
    assert handler.calls == 3


def test_auth_failure_is_not_retried():
    handler = _Flaky([401])
    with pytest.raises(AuthError):
        _gateway(handler, []).complete(_request())
    assert handler.calls == 1


def test_live_backend_needs_a_credential():
    with pytest.raises(AuthError):
        OpenAICompatibleBackend(ENDPOINT, None)
    with pytest.raises(ValueError):
        build_backend(PipelineSettings(llm_endpoint=None))


def test_cache_hit_skips_the_backend_and_survives_reload(tmp_path):
    cache_path = tmp_path / "cache.jsonl"
    backend = ScriptedMockBackend([("", "[('ASA', '325')]")])
    gateway = LLMGateway(backend, ResponseCache(cache_path))

    first = gateway.complete(_request())
    second = gateway.complete(_request())
    assert (first.cached, second.cached) == (False, True)
    assert second.attempts == 0
    assert second.raw_text == first.raw_text
    assert backend.call_count == 1

    reloaded = ResponseCache(cache_path)
    assert hash_request(_request()) in reloaded
    assert len(reloaded) == 1


def test_request_hash_depends_on_every_field():
    base = _request()
    assert hash_request(base) == hash_request(_request())
    assert hash_request(base) != hash_request(_request(max_tokens=100))
    assert hash_request(base) != hash_request(_request("Extract routes."))
    assert hash_request(base) != hash_request(base.model_copy(update={"model_id": "gpt-35-turbo-0301"}))


def test_identical_concurrent_requests_reach_the_backend_once():
    class _Slow:
        def __init__(self) -> None:
            self.calls = 0
            self.lock = threading.Lock()

        def send(self, req: ChatRequest) -> BackendReply:
            with self.lock:
                self.calls += 1
            time.sleep(0.05)
            return BackendReply("[]")

    backend = _Slow()
    gateway = LLMGateway(backend, parallelism=4)
    with ThreadPoolExecutor(max_workers=8) as pool:
        responses = list(pool.map(lambda _: gateway.complete(_request()), range(8)))
    assert backend.calls == 1
    assert sum(not r.cached for r in responses) == 1
    assert gateway._key_locks == {}


def test_per_request_locks_are_released_after_completion():
    class _Echo:
        def send(self, req: ChatRequest) -> BackendReply:
            if "fail" in req.user_message:
                raise AuthError("rejected")
            return BackendReply(f"[('{req.user_message}', '1 mg')]")

    gateway = LLMGateway(_Echo(), parallelism=4)
    texts = [f"note {i % 25}" for i in range(100)]
    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(lambda t: gateway.complete(_request(t)), texts))
    assert gateway._key_locks == {}

    with pytest.raises(AuthError):
        gateway.complete(_request("fail"))
    assert gateway._key_locks == {}


def test_scripted_backend_matches_hash_then_substring():
    req = _request("Clinical note: Plavix 75 mg")
    by_request = ScriptedMockBackend([("Plavix", "substring"), (hash_request(req), "by request")])
    assert by_request.send(req).raw_text == "by request"
    assert by_request.send(_request("Plavix only")).raw_text == "substring"

    by_text = ScriptedMockBackend([("Plavix", "substring"), (text_hash(req.user_message), "by text hash")])
    assert by_text.send(req).raw_text == "by text hash"

    backend = ScriptedMockBackend([("Plavix", "substring")])
    assert backend.call_count == 0
    with pytest.raises(BackendScriptMiss):
        backend.send(_request("nothing scripted"))


def test_invalid_params_are_rejected():
    with pytest.raises(ValueError):
        GenerationParams(top_p=0.0)
    with pytest.raises(ValueError):
        GenerationParams(presence_penalty=-3.0)
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", user_message="")
