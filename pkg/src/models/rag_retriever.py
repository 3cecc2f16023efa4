"""
Retrieval over the UMLS concept file.

EN: Chunk MRCONSO rows under a token budget, embed the chunks, keep an exact cosine index,
    retrieve the top-k chunks for a prompt and append them to it.
FA: ردیف‌های MRCONSO را با سقف توکن بخش‌بندی می‌کند، بخش‌ها را بردارسازی می‌کند، نمایه دقیق کسینوسی
    نگه می‌دارد، k بخش برتر را برای پرامپت بازیابی کرده و به آن اضافه می‌کند.
"""

from __future__ import annotations

import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Literal, Optional, Protocol, Sequence, Tuple, Union

import httpx
import numpy as np
from pydantic import SecretStr
from sklearn.feature_extraction.text import HashingVectorizer

from src.errors import DimensionMismatch, EmptyIndex, MissingChunk, RowTooLarge, ZeroVector
from src.models.llm_gateway import RetryPolicy, auth_headers, check_status
from src.models.prompt_builder import RenderedPrompt, compute_prompt_id
from src.utils.io import append_jsonl, content_hash, read_jsonl, write_jsonl
from src.utils.log import log_event, setup_logger

logger = setup_logger("umls_extract.rag")

DEFAULT_MAX_TOKENS = 8192
DEFAULT_TOP_K = 30
RAG_HEADER = "\n\nRelevant UMLS Metathesaurus entries:\n"
QueryScope = Literal["prompt", "note"]


class TokenCounter(Protocol):
    def count(self, text: str) -> int:
        ...


class RegexTokenCounter:
    """
    EN: Counts maximal alphanumeric runs and single punctuation marks; whitespace is free.
    FA: هر رشته پیوسته حرف/رقم و هر علامت نگارشی یک توکن است؛ فاصله شمرده نمی‌شود.
    """

    name = "regex"
    _TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_")

    def count(self, text: str) -> int:
        return sum(1 for _ in self._TOKEN.finditer(text))


class TiktokenCounter:
    """EN/FA: شمارنده مبتنی بر tiktoken برای بودجه‌ای هم‌خوان با مدل بردارساز."""

    name = "tiktoken"

    def __init__(self, encoding_name: str = "cl100k_base") -> None:
        import tiktoken

        self.encoding_name = encoding_name
        self._encoding = tiktoken.get_encoding(encoding_name)

    def count(self, text: str) -> int:
        return len(self._encoding.encode(text, disallowed_special=()))


def make_tokenizer(name: str = "regex") -> TokenCounter:
    if name == "regex":
        return RegexTokenCounter()
    if name == "tiktoken":
        return TiktokenCounter()
    raise ValueError(f"Unknown tokenizer: {name}")


@dataclass(frozen=True)
class Chunk:
    chunk_id: int
    text: str
    token_count: int


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: int
    score: float


def chunk_rows(
    rows: Iterable[str],
    max_tokens: int = DEFAULT_MAX_TOKENS,
    tokenizer: Optional[TokenCounter] = None,
) -> List[Chunk]:
    """
    Greedy row packing under a token budget.

    EN: Rows are appended in order until the next one would push the chunk past max_tokens; a row is
        never split. Concatenating chunk texts in id order reproduces the input exactly.
    FA: ردیف‌ها به ترتیب اضافه می‌شوند تا وقتی ردیف بعدی بخش را از max_tokens عبور دهد؛ هیچ ردیفی
        شکسته نمی‌شود. اتصال متن بخش‌ها به ترتیب شناسه دقیقاً ورودی را بازمی‌سازد.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    tokenizer = tokenizer or RegexTokenCounter()
    chunks: List[Chunk] = []
    pending: List[Tuple[str, int]] = []
    pending_tokens = 0

    def _flush(batch: List[Tuple[str, int]]) -> List[Tuple[str, int]]:
        # EN: Subword tokenizers may count the joined text higher than the sum; carry rows over if so
        # FA: توکنایزرهای زیرکلمه‌ای ممکن است متن متصل را بیشتر بشمارند؛ در این صورت ردیف‌ها به بخش بعد منتقل می‌شوند
        carry: List[Tuple[str, int]] = []
        while batch:
            text = "".join(row for row, _ in batch)
            count = tokenizer.count(text)
            if count <= max_tokens or len(batch) == 1:
                chunks.append(Chunk(chunk_id=len(chunks), text=text, token_count=count))
                break
            carry.insert(0, batch.pop())
        return carry

    for row in rows:
        n = tokenizer.count(row)
        if n > max_tokens:
            raise RowTooLarge(f"Row of {n} tokens exceeds the {max_tokens}-token chunk budget")
        if pending and pending_tokens + n > max_tokens:
            pending = _flush(pending)
            pending_tokens = sum(c for _, c in pending)
        pending.append((row, n))
        pending_tokens += n
    while pending:
        pending = _flush(pending)
    return chunks


class ChunkStore:
    """EN/FA: نگه‌داری بخش‌ها بر اساس شناسه با ذخیره JSONL."""

    def __init__(self, chunks: Iterable[Chunk] = ()) -> None:
        self._chunks: Dict[int, Chunk] = {}
        for chunk in chunks:
            if chunk.chunk_id in self._chunks:
                raise ValueError(f"Duplicate chunk id {chunk.chunk_id}")
            self._chunks[chunk.chunk_id] = chunk

    def __len__(self) -> int:
        return len(self._chunks)

    def __iter__(self) -> Iterator[Chunk]:
        return iter(sorted(self._chunks.values(), key=lambda c: c.chunk_id))

    def get(self, chunk_id: int) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError as exc:
            raise MissingChunk(f"Chunk {chunk_id} is not in the store") from exc

    def save(self, path: Union[str, Path]) -> int:
        return write_jsonl(
            ({"chunk_id": c.chunk_id, "text": c.text, "token_count": c.token_count} for c in self), path
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ChunkStore":
        file_path = Path(path)
        if not file_path.exists():
            raise FileNotFoundError(f"Missing chunk store: {file_path}")
        return cls(
            Chunk(int(r["chunk_id"]), str(r["text"]), int(r["token_count"])) for r in read_jsonl(file_path)
        )


def as_vector(values: Sequence[float]) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatch("Embedding must be a non-empty 1-D vector")
    if not np.all(np.isfinite(vec)):
        raise ValueError("Embedding contains non-finite values")
    return vec


def _row_dot(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    # EN: Elementwise product + row sum gives identical results for identical rows (ties stay exact)
    # FA: ضرب عنصربه‌عنصر و جمع سطری برای سطرهای یکسان نتیجه یکسان می‌دهد (تساوی‌ها دقیق می‌مانند)
    return (matrix * vec).sum(axis=1)


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Cosine similarity clipped to [-1, 1].

    EN: Raises DimensionMismatch for unequal lengths and ZeroVector for an all-zero input.
    FA: برای طول نابرابر DimensionMismatch و برای بردار تمام‌صفر ZeroVector می‌دهد.
    """
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"Cannot compare dim {va.size} with dim {vb.size}")
    na, nb = float(np.sqrt((va * va).sum())), float(np.sqrt((vb * vb).sum()))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("Cosine similarity is undefined for a zero vector")
    return float(np.clip((va * vb).sum() / (na * nb), -1.0, 1.0))


class VectorIndex:
    """
    Exact exhaustive-scan cosine index.

    EN: Vectors share one dim and ids are unique; persisted as JSON lines {chunk_id, vector}.
    FA: همه بردارها هم‌بعد و شناسه‌ها یکتا هستند؛ به صورت JSONL ذخیره می‌شود.
    """

    def __init__(self, dim: Optional[int] = None) -> None:
        self.dim = dim
        self._ids: List[int] = []
        self._id_set: set = set()
        self._rows: List[np.ndarray] = []
        self._matrix: Optional[np.ndarray] = None
        self._norms: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> List[int]:
        return list(self._ids)

    def add(self, chunk_id: int, vector: Sequence[float]) -> None:
        vec = as_vector(vector)
        if self.dim is None:
            self.dim = int(vec.size)
        if vec.size != self.dim:
            raise DimensionMismatch(f"Index dim is {self.dim}, got {vec.size}")
        if chunk_id in self._id_set:
            raise ValueError(f"Duplicate chunk id {chunk_id}")
        if not np.any(vec):
            raise ZeroVector(f"Chunk {chunk_id} has a zero embedding")
        self._ids.append(int(chunk_id))
        self._id_set.add(int(chunk_id))
        self._rows.append(vec)
        self._matrix = None

    @classmethod
    def from_vectors(cls, vectors: Dict[int, Sequence[float]]) -> "VectorIndex":
        index = cls()
        for chunk_id in sorted(vectors):
            index.add(chunk_id, vectors[chunk_id])
        return index

    def _materialize(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows)
            self._norms = np.sqrt((self._matrix * self._matrix).sum(axis=1))
        return np.asarray(self._ids), self._matrix, self._norms  # type: ignore[return-value]

    def scores(self, query: Sequence[float]) -> np.ndarray:
        """EN/FA: شباهت کسینوسی پرس‌وجو با همه بردارها به ترتیب درج."""
        if not self._ids:
            raise EmptyIndex("Query issued against an empty index")
        q = as_vector(query)
        if q.size != self.dim:
            raise DimensionMismatch(f"Index dim is {self.dim}, query dim is {q.size}")
        q_norm = float(np.sqrt((q * q).sum()))
        if q_norm == 0.0:
            raise ZeroVector("Query embedding is all zeros")
        _, matrix, norms = self._materialize()
        return np.clip(_row_dot(matrix, q) / (norms * q_norm), -1.0, 1.0)

    def save(self, path: Union[str, Path], meta: Optional[Dict[str, object]] = None) -> int:
        header = {"kind": "header", "dim": self.dim, "size": len(self), **(meta or {})}
        records = [{"chunk_id": cid, "vector": vec.tolist()} for cid, vec in zip(self._ids, self._rows)]
        return write_jsonl([header, *records], path) - 1

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VectorIndex":
        file_path = Path(path)
        if not file_path.exists():
            raise FileNotFoundError(f"Missing vector index: {file_path}")
        index = cls()
        for rec in read_jsonl(file_path):
            if rec.get("kind") == "header":
                index.dim = rec.get("dim")
                continue
            index.add(int(rec["chunk_id"]), rec["vector"])
        return index


def query_top_k(index: VectorIndex, query: Sequence[float], k: int = DEFAULT_TOP_K) -> List[RetrievalHit]:
    """
    Exact top-k by cosine similarity.

    EN: Sorted by score descending, ties by ascending chunk_id; returns min(k, len(index)) hits.
    FA: بر اساس امتیاز نزولی و در تساوی بر اساس شناسه صعودی مرتب می‌شود.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = index.scores(query)
    ids = np.asarray(index.ids)
    order = np.lexsort((ids, -scores))[:k]
    return [RetrievalHit(chunk_id=int(ids[i]), score=float(scores[i])) for i in order]


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        ...


class HashingEmbedder:
    """
    Deterministic offline embedder.

    EN: scikit-learn HashingVectorizer over character n-grams, no lowercasing, L2-normalized.
    FA: HashingVectorizer از scikit-learn روی n-gramهای کاراکتری، بدون تبدیل حروف، نرمال‌شده با L2.
    """

    def __init__(self, dim: int = 256, ngram_range: Tuple[int, int] = (1, 3)) -> None:
        self.dim = dim
        self.ngram_range = tuple(ngram_range)
        self._vectorizer = HashingVectorizer(
            analyzer="char",
            ngram_range=self.ngram_range,
            lowercase=False,
            alternate_sign=False,
            norm="l2",
            n_features=dim,
        )

    def describe(self) -> Dict[str, object]:
        return {"embedder": "hashing", "dim": self.dim, "ngram_range": list(self.ngram_range)}

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return self._vectorizer.transform(list(texts)).toarray()


class OpenAICompatibleEmbedder:
    """
    EN: Live embedding endpoint with the gateway's retry policy and a JSON-lines vector cache.
    FA: سرویس بردارسازی زنده با سیاست تلاش مجدد دروازه و کش برداری JSONL.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: Optional[Union[SecretStr, str]],
        model: str,
        cache_path: Optional[Union[str, Path]] = None,
        retry: Optional[RetryPolicy] = None,
        timeout: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.retry = retry or RetryPolicy()
        self.cache_path = Path(cache_path) if cache_path is not None else None
        self._client = httpx.Client(timeout=timeout, transport=transport, headers=auth_headers(api_key))
        self._cache: Dict[str, List[float]] = {}
        self._lock = threading.Lock()
        if self.cache_path is not None and self.cache_path.exists():
            for rec in read_jsonl(self.cache_path):
                self._cache[rec["key"]] = rec["vector"]

    def describe(self) -> Dict[str, object]:
        return {"embedder": "openai-compatible", "model": self.model}

    def _key(self, text: str) -> str:
        return content_hash({"model": self.model, "text": text})

    def _fetch(self, texts: List[str]) -> List[List[float]]:
        response = self._client.post(self.endpoint, json={"model": self.model, "input": texts})
        check_status(response)
        data = sorted(response.json()["data"], key=lambda d: d.get("index", 0))
        return [list(d["embedding"]) for d in data]

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        # EN: Cache lookup, fetch and append share one lock so a text is fetched and written once
        # FA: جست‌وجوی کش، درخواست و نوشتن زیر یک قفل‌اند تا هر متن یک بار دریافت و ثبت شود
        with self._lock:
            missing = sorted({t for t in texts if self._key(t) not in self._cache})
            if missing:
                vectors, _, _ = self.retry.run(lambda: self._fetch(missing), label="embeddings")
                for text, vec in zip(missing, vectors):
                    key = self._key(text)
                    self._cache[key] = vec
                    if self.cache_path is not None:
                        append_jsonl({"key": key, "vector": vec}, self.cache_path)
            return np.asarray([self._cache[self._key(t)] for t in texts], dtype=np.float64)


def embed(texts: Sequence[str], provider: Embedder) -> np.ndarray:
    """
    EN: One vector per text with a constant dim.
    FA: برای هر متن یک بردار با بعد ثابت.
    """
    texts = list(texts)
    if not texts:
        return np.zeros((0, 0))
    vectors = np.asarray(provider.embed(texts), dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(texts):
        raise DimensionMismatch(f"Embedder returned shape {vectors.shape} for {len(texts)} texts")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("Embedder returned non-finite values")
    return vectors


def build_index(
    chunks: Sequence[Chunk],
    provider: Embedder,
    batch_size: int = 32,
    parallelism: int = 1,
) -> VectorIndex:
    """
    Embed chunks and build the index.

    EN: Batches may be embedded concurrently; the index is filled in chunk-id order afterwards.
    FA: دسته‌ها می‌توانند هم‌زمان بردارسازی شوند؛ نمایه سپس به ترتیب شناسه بخش پر می‌شود.
    """
    batches = [list(chunks[i : i + batch_size]) for i in range(0, len(chunks), batch_size)]

    def _embed_batch(batch: List[Chunk]) -> np.ndarray:
        return embed([c.text for c in batch], provider)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(_embed_batch, batches))

    index = VectorIndex()
    for batch, vectors in zip(batches, results):
        for chunk, vec in zip(batch, vectors):
            index.add(chunk.chunk_id, vec)
    log_event(logger, "index_built", chunk_count=len(chunks), dim=index.dim)
    print(f"Indexed chunks: {len(index):,} (dim {index.dim})")
    return index


def augment_prompt(prompt: RenderedPrompt, hits: Sequence[RetrievalHit], chunks: ChunkStore) -> RenderedPrompt:
    """
    Append retrieved chunk texts to a prompt.

    EN: Chunks follow the prompt under a header, in hit order; mode becomes rag.
    FA: بخش‌ها پس از پرامپت و زیر یک سرآیند به ترتیب نتایج اضافه می‌شوند؛ حالت به rag تغییر می‌کند.
    """
    retrieved = [chunks.get(hit.chunk_id).text for hit in hits]
    text = prompt.text
    if retrieved:
        text = text + RAG_HEADER + "".join(t if t.endswith("\n") else t + "\n" for t in retrieved)
    return prompt.model_copy(
        update={
            "text": text,
            "mode": "rag",
            "prompt_id": compute_prompt_id(text, "rag", prompt.params_fingerprint),
        }
    )


class RagRetriever:
    """EN/FA: اتصال بازیابی به پایپ‌لاین: پرس‌وجو، k نتیجه برتر و افزودن به پرامپت."""

    def __init__(
        self,
        store: ChunkStore,
        index: VectorIndex,
        embedder: Embedder,
        k: int = DEFAULT_TOP_K,
        query_scope: QueryScope = "prompt",
    ) -> None:
        if query_scope not in ("prompt", "note"):
            raise ValueError(f"Unknown query scope: {query_scope}")
        self.store = store
        self.index = index
        self.embedder = embedder
        self.k = k
        self.query_scope = query_scope

    def retrieve(self, query_text: str) -> List[RetrievalHit]:
        vector = embed([query_text], self.embedder)[0]
        return query_top_k(self.index, vector, self.k)

    def augment(self, prompt: RenderedPrompt, note_text: Optional[str] = None) -> Tuple[RenderedPrompt, List[RetrievalHit]]:
        query_text = note_text if (self.query_scope == "note" and note_text) else prompt.text
        hits = self.retrieve(query_text)
        return augment_prompt(prompt, hits, self.store), hits


__all__ = [
    "DEFAULT_MAX_TOKENS",
    "DEFAULT_TOP_K",
    "RAG_HEADER",
    "QueryScope",
    "TokenCounter",
    "RegexTokenCounter",
    "TiktokenCounter",
    "make_tokenizer",
    "Chunk",
    "RetrievalHit",
    "chunk_rows",
    "ChunkStore",
    "as_vector",
    "cosine",
    "VectorIndex",
    "query_top_k",
    "Embedder",
    "HashingEmbedder",
    "OpenAICompatibleEmbedder",
    "embed",
    "build_index",
    "augment_prompt",
    "RagRetriever",
]
