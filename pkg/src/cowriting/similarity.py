"""Sentence-pair similarity providers.

Two providers share one interface: a deterministic lexical TF-IDF cosine
(used for merger resolution and as the default modification scorer) and a
client for a remote embedding service speaking the /embed wire protocol.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import requests

DEFAULT_MODIFICATION_THRESHOLD = 0.8
DEFAULT_TIMEOUT = 10.0

_TOKEN_STRIP = re.compile(r"[^\w\s]", re.UNICODE)


class ProviderError(Exception):
    """Raised when a similarity provider cannot produce a score."""


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    provider: str
    cached: bool = False


def _tokenize(text: str) -> list[str]:
    return _TOKEN_STRIP.sub(" ", text.lower()).split()


def _tfidf_vector(tokens: Sequence[str], idf: dict[str, float]) -> dict[str, float]:
    counts: dict[str, int] = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    return {t: c * idf.get(t, _idf(0, 0)) for t, c in counts.items()}


def _idf(n_docs: int, df: int) -> float:
    # smoothed: ln((1+N)/(1+df)) + 1
    return math.log((1 + n_docs) / (1 + df)) + 1.0


def _cosine(a: dict[str, float], b: dict[str, float]) -> float:
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def build_idf(corpus: Sequence[str]) -> dict[str, float]:
    n = len(corpus)
    df: dict[str, int] = {}
    for doc in corpus:
        for t in set(_tokenize(doc)):
            df[t] = df.get(t, 0) + 1
    return {t: _idf(n, d) for t, d in df.items()}


def lexical_cosine(a: str, b: str, corpus: Sequence[str]) -> SimilarityScore:
    """Cosine of TF-IDF vectors, with IDF estimated from the given corpus.

    Conventions: two empty token sets score 1.0; empty vs non-empty scores
    0.0.
    """
    ta, tb = _tokenize(a), _tokenize(b)
    if not ta and not tb:
        return SimilarityScore(1.0, "lexical-tfidf")
    if not ta or not tb:
        return SimilarityScore(0.0, "lexical-tfidf")
    idf = build_idf(corpus)
    value = _cosine(_tfidf_vector(ta, idf), _tfidf_vector(tb, idf))
    return SimilarityScore(value, "lexical-tfidf")


class SimilarityProvider(Protocol):
    kind: str

    def score(self, a: str, b: str) -> SimilarityScore: ...


@dataclass
class LexicalProvider:
    """TF-IDF cosine over a fixed per-session corpus."""

    corpus: Sequence[str]
    kind: str = "lexical-tfidf"
    _idf: Optional[dict[str, float]] = field(default=None, repr=False)

    def score(self, a: str, b: str) -> SimilarityScore:
        ta, tb = _tokenize(a), _tokenize(b)
        if not ta and not tb:
            return SimilarityScore(1.0, self.kind)
        if not ta or not tb:
            return SimilarityScore(0.0, self.kind)
        if self._idf is None:
            self._idf = build_idf(self.corpus)
        value = _cosine(_tfidf_vector(ta, self._idf), _tfidf_vector(tb, self._idf))
        return SimilarityScore(value, self.kind)


class RemoteProvider:
    """Client for the embedding service wire protocol.

    POST {endpoint}/embed with {"texts": [...], "model": name} and expects
    unit-L2 vectors back, so cosine reduces to a dot product.  Embeddings
    are cached per provider instance keyed by exact string; cache writes are
    serialized and at most ``max_in_flight`` requests run concurrently.
    """

    kind = "remote-embedding"

    def __init__(
        self,
        endpoint: str,
        *,
        model: str = "default",
        timeout: float = DEFAULT_TIMEOUT,
        max_in_flight: int = 8,
        session: Optional[requests.Session] = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout = timeout
        self._cache: dict[str, tuple[float, ...]] = {}
        self._lock = threading.Lock()
        self._gate = threading.Semaphore(max_in_flight)
        self._http = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> list[tuple[float, ...]]:
        missing = []
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            vectors = self._fetch(missing)
            with self._lock:
                for text, vec in zip(missing, vectors):
                    self._cache[text] = vec
        with self._lock:
            return [self._cache[t] for t in texts]

    def _fetch(self, texts: list[str]) -> list[tuple[float, ...]]:
        payload = {"texts": texts, "model": self.model}
        try:
            with self._gate:
                resp = self._http.post(
                    f"{self.endpoint}/embed", json=payload, timeout=self.timeout
                )
            resp.raise_for_status()
            body = resp.json()
            vectors = [tuple(float(x) for x in v) for v in body["vectors"]]
        except (requests.RequestException, KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(
                f"service returned {len(vectors)} vectors for {len(texts)} texts"
            )
        for v in vectors:
            if not v or not all(math.isfinite(x) for x in v):
                raise ProviderError("service returned a non-finite vector")
        return vectors

    def score(self, a: str, b: str) -> SimilarityScore:
        cached = False
        with self._lock:
            cached = a in self._cache and b in self._cache
        va, vb = self.embed([a, b])
        value = sum(x * y for x, y in zip(va, vb))
        return SimilarityScore(value, self.kind, cached=cached)

    def health(self) -> dict:
        try:
            resp = self._http.get(f"{self.endpoint}/health", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(f"health check failed: {exc}") from exc


@dataclass
class FallbackProvider:
    """Remote provider with opt-in lexical fallback.

    Fallback never happens silently: each score records which provider
    produced it, and fallback must be enabled explicitly.
    """

    remote: RemoteProvider
    lexical: LexicalProvider
    allow_fallback: bool = False
    kind: str = "remote-embedding"

    def score(self, a: str, b: str) -> SimilarityScore:
        try:
            return self.remote.score(a, b)
        except ProviderError:
            if not self.allow_fallback:
                raise
            return self.lexical.score(a, b)


def is_high_modification(
    before: str,
    after: str,
    provider: SimilarityProvider,
    *,
    threshold: float = DEFAULT_MODIFICATION_THRESHOLD,
) -> bool:
    """True when a sentence change is a high modification.

    High modification means similarity strictly below the threshold; a score
    exactly at the threshold counts as low modification.
    """
    if before == after:
        raise ValueError("is_high_modification requires before != after")
    return provider.score(before, after).value < threshold
