"""Chat and embedding clients for OpenAI-compatible HTTP endpoints."""

from __future__ import annotations

import logging
import threading
import time
import uuid
from typing import Sequence

import httpx
import numpy as np

from ..errors import EmptyResponseError, ProtocolError, TransportError
from .base import ChatRequest, ProviderConfig, SharedProvider, check_texts

logger = logging.getLogger(__name__)

_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


class _HTTPClient:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        if not config.endpoint:
            raise ValueError("provider endpoint is not configured")
        self.config = config
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            base_url=config.endpoint.rstrip("/"),
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self.attempts = 0

    def post(self, path: str, payload: dict) -> tuple[dict, str]:
        request_id = uuid.uuid4().hex
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt and self.config.backoff:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            self.attempts += 1
            try:
                with self._slots:
                    resp = self._client.post(path, json=payload, headers={"X-Request-ID": request_id})
            except httpx.TransportError as exc:
                last = exc
                logger.warning("request %s attempt %d failed: %s", request_id, attempt + 1, exc)
                continue
            if resp.status_code in _RETRY_STATUS:
                last = RuntimeError(f"HTTP {resp.status_code}")
                logger.warning("request %s attempt %d got HTTP %d", request_id, attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}", request_id)
            try:
                return resp.json(), request_id
            except ValueError as exc:
                raise ProtocolError(f"non-JSON response: {exc}", request_id) from exc
        raise TransportError(
            f"{path} failed after {self.config.max_retries + 1} attempts: {last}", request_id
        )

    def close(self) -> None:
        self._client.close()


class OpenAIChatProvider(SharedProvider):
    """``chat`` over ``POST {endpoint}/chat/completions``."""

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = _HTTPClient(config, transport)

    @property
    def attempts(self) -> int:
        return self._http.attempts

    def chat(self, req: ChatRequest) -> str:
        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.append({"role": "user", "content": req.user_prompt})
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        body, request_id = self._http.post("/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}", request_id) from exc
        if not content or not str(content).strip():
            raise EmptyResponseError("empty completion", request_id)
        return str(content)


class OpenAIEmbeddingProvider(SharedProvider):
    """``embed`` over ``POST {endpoint}/embeddings``.

    ``dim`` may be given up front; otherwise the first response fixes it and
    later responses must agree.
    """

    def __init__(
        self,
        config: ProviderConfig,
        dim: int | None = None,
        batch_size: int = 64,
        transport: httpx.BaseTransport | None = None,
    ):
        self.config = config
        self.model_name = config.model_name
        self.dim = dim or 0
        self.batch_size = batch_size
        self._http = _HTTPClient(config, transport)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        check_texts(texts)
        rows: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start:start + self.batch_size])
            body, request_id = self._http.post("/embeddings", {"model": self.model_name, "input": batch})
            try:
                data = sorted(body["data"], key=lambda d: d.get("index", 0))
                vectors = np.asarray([d["embedding"] for d in data], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed embedding response: {exc}", request_id) from exc
            if vectors.ndim != 2 or vectors.shape[0] != len(batch):
                raise ProtocolError(
                    f"expected {len(batch)} embeddings, got shape {vectors.shape}", request_id
                )
            if not self.dim:
                self.dim = vectors.shape[1]
            if vectors.shape[1] != self.dim:
                raise ProtocolError(
                    f"embedding dimension {vectors.shape[1]} != declared {self.dim}", request_id
                )
            if not np.all(np.isfinite(vectors)):
                raise ProtocolError("non-finite embedding values", request_id)
            rows.append(vectors)
        if not rows:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.vstack(rows)
