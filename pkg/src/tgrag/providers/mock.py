"""Deterministic stand-ins for the chat and embedding services."""

from __future__ import annotations

import hashlib
import json
import re
import threading
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from ..errors import EmptyResponseError, UnscriptedPromptError
from .base import ChatRequest, SharedProvider, check_texts

Response = Union[str, Sequence[str], Callable[[ChatRequest], str]]

SENTINEL = "[MOCK RESPONSE]"


def prompt_hash(req: ChatRequest) -> str:
    return hashlib.sha256(f"{req.system_prompt}\n{req.user_prompt}".encode("utf-8")).hexdigest()


class MockChatProvider(SharedProvider):
    """Answers ``chat`` from an ordered script of ``pattern -> response`` rules.

    A pattern is a regular expression searched (DOTALL) in the system and user
    prompts joined by a newline, or ``sha256:<hex>`` to match one exact
    prompt. The first declared matching rule wins. A response may be a string,
    a list of strings served in rotation, or a callable taking the request.
    Without a match, strict mode raises and lenient mode echoes ``sentinel``.
    """

    def __init__(
        self,
        script: Mapping[str, Response] | Iterable[tuple[str, Response]] | None = None,
        strict: bool = True,
        sentinel: str = SENTINEL,
    ):
        items = script.items() if isinstance(script, Mapping) else (script or [])
        self.rules: list[tuple[str, re.Pattern | None, Response]] = []
        for pattern, response in items:
            compiled = None if pattern.startswith("sha256:") else re.compile(pattern, re.DOTALL)
            self.rules.append((pattern, compiled, response))
        self.strict = strict
        self.sentinel = sentinel
        self.calls: list[ChatRequest] = []
        self._served: dict[int, int] = {}
        self._lock = threading.Lock()

    def _match(self, req: ChatRequest) -> tuple[int, Response] | None:
        text = f"{req.system_prompt}\n{req.user_prompt}"
        digest = None
        for i, (pattern, compiled, response) in enumerate(self.rules):
            if compiled is None:
                digest = digest or prompt_hash(req)
                if pattern[len("sha256:"):] == digest:
                    return i, response
            elif compiled.search(text):
                return i, response
        return None

    def chat(self, req: ChatRequest) -> str:
        with self._lock:
            self.calls.append(req)
            hit = self._match(req)
            if hit is None:
                if self.strict:
                    raise UnscriptedPromptError(
                        f"no scripted response for prompt: {req.user_prompt[:80]!r}"
                    )
                return self.sentinel
            index, response = hit
            if callable(response):
                out = response(req)
            elif isinstance(response, str):
                out = response
            else:
                n = self._served.get(index, 0)
                self._served[index] = n + 1
                out = response[n % len(response)]
        if not out or not out.strip():
            raise EmptyResponseError("scripted empty completion")
        return out

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def reset(self) -> None:
        with self._lock:
            self.calls.clear()
            self._served.clear()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatProvider":
        """Load ``{"strict": bool, "rules": [{"pattern": ..., "response": ...}]}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [(r["pattern"], r["response"]) for r in data.get("rules", [])]
        return cls(rules, strict=data.get("strict", True), sentinel=data.get("sentinel", SENTINEL))


def _seeded_gaussian(key: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal(dim)


class HashEmbedder:
    """Each text maps to a unit vector drawn from a Gaussian seeded by its hash."""

    def __init__(self, dim: int = 64, seed: int = 0, model_name: str = "hash-embedder"):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.model_name = f"{model_name}-{dim}-{seed}"
        self.calls = 0

    def _vector(self, text: str) -> np.ndarray:
        v = _seeded_gaussian(f"{self.seed}\x00{text}", self.dim)
        return v / np.linalg.norm(v)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        check_texts(texts)
        self.calls += 1
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self._vector(t) for t in texts])


class TokenHashEmbedder(HashEmbedder):
    """Bag-of-words variant: the normalized sum of per-token hash vectors.

    Texts sharing vocabulary get positive cosine, which makes small demo
    corpora retrieve sensibly without a real model.
    """

    _WORD = re.compile(r"\w+")

    def __init__(self, dim: int = 256, seed: int = 0, model_name: str = "token-hash-embedder"):
        super().__init__(dim, seed, model_name)
        self._cache: dict[str, np.ndarray] = {}

    def _token(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            v = _seeded_gaussian(f"{self.seed}\x01{token}", self.dim)
            self._cache[token] = v
        return v

    def _vector(self, text: str) -> np.ndarray:
        tokens = self._WORD.findall(text.lower())
        if not tokens:
            return super()._vector(text)
        v = np.sum([self._token(t) for t in tokens], axis=0)
        norm = np.linalg.norm(v)
        if norm == 0:
            return super()._vector(text)
        return v / norm


class FixedEmbedder:
    """Looks vectors up in a table; for hand-built retrieval fixtures."""

    def __init__(self, table: Mapping[str, Sequence[float]], model_name: str = "fixed-embedder"):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        dims = {v.shape[0] for v in self.table.values()}
        if len(dims) != 1:
            raise ValueError("all fixture vectors must share one dimension")
        self.dim = dims.pop()
        self.model_name = model_name

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        check_texts(texts)
        missing = [t for t in texts if t not in self.table]
        if missing:
            raise KeyError(f"no fixture vector for {missing[0]!r}")
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self.table[t] for t in texts])
