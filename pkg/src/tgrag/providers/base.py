from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


class SharedProvider:
    """Providers hold connections, locks and counters; copies share the
    original (this is what estimator cloning needs)."""

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    max_tokens: int = 1024
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not (self.temperature >= 0 and math.isfinite(self.temperature)):
            raise ValueError("temperature must be a finite value >= 0")


@dataclass
class ProviderConfig:
    endpoint: str
    model_name: str
    api_key: str = field(default="", repr=False)
    timeout: float = 60.0
    max_retries: int = 2
    max_in_flight: int = 4
    backoff: float = 1.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, kind: str = "llm", **overrides) -> "ProviderConfig":
        """Read ``TGRAG_<KIND>_ENDPOINT``/``_MODEL`` and ``TGRAG_API_KEY``."""
        prefix = "TGRAG_LLM" if kind == "llm" else "TGRAG_EMBED"
        values = {
            "endpoint": os.environ.get(f"{prefix}_ENDPOINT", ""),
            "model_name": os.environ.get(f"{prefix}_MODEL", ""),
            "api_key": os.environ.get("TGRAG_API_KEY", ""),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@runtime_checkable
class ChatProvider(Protocol):
    def chat(self, req: ChatRequest) -> str: ...


@runtime_checkable
class EmbeddingProvider(Protocol):
    model_name: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def check_texts(texts: Sequence[str]) -> None:
    for i, text in enumerate(texts):
        if not isinstance(text, str) or not text.strip():
            raise ValueError(f"embedding input at index {i} is empty")
