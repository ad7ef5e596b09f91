"""Model service interfaces and implementations."""

from .base import ChatProvider, ChatRequest, EmbeddingProvider, ProviderConfig
from .cache import CachedEmbedder
from .mock import FixedEmbedder, HashEmbedder, MockChatProvider, TokenHashEmbedder, prompt_hash
from .openai import OpenAIChatProvider, OpenAIEmbeddingProvider

__all__ = [
    "CachedEmbedder",
    "ChatProvider",
    "ChatRequest",
    "EmbeddingProvider",
    "FixedEmbedder",
    "HashEmbedder",
    "MockChatProvider",
    "OpenAIChatProvider",
    "OpenAIEmbeddingProvider",
    "ProviderConfig",
    "TokenHashEmbedder",
    "prompt_hash",
]
