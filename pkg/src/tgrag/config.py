"""Engine configuration: defaults, INI files, and provider construction.

Values resolve as command-line flag, then config file, then default.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .providers import (
    CachedEmbedder,
    HashEmbedder,
    MockChatProvider,
    OpenAIChatProvider,
    OpenAIEmbeddingProvider,
    ProviderConfig,
    TokenHashEmbedder,
)

ENGINE, PROVIDERS = "engine", "providers"


def _opt(default, section=ENGINE):
    return field(default=default, metadata={"section": section})


@dataclass
class EngineConfig:
    corpus_root: str = _opt("")
    workdir: str = _opt("work")
    chunk_size_retrieval: int = _opt(1000)
    chunk_size_dataset: int = _opt(2000)
    chunk_overlap: int = _opt(0)
    n: int = _opt(30)
    k: int = _opt(15)
    t: int = _opt(5)
    graph_token_budget: int = _opt(1600)
    tek_threshold: float = _opt(0.75)
    max_subqueries: int = _opt(8)
    literal_two_stage: bool = _opt(False)
    node_aggregation: str = _opt("mean")
    answer_temperature: float = _opt(0.2)
    judge_temperature: float = _opt(0.7)
    judge_runs: int = _opt(3)
    prompt_dir: str = _opt("")

    llm_provider: str = _opt("openai", PROVIDERS)
    llm_script: str = _opt("", PROVIDERS)
    llm_endpoint: str = _opt("", PROVIDERS)
    llm_model: str = _opt("", PROVIDERS)
    embed_provider: str = _opt("openai", PROVIDERS)
    embed_endpoint: str = _opt("", PROVIDERS)
    embed_model: str = _opt("", PROVIDERS)
    embed_dim: int = _opt(256, PROVIDERS)
    max_in_flight: int = _opt(4, PROVIDERS)
    max_retries: int = _opt(2, PROVIDERS)
    timeout: float = _opt(60.0, PROVIDERS)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("chunk_size_retrieval", "chunk_size_dataset", "n", "k", "t", "graph_token_budget",
                     "max_subqueries", "judge_runs", "embed_dim", "max_in_flight"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.chunk_overlap < 0 or self.chunk_overlap >= self.chunk_size_retrieval:
            raise ConfigError("chunk_overlap must be in [0, chunk_size_retrieval)")
        if self.llm_provider not in ("openai", "mock"):
            raise ConfigError(f"llm_provider must be openai or mock, got {self.llm_provider!r}")
        if self.embed_provider not in ("openai", "hash", "token-hash"):
            raise ConfigError(f"embed_provider must be openai, hash or token-hash, got {self.embed_provider!r}")
        if self.node_aggregation not in ("mean", "concat"):
            raise ConfigError(f"node_aggregation must be mean or concat, got {self.node_aggregation!r}")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "EngineConfig":
        """Copy with every non-``None`` override applied."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _coerce(name: str, kind: type | str, raw: str) -> Any:
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(kind, kind) if isinstance(kind, str) else kind
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip()) if kind is not str else raw
    except ValueError:
        raise ConfigError(f"config key {name}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    known = {f.name: f for f in fields(EngineConfig)}
    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in (ENGINE, PROVIDERS):
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            f = known.get(key)
            if f is None or f.metadata["section"] != section:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[key] = _coerce(key, f.type, raw)
    return values


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> EngineConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values = parse_config(text, str(path))
    cfg = EngineConfig(**values)
    return cfg.with_overrides(overrides or {})


def dump_config(cfg: EngineConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.add_section(ENGINE)
    parser.add_section(PROVIDERS)
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        parser.set(f.metadata["section"], f.name, str(value).lower() if isinstance(value, bool) else str(value))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _provider_config(cfg: EngineConfig, kind: str, endpoint: str, model: str) -> ProviderConfig:
    """Config-file values win over the TGRAG_* environment."""
    return ProviderConfig.from_env(
        kind,
        endpoint=endpoint or None,
        model_name=model or None,
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        max_in_flight=cfg.max_in_flight,
    )


def make_llm(cfg: EngineConfig):
    if cfg.llm_provider == "mock":
        if not cfg.llm_script:
            raise ConfigError("llm_provider = mock needs llm_script")
        try:
            return MockChatProvider.from_file(cfg.llm_script)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load mock script {cfg.llm_script}: {exc}") from exc
    pc = _provider_config(cfg, "llm", cfg.llm_endpoint, cfg.llm_model)
    if not pc.endpoint or not pc.model_name:
        raise ConfigError("llm endpoint and model must be set (config or TGRAG_LLM_ENDPOINT/TGRAG_LLM_MODEL)")
    return OpenAIChatProvider(pc)


def make_embedder(cfg: EngineConfig, cache_dir: str | Path | None = None):
    if cfg.embed_provider == "hash":
        inner = HashEmbedder(cfg.embed_dim)
    elif cfg.embed_provider == "token-hash":
        inner = TokenHashEmbedder(cfg.embed_dim)
    else:
        pc = _provider_config(cfg, "embed", cfg.embed_endpoint, cfg.embed_model)
        if not pc.endpoint or not pc.model_name:
            raise ConfigError(
                "embedding endpoint and model must be set (config or TGRAG_EMBED_ENDPOINT/TGRAG_EMBED_MODEL)"
            )
        inner = OpenAIEmbeddingProvider(pc)
    return CachedEmbedder(inner, cache_dir) if cache_dir is not None else inner
