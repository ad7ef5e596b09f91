"""Three-layer interactive retrieval (period -> node -> knowledge) and
connectivity-scored source-text selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import MutableMapping, Sequence

import numpy as np

from .corpus import ALL_TIMES, Chunk, ChunkStore, TimeLabel
from .errors import ProviderError, StageError, TimeResolutionError
from .kgraph import KnowledgeUnit, TemporalGraph, TemporalSubgraph, full_view, one_hop, subgraph_at
from .providers.base import EmbeddingProvider
from .tqd import SubQuery, resolve_time
from .vectorindex import IndexedItem, SubgraphIndex, build_index, top_m

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalConfig:
    n: int = 30
    k: int = 15
    t: int = 5
    graph_token_budget: int = 1600

    def __post_init__(self):
        for name in ("n", "k", "t", "graph_token_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class KnowledgeHit:
    entity: str
    time_label: TimeLabel
    text: str
    score: float
    item_id: str


@dataclass
class RelationHit:
    source: str
    target: str
    knowledge: list[KnowledgeUnit]
    strength: float
    valid_endpoints: int


@dataclass(frozen=True)
class SourceHit:
    chunk: Chunk
    score: float


@dataclass
class RetrievalResult:
    query: str
    time_label: str | None
    candidates: list[tuple[str, float]] = field(default_factory=list)
    valid_knowledge: list[KnowledgeHit] = field(default_factory=list)
    valid_nodes: list[str] = field(default_factory=list)
    valid_relations: list[RelationHit] = field(default_factory=list)
    valid_texts: list[SourceHit] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def candidate_names(self) -> list[str]:
        return [name for name, _ in self.candidates]

    def is_empty(self) -> bool:
        return not (self.candidates or self.valid_knowledge or self.valid_relations or self.valid_texts)

    def to_trace(self) -> dict:
        return {
            "query": self.query,
            "time_label": self.time_label,
            "candidates": [{"entity": n, "score": round(s, 6)} for n, s in self.candidates],
            "valid_knowledge": [
                {
                    "entity": h.entity,
                    "time_label": h.time_label.raw,
                    "text": h.text,
                    "score": round(h.score, 6),
                    "item_id": h.item_id,
                }
                for h in self.valid_knowledge
            ],
            "valid_nodes": list(self.valid_nodes),
            "valid_relations": [
                {
                    "source": r.source,
                    "target": r.target,
                    "strength": r.strength,
                    "valid_endpoints": r.valid_endpoints,
                    "knowledge": [{"text": u.text, "time_label": u.time_label.raw} for u in r.knowledge],
                }
                for r in self.valid_relations
            ],
            "valid_texts": [
                {"chunk_id": s.chunk.chunk_id, "time_label": s.chunk.time_label.raw, "score": s.score}
                for s in self.valid_texts
            ],
            "notes": list(self.notes),
        }


def embed_query(text: str, em: EmbeddingProvider) -> np.ndarray:
    return np.asarray(em.embed([text])[0], dtype=np.float64)


def retrieve_candidates(
    sub: SubQuery | str,
    index: SubgraphIndex,
    em: EmbeddingProvider | None,
    n: int,
    q_vec: np.ndarray | None = None,
) -> list[tuple[str, float]]:
    """Top-``n`` entity nodes by cosine to the query, as ``(name, score)``."""
    if not index.node_items:
        return []
    if q_vec is None:
        q_vec = embed_query(sub.text if isinstance(sub, SubQuery) else sub, em)
    return [(item_id[2:], score) for item_id, score in top_m(index.node_items, q_vec, n)]


def retrieve_knowledge(
    candidates: Sequence[str],
    index: SubgraphIndex,
    q_vec: np.ndarray,
    k: int,
) -> tuple[list[KnowledgeHit], list[str]]:
    """Global top-``k`` over the pooled knowledge of all candidates, plus the
    owners of the selected units in best-score order."""
    pool: list[IndexedItem] = []
    for name in candidates:
        if index.node(name) is None:
            raise KeyError(f"candidate {name!r} is not indexed")
        pool.extend(index.knowledge_items.get(name, []))
    if not pool:
        return [], []
    by_id = {item.item_id: item for item in pool}
    hits = []
    for item_id, score in top_m(pool, q_vec, k):
        item = by_id[item_id]
        hits.append(KnowledgeHit(item.owner_entity, item.time_label, item.payload_text, score, item_id))
    owners: list[str] = []
    for hit in hits:
        if hit.entity not in owners:
            owners.append(hit.entity)
    return hits, owners


def select_relations(valid_nodes: Sequence[str], sub: TemporalSubgraph) -> list[RelationHit]:
    """Relations touching a valid node, most-connected and strongest first."""
    valid = set(valid_nodes)
    hits = []
    for (src, tgt), rel in sub.relations.items():
        count = (src in valid) + (tgt in valid)
        if count:
            hits.append(RelationHit(src, tgt, list(rel.knowledge), rel.strength(), count))
    hits.sort(key=lambda r: (-r.valid_endpoints, -r.strength, r.source, r.target))
    return hits


def extract_source_texts(
    valid_nodes: Sequence[str],
    sub: TemporalSubgraph,
    graph: TemporalGraph,
    chunks: ChunkStore,
    t: int,
) -> list[SourceHit]:
    """Score each chunk of the subgraph's period by how many distinct entities
    of ``valid_nodes`` plus their one-hop neighbours it mentions; keep the top ``t``."""
    if not valid_nodes:
        return []
    scope = one_hop(sub, valid_nodes)
    scored = []
    for chunk in chunks.at(sub.time_label):
        score = len(graph.chunk_index.get(chunk.chunk_id, set()) & scope)
        if score >= 1:
            scored.append(SourceHit(chunk, score))
    scored.sort(key=lambda s: (-s.score, s.chunk.chunk_id))
    return scored[:t]


class IndexCache:
    """Per-period indexes, built on first use when not preloaded."""

    def __init__(self, graph: TemporalGraph, em: EmbeddingProvider, indexes: MutableMapping[str, SubgraphIndex] | None = None,
                 aggregation: str = "mean"):
        self.graph = graph
        self.em = em
        self.indexes = indexes if indexes is not None else {}
        self.aggregation = aggregation

    def get(self, label: TimeLabel, sub: TemporalSubgraph | None = None) -> SubgraphIndex:
        index = self.indexes.get(label.raw)
        if index is None:
            sub = sub or subgraph_at(self.graph, label)
            index = build_index(sub, self.em, self.aggregation)
            self.indexes[label.raw] = index
        return index


def retrieve_at(
    sub: SubQuery,
    label: TimeLabel,
    graph: TemporalGraph,
    indexes: IndexCache,
    em: EmbeddingProvider,
    cfg: RetrievalConfig,
    chunks: ChunkStore,
    q_vec: np.ndarray | None = None,
) -> RetrievalResult:
    """One retrieval pass of ``sub`` against a single period (or ``ALL_TIMES``)."""
    result = RetrievalResult(sub.text, None if label == ALL_TIMES else label.raw)
    try:
        view = full_view(graph) if label == ALL_TIMES else subgraph_at(graph, label)
    except Exception as exc:
        raise StageError("subgraph", exc, label.raw) from exc
    if not view.entities:
        result.notes.append(f"no knowledge at {label.raw}")
        return result
    try:
        index = indexes.get(label, view)
    except Exception as exc:
        raise StageError("index", exc, label.raw) from exc
    try:
        if q_vec is None:
            q_vec = embed_query(sub.text, em)
        result.candidates = retrieve_candidates(sub, index, em, cfg.n, q_vec)
    except (ProviderError, ValueError) as exc:
        raise StageError("node", exc, label.raw) from exc
    try:
        result.valid_knowledge, result.valid_nodes = retrieve_knowledge(
            result.candidate_names, index, q_vec, cfg.k
        )
    except (KeyError, ValueError) as exc:
        raise StageError("knowledge", exc, label.raw) from exc
    try:
        result.valid_relations = select_relations(result.valid_nodes, view)
    except Exception as exc:
        raise StageError("relations", exc, label.raw) from exc
    try:
        result.valid_texts = extract_source_texts(result.valid_nodes, view, graph, chunks, cfg.t)
    except KeyError as exc:
        raise StageError("source_texts", exc, label.raw) from exc
    return result


def retrieve(
    sub: SubQuery,
    graph: TemporalGraph,
    indexes: IndexCache,
    em: EmbeddingProvider,
    cfg: RetrievalConfig,
    chunks: ChunkStore,
) -> list[RetrievalResult]:
    """All retrieval passes for one sub-query.

    Untimed sub-queries run once against every period. A time string is
    resolved against the graph's periods and each resolved period gets its
    own pass; a period absent from the corpus yields one empty result.
    """
    if sub.time is None:
        return [retrieve_at(sub, ALL_TIMES, graph, indexes, em, cfg, chunks)]
    available = graph.time_labels()
    try:
        labels = sorted(resolve_time(sub.time, available)) if available else []
    except TimeResolutionError as exc:
        raise StageError("resolve_time", exc, sub.time) from exc
    if not labels:
        empty = RetrievalResult(sub.text, sub.time)
        empty.notes.append(f"period {sub.time} not present in the corpus")
        return [empty]
    q_vec = embed_query(sub.text, em)
    return [retrieve_at(sub, label, graph, indexes, em, cfg, chunks, q_vec) for label in labels]


class ChunkRetriever:
    """Plain dense retrieval over chunks; the comparison path without a graph."""

    def __init__(self, chunks: ChunkStore, em: EmbeddingProvider, t: int = 5):
        self.em = em
        self.t = t
        ordered = sorted(chunks, key=lambda c: c.chunk_id)
        self.items = []
        if ordered:
            vectors = em.embed([c.text for c in ordered])
            self.items = [
                IndexedItem(c.chunk_id, "chunk", "", c.time_label, np.asarray(v, dtype=np.float32), c.text)
                for c, v in zip(ordered, vectors)
            ]
        self._chunks = {c.chunk_id: c for c in ordered}

    def search(self, query: str) -> RetrievalResult:
        result = RetrievalResult(query, None)
        if not self.items:
            return result
        for chunk_id, score in top_m(self.items, embed_query(query, self.em), self.t):
            result.valid_texts.append(SourceHit(self._chunks[chunk_id], score))
        return result
