"""Estimator-style front end: ``fit`` builds the temporal graph and indexes
from a corpus, ``predict`` answers questions."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import kgraph
from .corpus import ALL_TIMES, Chunk, ChunkStore, Document, chunk_corpus, ingest, load_chunks, save_chunks
from .errors import StateError
from .extract import DEFAULT_DELIMITERS, DEFAULT_ENTITY_TYPES, ExtractionOutput, extract_chunk
from .generate import FinalAnswer, SubAnswer, answer_subquery, assemble_context, finalize
from .kgraph import TemporalGraph, full_view, subgraph_at
from .providers.base import ChatProvider, EmbeddingProvider
from .retriever import IndexCache, RetrievalConfig, RetrievalResult, retrieve
from .tqd import DecompositionResult, SubQuery, decompose, single_query
from .vectorindex import build_index, load_index, save_index

logger = logging.getLogger(__name__)


def check_queries(X) -> list[str]:
    """Accept one question or an iterable of questions; reject blanks."""
    if isinstance(X, str):
        X = [X]
    queries = list(X)
    for i, q in enumerate(queries):
        if not isinstance(q, str) or not q.strip():
            raise ValueError(f"query at position {i} must be a non-empty string")
    return queries


class TemporalGraphRAG(BaseEstimator):
    """Temporal graph retrieval-augmented question answering.

    Parameters
    ----------
    llm : ChatProvider
        Chat service used for extraction, decomposition and generation.
    embedder : EmbeddingProvider
        Embedding service for knowledge units, nodes and queries.
    chunk_size, chunk_overlap : int
        Token window for splitting documents into extraction/source units.
    n, k, t : int
        Candidate nodes, valid knowledge units, and source texts per pass.
    graph_token_budget : int
        Token cap for the knowledge and relation tables of one context.
    decompose : bool
        Split multi-period questions into per-period sub-queries.
    max_subqueries : int
        Decomposition cap; more sub-queries is an error.
    literal_two_stage : bool
        Always run the synthesis call, even for a single undecomposed query.
    node_aggregation : {"mean", "concat"}
        How an entity's knowledge vectors become its node vector.
    max_workers : int
        Parallel extraction calls during ``fit``.
    archive_dir : str or None
        Where raw extraction completions are written, if anywhere.

    Attributes
    ----------
    graph_ : TemporalGraph
    chunks_ : ChunkStore
    indexes_ : dict of str -> SubgraphIndex
    time_labels_ : list of TimeLabel
    extraction_report_ : dict
    """

    def __init__(
        self,
        llm: ChatProvider | None = None,
        embedder: EmbeddingProvider | None = None,
        chunk_size: int = 1000,
        chunk_overlap: int = 0,
        n: int = 30,
        k: int = 15,
        t: int = 5,
        graph_token_budget: int = 1600,
        decompose: bool = True,
        max_subqueries: int = 8,
        literal_two_stage: bool = False,
        entity_types: Sequence[str] = DEFAULT_ENTITY_TYPES,
        node_aggregation: str = "mean",
        max_workers: int = 4,
        extraction_temperature: float = 0.0,
        decomposition_temperature: float = 0.0,
        answer_temperature: float = 0.2,
        archive_dir: str | None = None,
        replay_extractions: bool = False,
    ):
        self.llm = llm
        self.embedder = embedder
        self.chunk_size = chunk_size
        self.chunk_overlap = chunk_overlap
        self.n = n
        self.k = k
        self.t = t
        self.graph_token_budget = graph_token_budget
        self.decompose = decompose
        self.max_subqueries = max_subqueries
        self.literal_two_stage = literal_two_stage
        self.entity_types = entity_types
        self.node_aggregation = node_aggregation
        self.max_workers = max_workers
        self.extraction_temperature = extraction_temperature
        self.decomposition_temperature = decomposition_temperature
        self.answer_temperature = answer_temperature
        self.archive_dir = archive_dir
        self.replay_extractions = replay_extractions

    # -- fitting ---------------------------------------------------------------

    def _check_providers(self) -> None:
        if self.llm is None or self.embedder is None:
            raise ValueError("both llm and embedder must be set")

    @property
    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(self.n, self.k, self.t, self.graph_token_budget)

    def fit(self, X: str | Path | Iterable[Document], y=None) -> "TemporalGraphRAG":
        """Build the graph from a corpus directory or a list of documents."""
        self._check_providers()
        documents = ingest(X) if isinstance(X, (str, Path)) else list(X)
        chunks = chunk_corpus(documents, self.chunk_size, self.chunk_overlap)
        return self.fit_chunks(chunks)

    def fit_chunks(self, chunks: Sequence[Chunk]) -> "TemporalGraphRAG":
        self._check_providers()
        self.retrieval_config  # validates n/k/t/budget before any model call
        chunks = sorted(chunks, key=lambda c: (c.time_label, c.doc_id, c.seq))

        def run(c: Chunk) -> ExtractionOutput:
            return extract_chunk(
                c,
                self.llm,
                self.entity_types,
                DEFAULT_DELIMITERS,
                self.archive_dir,
                self.replay_extractions,
                self.extraction_temperature,
            )

        with ThreadPoolExecutor(max_workers=max(1, self.max_workers)) as pool:
            outputs = list(pool.map(run, chunks))

        graph = TemporalGraph()
        malformed = 0
        for out in outputs:
            kgraph.upsert(graph, out)
            malformed += len(out.malformed_lines)
        self.graph_ = graph
        self.chunks_ = ChunkStore.from_chunks(chunks)
        self.time_labels_ = graph.time_labels()
        self.indexes_ = {}
        for label in self.time_labels_:
            self.indexes_[label.raw] = build_index(subgraph_at(graph, label), self.embedder, self.node_aggregation)
        self.indexes_[ALL_TIMES.raw] = build_index(full_view(graph), self.embedder, self.node_aggregation)
        self.extraction_report_ = {
            "chunks": len(chunks),
            "malformed_lines": malformed,
            "graph_warnings": len(graph.warnings),
        }
        return self

    # -- persistence -------------------------------------------------------------

    def save(self, workdir: str | Path) -> None:
        check_is_fitted(self, "graph_")
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        save_chunks(sorted(self.chunks_, key=lambda c: (c.time_label, c.doc_id, c.seq)), workdir / "chunks.jsonl")
        kgraph.save(self.graph_, workdir / "graph.json")
        for index in self.indexes_.values():
            save_index(index, workdir / "index")

    def load(self, workdir: str | Path) -> "TemporalGraphRAG":
        workdir = Path(workdir)
        if not (workdir / "graph.json").is_file():
            raise StateError(f"no built graph in {workdir}; run index first")
        self.graph_ = kgraph.load(workdir / "graph.json")
        chunks_path = workdir / "chunks.jsonl"
        self.chunks_ = ChunkStore.from_chunks(load_chunks(chunks_path) if chunks_path.is_file() else [])
        self.time_labels_ = self.graph_.time_labels()
        self.indexes_ = {}
        for label in [*self.time_labels_, ALL_TIMES]:
            if (workdir / "index" / f"{label.raw}.manifest.json").is_file():
                self.indexes_[label.raw] = load_index(workdir / "index", label)
        self.extraction_report_ = {}
        return self

    # -- inference ---------------------------------------------------------------

    def decompose_query(self, query: str, use_tqd: bool | None = None) -> DecompositionResult:
        use_tqd = self.decompose if use_tqd is None else use_tqd
        if not use_tqd:
            return single_query(query)
        return decompose(query, self.llm, self.max_subqueries, self.decomposition_temperature)

    def retrieve(self, query: str, use_tqd: bool | None = None) -> list[tuple[SubQuery, list[RetrievalResult]]]:
        check_is_fitted(self, "graph_")
        plan = self.decompose_query(query, use_tqd)
        cache = IndexCache(self.graph_, self.embedder, self.indexes_, self.node_aggregation)
        return [
            (sub, retrieve(sub, self.graph_, cache, self.embedder, self.retrieval_config, self.chunks_))
            for sub in plan.subqueries
        ]

    def answer(self, query: str, use_tqd: bool | None = None, trace: dict | None = None) -> FinalAnswer:
        """Decompose, retrieve per sub-query, answer each, then synthesize.

        When ``trace`` is a dict it is filled with the decomposition, every
        retrieval pass, and the assembled contexts.
        """
        check_is_fitted(self, "graph_")
        started = time.perf_counter()
        plan = self.decompose_query(query, use_tqd)
        cache = IndexCache(self.graph_, self.embedder, self.indexes_, self.node_aggregation)
        cfg = self.retrieval_config
        subs: list[SubAnswer] = []
        passes = []
        contexts = []
        for sub in plan.subqueries:
            results = retrieve(sub, self.graph_, cache, self.embedder, cfg, self.chunks_)
            ctx = assemble_context(results, cfg.graph_token_budget)
            sa = answer_subquery(sub, ctx, self.llm, self.answer_temperature)
            sa.time_labels = [r.time_label for r in results if r.time_label is not None]
            subs.append(sa)
            for r in results:
                entry = r.to_trace()
                entry["sub_question"] = sub.text
                entry["sub_time"] = sub.time
                passes.append(entry)
            contexts.append(
                {
                    "sub_question": sub.text,
                    "time_labels": sa.time_labels,
                    "order": ["knowledge", "relations", "sources"],
                    "knowledge_rows": ctx.knowledge_rows,
                    "relation_rows": ctx.relation_rows,
                    "total_graph_tokens": ctx.total_graph_tokens,
                    "digest": ctx.digest(),
                    "context": ctx.render(),
                    "warnings": ctx.warnings,
                }
            )
        final = finalize(query, subs, self.llm, self.literal_two_stage, self.answer_temperature)
        if trace is not None:
            trace.update(
                {
                    "query": query,
                    "decomposition": {
                        "subqueries": [
                            {"time": s.time, "text": s.text, "origin": s.origin} for s in plan.subqueries
                        ],
                        "raw_llm_output": plan.raw_llm_output,
                        "notes": plan.notes,
                    },
                    "passes": passes,
                    "contexts": contexts,
                    "sub_answers": [s.to_record() for s in subs],
                    "final": final.answer,
                    "elapsed_s": round(time.perf_counter() - started, 4),
                }
            )
        return final

    def predict(self, X) -> list[str]:
        queries = check_queries(X)
        return [self.answer(q).answer for q in queries]
