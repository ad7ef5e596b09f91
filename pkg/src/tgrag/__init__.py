"""Temporal GraphRAG: question answering over a time-stamped knowledge graph."""

from .config import EngineConfig, dump_config, load_config
from .corpus import ALL_TIMES, Chunk, ChunkStore, Document, TimeLabel, chunk, chunk_corpus, ingest
from .estimator import TemporalGraphRAG, check_queries
from .evalharness import EvalReport, EvalVerdict, evaluate, judge_majority, judge_once, majority_verdict
from .extract import DelimiterSet, parse_extraction, render_extraction_prompt
from .generate import ABSTENTION, ContextBundle, FinalAnswer, assemble_context, finalize
from .kgraph import TemporalGraph, full_view, one_hop, subgraph_at, upsert
from .retriever import RetrievalConfig, RetrievalResult, retrieve
from .tqd import SubQuery, decompose
from .vectorindex import SubgraphIndex, build_index

__version__ = "0.1.0"

__all__ = [
    "ABSTENTION",
    "ALL_TIMES",
    "Chunk",
    "ChunkStore",
    "ContextBundle",
    "DelimiterSet",
    "Document",
    "EngineConfig",
    "EvalReport",
    "EvalVerdict",
    "FinalAnswer",
    "RetrievalConfig",
    "RetrievalResult",
    "SubQuery",
    "SubgraphIndex",
    "TemporalGraph",
    "TemporalGraphRAG",
    "TimeLabel",
    "assemble_context",
    "build_index",
    "check_queries",
    "chunk",
    "chunk_corpus",
    "decompose",
    "dump_config",
    "evaluate",
    "finalize",
    "full_view",
    "ingest",
    "judge_majority",
    "judge_once",
    "load_config",
    "majority_verdict",
    "one_hop",
    "parse_extraction",
    "render_extraction_prompt",
    "retrieve",
    "subgraph_at",
    "upsert",
]
