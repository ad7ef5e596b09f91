import numpy as np
import pytest

from conftest import T, add_records
from tgrag.corpus import Chunk, ChunkStore
from tgrag.errors import StageError
from tgrag.kgraph import TemporalGraph, subgraph_at
from tgrag.providers import FixedEmbedder
from tgrag.retriever import (
    ChunkRetriever,
    IndexCache,
    RetrievalConfig,
    extract_source_texts,
    retrieve,
    retrieve_candidates,
    retrieve_knowledge,
    select_relations,
)
from tgrag.tqd import SubQuery
from tgrag.vectorindex import build_index

VECS = {
    "q": [1, 0, 0],
    "a1": [1, 0, 0],
    "a2": [0, 1, 0],
    "b1": [0.9, 0.1, 0],
    "c1": [0, 0, 1],
    "a3": [0.5, 0.5, 0],
}


def _world():
    g = TemporalGraph()
    add_records(g, 2020, "k1", [("A", "person", "a1"), ("A", "person", "a2"), ("B", "person", "b1")],
                [("A", "B", "ab", 2.0)])
    add_records(g, 2020, "k2", [("C", "person", "c1")], [("B", "C", "bc", 9.0)])
    add_records(g, 2021, "k3", [("A", "person", "a3")])
    chunks = ChunkStore.from_chunks([
        Chunk("k1", "2020/x", T(2020), 0, "text one", 2),
        Chunk("k2", "2020/x", T(2020), 1, "text two", 2),
        Chunk("k3", "2021/x", T(2021), 0, "text three", 2),
    ])
    return g, chunks, FixedEmbedder(VECS)


def test_config_validation():
    with pytest.raises(ValueError):
        RetrievalConfig(n=0)


def test_candidates_and_global_knowledge_top_k():
    g, _, em = _world()
    idx = build_index(subgraph_at(g, "2020"), em)
    cands = retrieve_candidates("q", idx, em, n=2)
    assert [c for c, _ in cands] == ["B", "A"]
    hits, owners = retrieve_knowledge(["A", "B"], idx, np.array([1.0, 0, 0]), k=2)
    # the pool is ranked globally, not per candidate
    assert [h.text for h in hits] == ["a1", "b1"]
    assert owners == ["A", "B"]
    with pytest.raises(KeyError):
        retrieve_knowledge(["Z"], idx, np.array([1.0, 0, 0]), k=2)


def test_relations_ordering():
    g, _, _ = _world()
    rels = select_relations(["A", "B"], subgraph_at(g, "2020"))
    assert [(r.source, r.target, r.valid_endpoints) for r in rels] == [("A", "B", 2), ("B", "C", 1)]


def test_source_texts_connectivity():
    g, chunks, _ = _world()
    hits = extract_source_texts(["A"], subgraph_at(g, "2020"), g, chunks, t=5)
    # scope is A plus its neighbour B; k1 mentions both, k2 neither
    assert [(h.chunk.chunk_id, h.score) for h in hits] == [("k1", 2)]
    assert extract_source_texts([], subgraph_at(g, "2020"), g, chunks, t=5) == []


def test_retrieve_timed_untimed_and_missing_period():
    g, chunks, em = _world()
    cache = IndexCache(g, em)
    cfg = RetrievalConfig(n=2, k=2, t=3)
    [r2020] = retrieve(SubQuery("q", "2020"), g, cache, em, cfg, chunks)
    assert r2020.time_label == "2020" and all(h.time_label == T(2020) for h in r2020.valid_knowledge)
    [ranged] = [retrieve(SubQuery("q", "2019-2021"), g, cache, em, cfg, chunks)]
    assert [r.time_label for r in ranged] == ["2020", "2021"]
    [untimed] = retrieve(SubQuery("q"), g, cache, em, cfg, chunks)
    assert untimed.time_label is None and {h.time_label for h in untimed.valid_knowledge} <= {T(2020), T(2021)}
    [missing] = retrieve(SubQuery("q", "1999"), g, cache, em, cfg, chunks)
    assert missing.is_empty() and missing.notes
    assert set(cache.indexes) == {"2020", "2021", "ALL"}
    assert r2020.to_trace()["candidates"][0]["entity"] == "B"


def test_retrieve_bad_time_string():
    g, chunks, em = _world()
    with pytest.raises(StageError):
        retrieve(SubQuery("q", "recently"), g, IndexCache(g, em), em, RetrievalConfig(), chunks)


def test_chunk_retriever():
    chunks = ChunkStore.from_chunks([Chunk("x", "2020/x", T(2020), 0, "a1", 1), Chunk("y", "2020/x", T(2020), 1, "c1", 1)])
    res = ChunkRetriever(chunks, FixedEmbedder(VECS), t=1).search("q")
    assert [s.chunk.chunk_id for s in res.valid_texts] == ["x"]
