import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgrag.corpus import (
    ALL_TIMES,
    ChunkStore,
    Document,
    IngestIssue,
    TimeLabel,
    chunk,
    chunk_corpus,
    count_tokens,
    ingest,
    load_chunks,
    reconstruct,
    save_chunks,
)
from tgrag.errors import ConfigError, CorpusError


def _doc(text, label="2020"):
    return Document("2020/a", TimeLabel.parse(label), text, "")


def test_time_label_parse_and_order():
    assert TimeLabel.parse("2017") < TimeLabel.parse("2023") < ALL_TIMES
    assert TimeLabel.parse(2019).raw == "2019"
    assert TimeLabel.parse("ALL") is ALL_TIMES
    with pytest.raises(ValueError):
        TimeLabel.parse("FY19")


def test_count_tokens():
    assert count_tokens("hello world") == 2
    assert count_tokens("1.8 million units.") == 6
    assert count_tokens("") == 0


def test_ingest_fixture(corpus_dir):
    docs = ingest(corpus_dir)
    assert len(docs) == 6
    assert [d.time_label.raw for d in docs] == ["2022"] * 3 + ["2023"] * 3
    assert docs[0].doc_id == "2022/deliveries"


def test_ingest_rejects_bad_layout(tmp_path):
    (tmp_path / "misc").mkdir()
    (tmp_path / "misc" / "a.txt").write_text("x")
    with pytest.raises(CorpusError, match="misc"):
        ingest(tmp_path)


def test_ingest_rejects_root_level_file(tmp_path):
    (tmp_path / "loose.txt").write_text("text")
    with pytest.raises(CorpusError):
        ingest(tmp_path)


def test_ingest_records_empty_files(tmp_path):
    (tmp_path / "2020").mkdir()
    (tmp_path / "2020" / "empty.txt").write_text("   \n")
    (tmp_path / "2020" / "full.txt").write_text("Some text.")
    issues: list[IngestIssue] = []
    docs = ingest(tmp_path, errors=issues)
    assert [d.doc_id for d in docs] == ["2020/full"]
    assert len(issues) == 1 and "empty" in issues[0].reason


def test_ingest_missing_root(tmp_path):
    with pytest.raises(CorpusError, match="nope"):
        ingest(tmp_path / "nope")


def test_chunk_sizes_and_ids():
    doc = _doc(" ".join(f"w{i}" for i in range(25)))
    chunks = chunk(doc, size=10)
    assert [c.token_count for c in chunks] == [10, 10, 5]
    assert len({c.chunk_id for c in chunks}) == 3
    assert all(c.chunk_id.startswith("c") and len(c.chunk_id) == 17 for c in chunks)
    assert chunk(doc, size=10)[1].chunk_id == chunks[1].chunk_id


def test_chunk_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        chunk(_doc("a b c"), size=5, overlap=5)
    with pytest.raises(ValueError):
        chunk(_doc("   "), size=5)


@settings(max_examples=60, deadline=None)
@given(
    words=st.lists(st.text(alphabet="abc .,!\n", min_size=1, max_size=6), min_size=1, max_size=80),
    size=st.integers(2, 15),
    data=st.data(),
)
def test_chunks_reconstruct_document(words, size, data):
    text = " ".join(words)
    if not text.strip() or count_tokens(text) == 0:
        return
    overlap = data.draw(st.integers(0, size - 1))
    chunks = chunk(_doc(text), size, overlap)
    assert all(c.token_count <= size for c in chunks)
    assert reconstruct(chunks, overlap) == text


def test_chunk_store_and_jsonl_round_trip(tmp_path, corpus_dir):
    chunks = chunk_corpus(ingest(corpus_dir), 1000)
    save_chunks(chunks, tmp_path / "c.jsonl")
    assert load_chunks(tmp_path / "c.jsonl") == chunks
    store = ChunkStore.from_chunks(chunks)
    assert len(store.at(TimeLabel.parse("2022"))) == 3
    assert len(store.at(ALL_TIMES)) == 6
    assert chunks[0].chunk_id in store
