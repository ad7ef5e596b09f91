from collections import Counter

import numpy as np
import pytest

from conftest import CORPUS, FIXTURES, MOCK_SCRIPT, T
from tgrag.benchgen import (
    DUAL,
    MULTI,
    NON,
    SINGLE,
    KeyPoint,
    QAItem,
    TEKChain,
    build_dataset,
    extract_keypoints,
    generate_qa,
    link_tek,
    load_dataset,
    make_qa_id,
    parse_json_objects,
    parse_keypoints,
    summarize_chunk,
    tek_sweep,
    write_review,
)
from tgrag.corpus import Chunk, chunk_corpus, ingest
from tgrag.errors import DataError, ExtractionError
from tgrag.providers import MockChatProvider, TokenHashEmbedder


def _kp(pid, year, vec, chunk=""):
    return KeyPoint(pid, T(year), f"text {pid}", chunk, np.asarray(vec, dtype=float))


def test_golden_keypoints_without_braces():
    raw = (FIXTURES / "golden" / "keypoints_example.txt").read_text()
    points = parse_keypoints(raw)
    assert len(points) == 8
    assert points[0][0] == "point-1" and "Corporate Responsibility Report in 2012" in points[0][1]


def test_keypoints_edge_cases():
    assert parse_keypoints("{}") == []
    assert parse_keypoints('Sure! Here they are: {"point-1": "A."} Hope it helps.') == [("point-1", "A.")]
    with pytest.raises(ExtractionError):
        parse_keypoints("nothing here")


def test_extract_keypoints_ids():
    llm = MockChatProvider({"extract key points": '{"point-1": "X grew.", "point-2": " "}'})
    [p] = extract_keypoints("X grew in 2020.", T(2020), llm, "c7")
    assert p.point_id == "2020:c7:point-1" and p.time_label == T(2020)
    with pytest.raises(ValueError):
        extract_keypoints(" ", T(2020), llm)


def test_summarize_rejects_empty_chunk():
    with pytest.raises(ValueError):
        summarize_chunk(Chunk("c", "2020/a", T(2020), 0, " ", 0), MockChatProvider({}))


def test_link_tek_argmax_threshold_and_ties():
    pts = {
        T(2021): [_kp("b", 2021, [1, 0]), _kp("a", 2021, [1, 0]), _kp("c", 2021, [0, 1])],
        T(2023): [_kp("z", 2023, [1, 0.1]), _kp("y", 2023, [-1, 0])],
    }
    chains = link_tek(pts, 0.75)
    assert len(chains) == 1
    assert chains[0].anchor.point_id == "z"
    assert chains[0].links[0][0].point_id == "a"  # tie goes to the smaller id
    assert link_tek(pts, 0.999) == []
    assert tek_sweep(pts, [0.5, 0.999]) == {0.5: 1, 0.999: 0}
    with pytest.raises(ValueError):
        link_tek({T(2021): pts[T(2021)]})
    with pytest.raises(ValueError):
        link_tek({T(2021): [KeyPoint("u", T(2021), "u")], T(2022): [_kp("v", 2022, [1, 0])]})


def test_chain_points_oldest_first():
    chain = TEKChain(_kp("c", 2023, [1, 0]), [(_kp("b", 2020, [1, 0]), 1.0), (_kp("a", 2017, [1, 0]), 0.9)])
    assert [p.time_label.raw for p in chain.points] == ["2017", "2020", "2023"]


def test_parse_json_objects():
    assert parse_json_objects('```json\n[{"Question": "a"}, 3]\n```') == [{"Question": "a"}]
    assert parse_json_objects('Here: {"a": 1} and {"b": 2} {broken') == [{"a": 1}, {"b": 2}]


def test_generate_single_and_non_lint():
    chunk = Chunk("c1", "2022/a", T(2022), 0, "Audi text.", 2)
    raw = '[{"Question": "What in 2022?", "Answer": "x"}, {"Question": "What ever?", "Answer": "y"}]'
    counts = Counter()
    single = generate_qa(chunk, SINGLE, MockChatProvider({".": raw}), counts=counts)
    assert [it.question for it in single] == ["What in 2022?"]
    assert single[0].time_labels == [T(2022)] and counts["rejected_single_no_time"] == 1
    non = generate_qa(chunk, NON, MockChatProvider({".": raw}), counts=counts)
    assert [it.question for it in non] == ["What ever?"] and counts["rejected_non_has_time"] == 1
    with pytest.raises(ExtractionError):
        generate_qa(chunk, SINGLE, MockChatProvider({".": "no json"}))


def test_generate_dual_2017_2023():
    chain = TEKChain(_kp("n", 2023, [1, 0], "c23"), [(_kp("o", 2017, [1, 0], "c17"), 1.0)])
    raw = (
        '{"Question": "How did X change from 2017 to 2023?", "Answer": "It grew.",'
        ' "Original text from 2017 report": "old", "Original text from 2023 report": "new"}'
    )
    llm = MockChatProvider({"2017.*2023": raw})
    [item] = generate_qa(chain, DUAL, llm, texts={"c17": "t17", "c23": "t23"})
    assert item.time_class == DUAL and [t.raw for t in item.time_labels] == ["2017", "2023"]
    assert item.evidence == {"2017": "old", "2023": "new"}


def test_multi_needs_three_points():
    chain = TEKChain(_kp("n", 2023, [1, 0]), [(_kp("o", 2017, [1, 0]), 1.0)])
    with pytest.raises(ValueError):
        generate_qa(chain, MULTI, MockChatProvider({}))


def test_qa_item_validation():
    with pytest.raises(ValueError):
        QAItem("id", "q", "a", SINGLE, [])
    with pytest.raises(ValueError):
        QAItem("id", "q", "a", "weekly", [])
    item = QAItem("id", "q", "a", DUAL, [T(2023), T(2022), T(2022)])
    assert item.time_labels == [T(2022), T(2023)]
    assert make_qa_id(SINGLE, "q", [T(2022)]) == make_qa_id(SINGLE, "q", [T(2022)])


def test_load_dataset_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"qa_id": "x"}\n')
    with pytest.raises(DataError, match=":1:"):
        load_dataset(bad)
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing.jsonl")


def test_build_dataset_fixture(tmp_path):
    chunks = chunk_corpus(ingest(CORPUS), 2000)
    build = build_dataset(chunks, MockChatProvider.from_file(MOCK_SCRIPT), TokenHashEmbedder(), [SINGLE, DUAL, NON])
    by_class = Counter(it.time_class for it in build.items)
    assert by_class == {SINGLE: 1, DUAL: 1, NON: 1}
    # chunks the fixture script does not cover fail individually without stopping the build
    assert all("no scripted response" in f for f in build.failures)
    capped = build_dataset(chunks, MockChatProvider.from_file(MOCK_SCRIPT), TokenHashEmbedder(), [DUAL], 1.01)
    assert capped.items == [] and capped.chains == []
    write_review(build.items, tmp_path / "review.md")
    assert "Evidence 2022" in (tmp_path / "review.md").read_text()
    with pytest.raises(ValueError):
        build_dataset(chunks, MockChatProvider({}), TokenHashEmbedder(), ["weekly"])
