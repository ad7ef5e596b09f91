import pytest

from conftest import T
from tgrag.errors import DecompositionError, StageError, TimeResolutionError, TransportError
from tgrag.providers import MockChatProvider
from tgrag.tqd import (
    DECOMPOSED,
    ORIGINAL,
    decompose,
    has_year_token,
    parse_tqd_output,
    render_tqd_prompt,
    resolve_time,
    single_query,
)


def test_no_year_means_no_call():
    llm = MockChatProvider({})
    res = decompose("Who leads Audi?", llm)
    assert llm.call_count == 0
    assert [(s.text, s.time, s.origin) for s in res.subqueries] == [("Who leads Audi?", None, ORIGINAL)]


def test_year_token_detection():
    assert has_year_token("in 2023?")
    assert not has_year_token("model 12023 or 202")


def test_prompt_contains_question():
    assert "question:How many in 2022?" in render_tqd_prompt("How many in 2022?").user_prompt


def test_decompose_two_years():
    llm = MockChatProvider({"question:Compare": '[2022<SEP>How many in 2022?], ["2023"<SEP>"How many in 2023?"]'})
    res = decompose("Compare deliveries in 2022 and 2023", llm)
    assert [(s.time, s.text, s.origin) for s in res.subqueries] == [
        ("2022", "How many in 2022?", DECOMPOSED),
        ("2023", "How many in 2023?", DECOMPOSED),
    ]


def test_none_marker_keeps_original():
    res = decompose("Since 2020 what happened?", MockChatProvider({".": "[NONE<SEP>Since 2020 what happened?]"}))
    assert res.subqueries[0].origin == ORIGINAL and res.subqueries[0].time is None


def test_duplicates_and_malformed():
    raw = "[2022<SEP>first] [2022<SEP>second] [no separator] [2023<SEP>third]"
    assert parse_tqd_output(raw)[1] == 1
    res = decompose("q 2022 2023", MockChatProvider({".": raw}))
    assert [s.text for s in res.subqueries] == ["first", "third"]
    assert res.malformed == 1 and any("duplicate" in n for n in res.notes)


def test_unparseable_and_cap():
    with pytest.raises(DecompositionError):
        decompose("q 2022", MockChatProvider({".": "I cannot do that"}))
    many = " ".join(f"[{y}<SEP>q{y}]" for y in range(2010, 2020))
    with pytest.raises(DecompositionError, match="cap"):
        decompose("q 2010", MockChatProvider({".": many}))
    assert len(decompose("q 2010", MockChatProvider({".": many}), max_subqueries=10).subqueries) == 10


def test_decomposition_errors_map_to_provider_exit_code():
    assert DecompositionError("x", "raw").exit_code == 5


def test_provider_failure_is_stage_error():
    def boom(req):
        raise TransportError("down")

    with pytest.raises(StageError):
        decompose("q 2022", MockChatProvider({".": boom}))


def test_resolve_time():
    avail = [T(2019), T(2020), T(2022)]
    assert resolve_time("2020", avail) == {T(2020)}
    assert resolve_time("2021", avail) == set()
    assert resolve_time("2022-2019", avail) == {T(2019), T(2020), T(2022)}
    with pytest.raises(TimeResolutionError):
        resolve_time("last year", avail)


def test_single_query():
    assert single_query("x 2020").subqueries[0].time is None
