import pytest

from conftest import T
from tgrag.corpus import Chunk
from tgrag.errors import StageError, TransportError
from tgrag.generate import (
    ABSTENTION,
    ContextBundle,
    SubAnswer,
    answer_subquery,
    assemble_context,
    finalize,
    is_abstention,
    render_qa_dict,
)
from tgrag.kgraph import KnowledgeUnit
from tgrag.providers import MockChatProvider
from tgrag.retriever import KnowledgeHit, RelationHit, RetrievalResult, SourceHit
from tgrag.tqd import DECOMPOSED, ORIGINAL, SubQuery


def _result():
    r = RetrievalResult("q", "2022")
    r.valid_knowledge = [
        KnowledgeHit("AUDI", T(2022), "Delivered 1.8 million | units.", 0.9, "k1"),
        KnowledgeHit("PLANT", T(2022), "Largest site.", 0.5, "k2"),
    ]
    unit = KnowledgeUnit("Runs the plant.", T(2022), {"c1"})
    r.valid_relations = [RelationHit("AUDI", "PLANT", [unit], 5.0, 2)]
    r.valid_texts = [SourceHit(Chunk("c1", "2022/a", T(2022), 0, "Source text here.", 3), 2)]
    return r


def test_assemble_orders_sections_and_escapes_pipes():
    ctx = assemble_context(_result())
    text = ctx.render()
    assert text.index("-----Knowledge-----") < text.index("-----Relations-----") < text.index("-----Sources-----")
    assert "1.8 million / units." in text
    assert ctx.knowledge_rows == 2 and ctx.relation_rows == 1
    assert "Source text here." in ctx.sources_section


def test_duplicate_relations_and_sources_across_passes():
    ctx = assemble_context([_result(), _result()])
    assert ctx.relation_rows == 1 and ctx.sources_section.count("Source text here.") == 1
    assert ctx.knowledge_rows == 4


def test_budget_truncates_suffix_and_warns():
    full = assemble_context(_result())
    small = assemble_context(_result(), budget=full.total_graph_tokens - 1)
    assert small.total_graph_tokens < full.total_graph_tokens
    assert full.render().startswith(small.knowledge_section)
    tiny = assemble_context(_result(), budget=3)
    assert tiny.knowledge_section == "" and tiny.warnings
    assert tiny.sources_section  # sources are never charged
    with pytest.raises(ValueError):
        assemble_context(_result(), budget=0)


def test_empty_context_abstains_without_call():
    llm = MockChatProvider({})
    sa = answer_subquery(SubQuery("q"), ContextBundle(), llm)
    assert sa.abstained and sa.answer == ABSTENTION and llm.call_count == 0


def test_answer_subquery_calls_model():
    llm = MockChatProvider({"Question: q": "  an answer  "})
    sa = answer_subquery(SubQuery("q"), assemble_context(_result()), llm)
    assert sa.answer == "an answer" and not sa.abstained


def test_answer_failure_is_stage_error():
    def boom(req):
        raise TransportError("down")

    with pytest.raises(StageError):
        answer_subquery(SubQuery("q"), assemble_context(_result()), MockChatProvider({".": boom}))


def test_is_abstention():
    assert is_abstention("Sorry: I’m sorry I don't  know the answer.")
    assert not is_abstention("1.8 million")


def test_finalize_short_circuit_and_literal_mode():
    only = [SubAnswer(SubQuery("q", None, ORIGINAL), "direct")]
    llm = MockChatProvider({"final question": "synth"})
    assert finalize("q", only, llm).answer == "direct" and llm.call_count == 0
    assert finalize("q", only, llm, literal_two_stage=True).answer == "synth"
    two = [SubAnswer(SubQuery("a", "2022", DECOMPOSED), "x"), SubAnswer(SubQuery("a", "2023", DECOMPOSED), "y")]
    assert finalize("q", two, llm).answer == "synth"
    with pytest.raises(ValueError):
        finalize("q", [], llm)


def test_qa_dict_disambiguates_repeated_questions():
    subs = [SubAnswer(SubQuery("a", "2022", DECOMPOSED), "x"), SubAnswer(SubQuery("a", "2023", DECOMPOSED), "y")]
    assert '"a (2)": "y"' in render_qa_dict(subs)
