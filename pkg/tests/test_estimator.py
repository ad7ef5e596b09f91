import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import CORPUS, MOCK_SCRIPT
from tgrag.errors import StateError
from tgrag.estimator import TemporalGraphRAG, check_queries
from tgrag.providers import MockChatProvider, TokenHashEmbedder


def _engine(**kw):
    return TemporalGraphRAG(llm=MockChatProvider.from_file(MOCK_SCRIPT), embedder=TokenHashEmbedder(), **kw)


@pytest.fixture(scope="module")
def fitted():
    return _engine().fit(CORPUS)


def test_params_and_clone():
    engine = _engine(n=7, k=3)
    params = engine.get_params()
    assert params["n"] == 7 and params["k"] == 3 and params["graph_token_budget"] == 1600
    twin = clone(engine)
    assert twin.get_params()["n"] == 7 and twin.llm is engine.llm
    assert not hasattr(twin, "graph_")
    assert engine.set_params(t=2).t == 2


def test_unfitted_and_missing_providers(tmp_path):
    with pytest.raises(NotFittedError):
        _engine().predict("Who led AUDI in 2022?")
    with pytest.raises(ValueError):
        TemporalGraphRAG().fit(CORPUS)
    with pytest.raises(StateError):
        _engine().load(tmp_path)
    with pytest.raises(ValueError):
        _engine(n=0).fit(CORPUS)


def test_fit_report(fitted):
    assert [t.raw for t in fitted.time_labels_] == ["2022", "2023"]
    assert fitted.extraction_report_["chunks"] == 6
    assert set(fitted.indexes_) == {"2022", "2023", "ALL"}


def test_predict_decomposed_and_trace(fitted):
    trace = {}
    final = fitted.answer("How many units did Audi deliver in 2022 and 2023?", trace=trace)
    assert "1.8 million" in final.answer and "1.9 million" in final.answer
    assert [p["time_label"] for p in trace["passes"]] == ["2022", "2023"]
    assert trace["contexts"][0]["order"] == ["knowledge", "relations", "sources"]
    assert fitted.predict(["How many units did Audi deliver in 2022?"]) == ["Audi delivered 1.8 million units in 2022."]


def test_save_load_predicts_same(fitted, tmp_path):
    fitted.save(tmp_path)
    loaded = _engine().load(tmp_path)
    q = "Who led the Board of Management of AUDI AG in 2023?"
    assert loaded.predict(q) == fitted.predict(q)
    assert loaded.graph_ == fitted.graph_


def test_check_queries():
    assert check_queries("x") == ["x"]
    with pytest.raises(ValueError):
        check_queries(["ok", "  "])
