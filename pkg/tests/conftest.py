from __future__ import annotations

import random
from pathlib import Path

import pytest

from tgrag.corpus import TimeLabel
from tgrag.extract import EntityRecord, ExtractionOutput, RelationRecord
from tgrag.kgraph import TemporalGraph, upsert

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"
MOCK_SCRIPT = FIXTURES / "mock_script.json"

_acceptance_results: dict[str, str] = {}


def T(year) -> TimeLabel:
    return TimeLabel.parse(str(year))


def add_records(graph, label, chunk_id, entities=(), relations=()):
    """Upsert plain tuples: entities ``(name, type, desc)``, relations
    ``(src, tgt, desc, strength)``."""
    label = T(label)
    out = ExtractionOutput(
        entities=[EntityRecord(n, t, d, chunk_id, label) for n, t, d in entities],
        relations=[RelationRecord(s, t, d, w, chunk_id, label) for s, t, d, w in relations],
    )
    return upsert(graph, out)


def random_graph(rng: random.Random, max_entities: int = 20, max_years: int = 4) -> TemporalGraph:
    years = sorted(rng.sample(range(2015, 2025), rng.randint(1, max_years)))
    names = [f"E{i}" for i in range(rng.randint(1, max_entities))]
    graph = TemporalGraph()
    for c in range(rng.randint(1, 12)):
        year = rng.choice(years)
        ents = [(n, "organization", f"{n} fact {rng.randint(0, 5)} in {year}") for n in rng.sample(names, rng.randint(1, len(names)))]
        rels = []
        for _ in range(rng.randint(0, 6)):
            if len(names) < 2:
                break
            s, t = rng.sample(names, 2)
            rels.append((s, t, f"{s} links {t} ({rng.randint(0, 3)})", float(rng.randint(1, 10))))
        add_records(graph, year, f"c{c:03d}", ents, rels)
    return graph


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture
def mock_script() -> Path:
    return MOCK_SCRIPT


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if "test_acceptance.py" in report.nodeid and name.startswith("test_criterion_"):
            _acceptance_results[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        number, _, label = name[len("test_criterion_"):].partition("_")
        verdict = "PASS" if _acceptance_results[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(number):2d} {verdict}  {label.replace('_', ' ')}")
