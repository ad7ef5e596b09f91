"""Temporal knowledge graph: entities and relations carrying time-stamped knowledge."""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import ALL_TIMES, TimeLabel
from .errors import GraphLoadError
from .extract import ExtractionOutput

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class KnowledgeUnit:
    """One description of an entity or relation at one period.

    ``source_chunks`` grows when the same ``(text, time_label)`` is extracted
    from another chunk; text and label never change.
    """

    text: str
    time_label: TimeLabel
    source_chunks: set[str] = field(default_factory=set)

    @property
    def key(self) -> tuple[str, TimeLabel]:
        return (self.text, self.time_label)


def _add_unit(units: list[KnowledgeUnit], text: str, label: TimeLabel, chunk_id: str) -> KnowledgeUnit:
    for unit in units:
        if unit.text == text and unit.time_label == label:
            if chunk_id:
                unit.source_chunks.add(chunk_id)
            return unit
    unit = KnowledgeUnit(text, label, {chunk_id} if chunk_id else set())
    units.append(unit)
    return unit


@dataclass
class TemporalEntity:
    name: str
    entity_type: str = ""
    knowledge: list[KnowledgeUnit] = field(default_factory=list)

    @property
    def time_set(self) -> set[TimeLabel]:
        return {k.time_label for k in self.knowledge}


@dataclass
class TemporalRelation:
    source: str
    target: str
    knowledge: list[KnowledgeUnit] = field(default_factory=list)
    strengths: dict[TimeLabel, float] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)

    def strength(self) -> float:
        return max(self.strengths.values()) if self.strengths else 0.0


@dataclass
class TemporalGraph:
    entities: dict[str, TemporalEntity] = field(default_factory=dict)
    relations: dict[tuple[str, str], TemporalRelation] = field(default_factory=dict)
    chunk_index: dict[str, set[str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    def time_labels(self) -> list[TimeLabel]:
        labels = {k.time_label for e in self.entities.values() for k in e.knowledge}
        labels |= {k.time_label for r in self.relations.values() for k in r.knowledge}
        return sorted(labels)

    def knowledge_units(self) -> Iterator[tuple[str, KnowledgeUnit]]:
        """Every unit with an owner tag: entity name or ``"src->tgt"``."""
        for name in sorted(self.entities):
            for unit in self.entities[name].knowledge:
                yield name, unit
        for key in sorted(self.relations):
            for unit in self.relations[key].knowledge:
                yield f"{key[0]}->{key[1]}", unit

    def stats(self) -> dict[str, dict[str, int]]:
        per: dict[str, dict[str, int]] = {}
        for label in self.time_labels():
            sub = subgraph_at(self, label)
            per[label.raw] = {
                "entities": len(sub.entities),
                "relations": len(sub.relations),
                "knowledge": sum(len(e.knowledge) for e in sub.entities.values())
                + sum(len(r.knowledge) for r in sub.relations.values()),
            }
        return per

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TemporalGraph):
            return NotImplemented
        return _to_document(self) == _to_document(other)


def _warn(graph: TemporalGraph, message: str) -> None:
    graph.warnings.append(message)
    logger.warning(message)


def _ensure_entity(graph: TemporalGraph, name: str, entity_type: str) -> TemporalEntity:
    entity = graph.entities.get(name)
    if entity is None:
        entity = TemporalEntity(name, entity_type)
        graph.entities[name] = entity
    elif entity_type and entity.entity_type != entity_type:
        if not entity.entity_type:
            entity.entity_type = entity_type
        else:
            _warn(graph, f"entity {name}: type {entity_type!r} conflicts with {entity.entity_type!r}; keeping first")
    return entity


def upsert(graph: TemporalGraph, out: ExtractionOutput) -> TemporalGraph:
    """Merge extraction records into ``graph`` in place (append-only) and return it.

    Entities merge by normalized name and relations by directed endpoint pair.
    A relation endpoint with no entity record becomes a stub entity.
    """
    for rec in out.entities:
        if rec.time_label is None:
            raise ValueError(f"entity record {rec.name!r} carries no time label")
    for rec in out.relations:
        if rec.time_label is None:
            raise ValueError(f"relation record {rec.source_name}->{rec.target_name} carries no time label")

    for rec in out.entities:
        entity = _ensure_entity(graph, rec.name, rec.entity_type)
        _add_unit(entity.knowledge, rec.description, rec.time_label, rec.source_chunk)
        if rec.source_chunk:
            graph.chunk_index.setdefault(rec.source_chunk, set()).add(rec.name)

    for rec in out.relations:
        for endpoint in (rec.source_name, rec.target_name):
            if endpoint not in graph.entities:
                _warn(graph, f"relation endpoint {endpoint!r} has no entity record; creating stub")
                _ensure_entity(graph, endpoint, "")
        key = (rec.source_name, rec.target_name)
        relation = graph.relations.get(key)
        if relation is None:
            relation = graph.relations[key] = TemporalRelation(*key)
        _add_unit(relation.knowledge, rec.description, rec.time_label, rec.source_chunk)
        prev = relation.strengths.get(rec.time_label)
        relation.strengths[rec.time_label] = rec.strength if prev is None else max(prev, rec.strength)
    return graph


@dataclass
class TemporalSubgraph:
    """A read-only restriction of a graph to one period (or ``ALL_TIMES``).

    Entities and relations are fresh containers holding the graph's own
    ``KnowledgeUnit`` objects, filtered by period.
    """

    time_label: TimeLabel
    entities: dict[str, TemporalEntity]
    relations: dict[tuple[str, str], TemporalRelation]

    @property
    def is_all_times(self) -> bool:
        return self.time_label == ALL_TIMES

    def knowledge_units(self) -> list[KnowledgeUnit]:
        units = [u for name in sorted(self.entities) for u in self.entities[name].knowledge]
        units += [u for key in sorted(self.relations) for u in self.relations[key].knowledge]
        return units

    def neighbors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = defaultdict(set)
        for src, tgt in self.relations:
            adj[src].add(tgt)
            adj[tgt].add(src)
        return adj


def subgraph_at(graph: TemporalGraph, t: TimeLabel | str) -> TemporalSubgraph:
    t = TimeLabel.parse(t)
    if t == ALL_TIMES:
        return full_view(graph)
    entities = {}
    for name, e in graph.entities.items():
        units = [k for k in e.knowledge if k.time_label == t]
        if units:
            entities[name] = TemporalEntity(name, e.entity_type, units)
    relations = {}
    for key, r in graph.relations.items():
        units = [k for k in r.knowledge if k.time_label == t]
        if units:
            strengths = {t: r.strengths[t]} if t in r.strengths else {}
            relations[key] = TemporalRelation(r.source, r.target, units, strengths)
    return TemporalSubgraph(t, entities, relations)


def full_view(graph: TemporalGraph) -> TemporalSubgraph:
    entities = {
        name: TemporalEntity(name, e.entity_type, list(e.knowledge))
        for name, e in graph.entities.items()
        if e.knowledge
    }
    relations = {
        key: TemporalRelation(r.source, r.target, list(r.knowledge), dict(r.strengths))
        for key, r in graph.relations.items()
        if r.knowledge
    }
    return TemporalSubgraph(ALL_TIMES, entities, relations)


def one_hop(subgraph: TemporalSubgraph, names: Iterable[str]) -> set[str]:
    """``names`` plus every subgraph entity sharing a relation with one of them."""
    names = set(names)
    unknown = sorted(n for n in names if n not in subgraph.entities)
    if unknown:
        raise KeyError(f"entity not in subgraph: {unknown[0]}")
    scope = set(names)
    for src, tgt in subgraph.relations:
        if src in names and tgt in subgraph.entities:
            scope.add(tgt)
        if tgt in names and src in subgraph.entities:
            scope.add(src)
    return scope


# -- persistence ---------------------------------------------------------------


def _unit_doc(u: KnowledgeUnit) -> dict:
    return {"text": u.text, "time_label": u.time_label.raw, "source_chunks": sorted(u.source_chunks)}


def _sorted_units(units: list[KnowledgeUnit]) -> list[dict]:
    return [_unit_doc(u) for u in sorted(units, key=lambda u: (u.time_label, u.text))]


def _to_document(graph: TemporalGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "entities": [
            {
                "name": name,
                "entity_type": e.entity_type,
                "knowledge": _sorted_units(e.knowledge),
            }
            for name, e in sorted(graph.entities.items())
        ],
        "relations": [
            {
                "source": r.source,
                "target": r.target,
                "knowledge": _sorted_units(r.knowledge),
                "strengths": {t.raw: s for t, s in sorted(r.strengths.items())},
            }
            for _, r in sorted(graph.relations.items())
        ],
        "chunk_index": {cid: sorted(names) for cid, names in sorted(graph.chunk_index.items())},
    }


def _units_from(docs: list[dict]) -> list[KnowledgeUnit]:
    return [
        KnowledgeUnit(d["text"], TimeLabel.parse(d["time_label"]), set(d["source_chunks"]))
        for d in docs
    ]


def dumps(graph: TemporalGraph) -> str:
    return json.dumps(_to_document(graph), ensure_ascii=False, indent=1, sort_keys=True) + "\n"


def loads(text: str) -> TemporalGraph:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise GraphLoadError(f"corrupt graph file: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphLoadError("corrupt graph file: top level is not an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise GraphLoadError(f"unsupported graph schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        graph = TemporalGraph()
        for e in doc["entities"]:
            graph.entities[e["name"]] = TemporalEntity(e["name"], e["entity_type"], _units_from(e["knowledge"]))
        for r in doc["relations"]:
            graph.relations[(r["source"], r["target"])] = TemporalRelation(
                r["source"],
                r["target"],
                _units_from(r["knowledge"]),
                {TimeLabel.parse(t): float(s) for t, s in r["strengths"].items()},
            )
        graph.chunk_index = {cid: set(names) for cid, names in doc["chunk_index"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphLoadError(f"corrupt graph file: {exc!r}") from exc
    return graph


def save(graph: TemporalGraph, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps(graph), encoding="utf-8")
    os.replace(tmp, path)


def load(path: str | Path) -> TemporalGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GraphLoadError(f"cannot read graph file {path}: {exc}") from exc
    return loads(text)


def check_consistency(graph: TemporalGraph) -> list[str]:
    """Invariant violations (empty when the graph is well formed)."""
    problems = []
    for (src, tgt), r in graph.relations.items():
        for end in (src, tgt):
            if end not in graph.entities:
                problems.append(f"relation {src}->{tgt}: endpoint {end} missing")
        if not r.knowledge:
            problems.append(f"relation {src}->{tgt} has no knowledge")
    derived: dict[str, set[str]] = defaultdict(set)
    for name, e in graph.entities.items():
        seen = set()
        for u in e.knowledge:
            if u.key in seen:
                problems.append(f"entity {name}: duplicate unit {u.key}")
            seen.add(u.key)
            for cid in u.source_chunks:
                derived[cid].add(name)
    actual = {cid: names for cid, names in graph.chunk_index.items() if names}
    if dict(derived) != actual:
        problems.append("chunk_index disagrees with entity source_chunks")
    return problems
