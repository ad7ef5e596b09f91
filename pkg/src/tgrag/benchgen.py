"""Benchmark construction: chunk summaries, key points, cross-year evolution
chains (TEK), and question-answer generation for four time classes."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import prompts
from .corpus import Chunk, TimeLabel
from .errors import DataError, ExtractionError, ProviderError, StageError
from .providers.base import ChatProvider, ChatRequest, EmbeddingProvider
from .tqd import YEAR_TOKEN, has_year_token
from .vectorindex import cosine

logger = logging.getLogger(__name__)

SINGLE, DUAL, MULTI, NON = "single", "dual", "multi", "non"
TIME_CLASSES = (SINGLE, DUAL, MULTI, NON)


@dataclass
class KeyPoint:
    point_id: str
    time_label: TimeLabel
    text: str
    source_chunk: str = ""
    vector: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_record(self) -> dict:
        return {
            "point_id": self.point_id,
            "time_label": self.time_label.raw,
            "text": self.text,
            "source_chunk": self.source_chunk,
            "vector": None if self.vector is None else [float(x) for x in self.vector],
        }

    @classmethod
    def from_record(cls, r: dict) -> "KeyPoint":
        vec = r.get("vector")
        return cls(
            r["point_id"],
            TimeLabel.parse(r["time_label"]),
            r["text"],
            r.get("source_chunk", ""),
            None if vec is None else np.asarray(vec, dtype=np.float64),
        )


@dataclass
class TEKChain:
    anchor: KeyPoint
    links: list[tuple[KeyPoint, float]] = field(default_factory=list)

    @property
    def points(self) -> list[KeyPoint]:
        """Anchor and links, oldest first."""
        return [p for p, _ in reversed(self.links)] + [self.anchor]


@dataclass
class QAItem:
    qa_id: str
    question: str
    answer: str
    time_class: str
    time_labels: list[TimeLabel]
    evidence: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.time_class not in TIME_CLASSES:
            raise ValueError(f"unknown time class {self.time_class!r}")
        self.time_labels = sorted(set(self.time_labels))
        n = len(self.time_labels)
        ok = {SINGLE: n == 1, DUAL: n == 2, MULTI: n >= 3, NON: n == 0}[self.time_class]
        if not ok:
            raise ValueError(f"{self.time_class} item cannot carry {n} time labels")

    def to_record(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "question": self.question,
            "answer": self.answer,
            "time_class": self.time_class,
            "time_labels": [t.raw for t in self.time_labels],
            "evidence": dict(sorted(self.evidence.items())),
        }

    @classmethod
    def from_record(cls, r: dict) -> "QAItem":
        return cls(
            r["qa_id"],
            r["question"],
            r["answer"],
            r["time_class"],
            [TimeLabel.parse(t) for t in r["time_labels"]],
            dict(r.get("evidence", {})),
        )


def make_qa_id(time_class: str, question: str, labels: Iterable[TimeLabel]) -> str:
    key = "\x00".join([time_class, question, *sorted(t.raw for t in labels)])
    return "qa-" + hashlib.sha1(key.encode("utf-8")).hexdigest()[:12]


def _chat(llm: ChatProvider, stage: str, user: str, temperature: float = 0.0, max_tokens: int = 2048) -> str:
    try:
        return llm.chat(ChatRequest("", user, max_tokens, temperature))
    except ProviderError as exc:
        raise StageError(stage, exc) from exc


# -- summaries and key points ------------------------------------------------------

_FORMATTING = re.compile(r"[{}\[\]`#*]|^\s*[-•]\s", re.MULTILINE)


def summarize_chunk(chunk: Chunk, llm: ChatProvider) -> str:
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id} is empty")
    summary = _chat(llm, "summarize", prompts.render_named("summary", text=chunk.text)).strip()
    if _FORMATTING.search(summary):
        logger.warning("summary of %s contains structured formatting", chunk.chunk_id)
    return summary


def _json_candidates(raw: str) -> list[str]:
    out = []
    start, end = raw.find("{"), raw.rfind("}")
    if start != -1 and end > start:
        out.append(raw[start:end + 1])
    lines = [ln.strip().rstrip(",") for ln in raw.splitlines() if ln.strip().startswith('"')]
    if lines:
        out.append("{" + ",".join(lines) + "}")
    return out


def parse_keypoints(raw: str) -> list[tuple[str, str]]:
    """``(point-id, text)`` pairs from a JSON object answer.

    The object is located by its outermost braces; an answer listing bare
    ``"point-i": "..."`` lines without braces is also accepted.
    """
    for candidate in _json_candidates(raw):
        try:
            data = json.loads(candidate)
        except ValueError:
            continue
        if isinstance(data, dict):
            return [(str(k), str(v).strip()) for k, v in data.items() if str(v).strip()]
    raise ExtractionError("no JSON object of key points found", raw)


def extract_keypoints(
    summary: str,
    time_label: TimeLabel,
    llm: ChatProvider,
    source_chunk: str = "",
) -> list[KeyPoint]:
    if not summary.strip():
        raise ValueError("summary must be non-empty")
    raw = _chat(llm, "keypoints", prompts.render_named("keypoints", summary=summary, year=time_label.raw))
    return [
        KeyPoint(f"{time_label.raw}:{source_chunk}:{pid}", time_label, text, source_chunk)
        for pid, text in parse_keypoints(raw)
    ]


def embed_keypoints(points: Sequence[KeyPoint], em: EmbeddingProvider) -> None:
    todo = [p for p in points if p.vector is None]
    if todo:
        for p, v in zip(todo, em.embed([p.text for p in todo])):
            p.vector = np.asarray(v, dtype=np.float64)


# -- evolution chains ------------------------------------------------------------


def link_tek(points_by_year: Mapping[TimeLabel, Sequence[KeyPoint]], threshold: float = 0.75) -> list[TEKChain]:
    """Chain each key point of the latest year to its most similar point in
    every earlier year, keeping links whose cosine reaches ``threshold``."""
    years = sorted(y for y, pts in points_by_year.items() if pts)
    if len(points_by_year) < 2:
        raise ValueError("linking needs at least two years")
    if len(years) < 2:
        return []
    for pts in points_by_year.values():
        for p in pts:
            if p.vector is None:
                raise ValueError(f"key point {p.point_id} has no embedding")
    latest, earlier = years[-1], list(reversed(years[:-1]))
    chains = []
    for anchor in sorted(points_by_year[latest], key=lambda p: p.point_id):
        chain = TEKChain(anchor)
        for year in earlier:
            best, best_sim = None, -2.0
            for cand in sorted(points_by_year[year], key=lambda p: p.point_id):
                sim = cosine(anchor.vector, cand.vector)
                if sim > best_sim:
                    best, best_sim = cand, sim
            if best is not None and best_sim >= threshold:
                chain.links.append((best, best_sim))
        if chain.links:
            chains.append(chain)
    return chains


def tek_sweep(points_by_year: Mapping[TimeLabel, Sequence[KeyPoint]], thresholds: Sequence[float]) -> dict[float, int]:
    return {th: len(link_tek(points_by_year, th)) for th in thresholds}


# -- question generation ------------------------------------------------------------


def parse_json_objects(raw: str) -> list[dict]:
    """Every JSON object in ``raw``: a whole-document array or object, or
    objects embedded in prose."""
    text = raw.strip()
    fenced = re.findall(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fenced:
        text = "\n".join(fenced)
    try:
        data = json.loads(text)
        if isinstance(data, dict):
            return [data]
        if isinstance(data, list):
            return [d for d in data if isinstance(d, dict)]
    except ValueError:
        pass
    decoder = json.JSONDecoder()
    found = []
    pos = 0
    while True:
        start = text.find("{", pos)
        if start == -1:
            break
        try:
            obj, end = decoder.raw_decode(text, start)
        except ValueError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            found.append(obj)
        pos = end
    return found


def _field(obj: Mapping, name: str) -> str:
    for key, value in obj.items():
        if key.strip().lower() == name.lower():
            return str(value).strip()
    return ""


def _evidence_for(obj: Mapping, year: str) -> str:
    for key, value in obj.items():
        if key.lower().startswith("original text") and year in key:
            return str(value).strip()
    return ""


def generate_qa(
    source: Chunk | TEKChain,
    time_class: str,
    llm: ChatProvider,
    texts: Mapping[str, str] | None = None,
    counts: Counter | None = None,
) -> list[QAItem]:
    """Generate question-answer items of ``time_class`` from a chunk
    (single/non) or an evolution chain (dual/multi).

    Single-class questions without a year and non-class questions with one
    are dropped and tallied in ``counts``.
    """
    counts = counts if counts is not None else Counter()
    texts = texts or {}
    if time_class in (SINGLE, NON):
        if not isinstance(source, Chunk):
            raise ValueError(f"{time_class} questions are generated from a chunk")
        raw = _chat(llm, "generate_qa", prompts.render_named(f"qa_{time_class}", text=source.text))
        objects = parse_json_objects(raw)
        if not objects:
            raise ExtractionError("no JSON question objects in response", raw)
        items = []
        for obj in objects:
            q, a = _field(obj, "Question"), _field(obj, "Answer")
            if not q or not a:
                counts["rejected_incomplete"] += 1
                continue
            if time_class == SINGLE and not has_year_token(q):
                counts["rejected_single_no_time"] += 1
                continue
            if time_class == NON and has_year_token(q):
                counts["rejected_non_has_time"] += 1
                continue
            labels = [source.time_label] if time_class == SINGLE else []
            evidence = {source.time_label.raw: _field(obj, "OriginalText") or source.text}
            items.append(QAItem(make_qa_id(time_class, q, labels), q, a, time_class, labels, evidence))
        counts[time_class] += len(items)
        return items

    if time_class not in (DUAL, MULTI):
        raise ValueError(f"unknown time class {time_class!r}")
    if not isinstance(source, TEKChain):
        raise ValueError(f"{time_class} questions are generated from an evolution chain")
    points = source.points
    if time_class == DUAL:
        if len(points) < 2:
            raise ValueError("dual-time questions need a chain with at least one link")
        points = [source.links[0][0], source.anchor]
    elif len(points) < 3:
        raise ValueError("multi-time questions need at least three time points")

    inputs = ";\n".join(
        f"keypoint in {p.time_label.raw} Annual Report:{p.text}, Corresponding original text: {texts.get(p.source_chunk, '')}"
        for p in points
    )
    years = [p.time_label.raw for p in points]
    if time_class == DUAL:
        user = prompts.render_named("qa_dual", year1=years[0], year2=years[1], inputs=inputs)
    else:
        original_fields = ", ".join(
            f'"Original text from {y} report": "<original text from {y} report>"' for y in years
        )
        user = prompts.render_named(
            "qa_multi", count=len(years), years=", ".join(years), original_fields=original_fields, inputs=inputs
        )
    raw = _chat(llm, "generate_qa", user)
    objects = parse_json_objects(raw)
    if not objects:
        raise ExtractionError("no JSON question object in response", raw)
    obj = objects[0]
    q, a = _field(obj, "Question"), _field(obj, "Answer")
    if not q or not a:
        counts["rejected_incomplete"] += 1
        return []
    labels = [p.time_label for p in points]
    evidence = {p.time_label.raw: _evidence_for(obj, p.time_label.raw) or texts.get(p.source_chunk, "") for p in points}
    counts[time_class] += 1
    return [QAItem(make_qa_id(time_class, q, labels), q, a, time_class, labels, evidence)]


# -- dataset files -----------------------------------------------------------------


def dumps_dataset(items: Iterable[QAItem]) -> str:
    return "".join(json.dumps(it.to_record(), ensure_ascii=False, sort_keys=True) + "\n" for it in items)


def save_dataset(items: Iterable[QAItem], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_dataset(items), encoding="utf-8")


def load_dataset(path: str | Path) -> list[QAItem]:
    items = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            items.append(QAItem.from_record(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad QA record: {exc}") from exc
    return items


def write_review(items: Iterable[QAItem], path: str | Path) -> None:
    """Markdown file putting each item next to its evidence for manual checking."""
    out = ["# QA review", ""]
    for it in items:
        labels = ", ".join(t.raw for t in it.time_labels) or "none"
        out += [f"## {it.qa_id} ({it.time_class}; {labels})", "", f"**Q:** {it.question}", "", f"**A:** {it.answer}", ""]
        for year, text in sorted(it.evidence.items()):
            quoted = "\n".join("> " + ln for ln in text.splitlines()) or ">"
            out += [f"Evidence {year}:", "", quoted, ""]
    Path(path).write_text("\n".join(out), encoding="utf-8")


# -- pipeline --------------------------------------------------------------------


@dataclass
class DatasetBuild:
    items: list[QAItem]
    keypoints: list[KeyPoint]
    chains: list[TEKChain]
    counts: Counter
    failures: list[str]


def build_dataset(
    chunks: Sequence[Chunk],
    llm: ChatProvider,
    em: EmbeddingProvider,
    classes: Sequence[str] = TIME_CLASSES,
    threshold: float = 0.75,
    max_per_class: int | None = None,
) -> DatasetBuild:
    """Run summaries -> key points -> linking -> generation over ``chunks``.

    Provider failures on individual chunks or chains are recorded in
    ``failures`` and the build continues.
    """
    for c in classes:
        if c not in TIME_CLASSES:
            raise ValueError(f"unknown time class {c!r}")
    counts: Counter = Counter()
    failures: list[str] = []
    texts = {c.chunk_id: c.text for c in chunks}
    keypoints: list[KeyPoint] = []
    chains: list[TEKChain] = []

    if DUAL in classes or MULTI in classes:
        for c in chunks:
            try:
                summary = summarize_chunk(c, llm)
                keypoints.extend(extract_keypoints(summary, c.time_label, llm, c.chunk_id))
            except (StageError, ExtractionError) as exc:
                failures.append(f"{c.chunk_id}: {exc}")
        embed_keypoints(keypoints, em)
        by_year: dict[TimeLabel, list[KeyPoint]] = {}
        for p in keypoints:
            by_year.setdefault(p.time_label, []).append(p)
        if len(by_year) >= 2:
            chains = link_tek(by_year, threshold)
        if not chains:
            logger.warning("no evolution chains at threshold %.3f; no dual/multi items", threshold)

    items: list[QAItem] = []

    def room(cls: str) -> bool:
        return max_per_class is None or sum(1 for it in items if it.time_class == cls) < max_per_class

    for cls in classes:
        if cls in (SINGLE, NON):
            sources: list = list(chunks)
        elif cls == DUAL:
            sources = list(chains)
        else:
            sources = [ch for ch in chains if len(ch.links) >= 2]
        for src in sources:
            if not room(cls):
                break
            try:
                new = generate_qa(src, cls, llm, texts, counts)
            except (StageError, ExtractionError) as exc:
                failures.append(f"{cls}: {exc}")
                continue
            for it in new:
                if room(cls):
                    items.append(it)
    return DatasetBuild(items, keypoints, chains, counts, failures)
