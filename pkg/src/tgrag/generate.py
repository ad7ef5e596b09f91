"""Context assembly under a token budget and the two-stage answer generation."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

from . import prompts
from .corpus import Tokenizer, count_tokens
from .errors import EmptyResponseError, ProviderError, StageError
from .providers.base import ChatProvider, ChatRequest
from .retriever import RetrievalResult
from .tqd import ORIGINAL, SubQuery

logger = logging.getLogger(__name__)

ABSTENTION = "I'm sorry I don't know the answer"

KNOWLEDGE_HEADER = ["-----Knowledge-----", "| entity | time | description |", "| --- | --- | --- |"]
RELATIONS_HEADER = [
    "-----Relations-----",
    "| source | target | time | description |",
    "| --- | --- | --- | --- |",
]
SOURCES_HEADER = "-----Sources-----"


def _cell(text: str) -> str:
    return " ".join(text.split()).replace("|", "/")


@dataclass
class ContextBundle:
    knowledge_section: str = ""
    relations_section: str = ""
    sources_section: str = ""
    total_graph_tokens: int = 0
    knowledge_rows: int = 0
    relation_rows: int = 0
    warnings: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.knowledge_section or self.relations_section or self.sources_section)

    def render(self) -> str:
        parts = [p for p in (self.knowledge_section, self.relations_section, self.sources_section) if p]
        return "\n\n".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()


def _fill(header: list[str], rows: list[str], remaining: int, tokenizer: Tokenizer | None) -> tuple[list[str], int]:
    """Greedy prefix of ``rows`` (with header) fitting in ``remaining`` tokens."""
    if not rows:
        return [], 0
    used = sum(count_tokens(line, tokenizer) for line in header)
    taken: list[str] = []
    for row in rows:
        cost = count_tokens(row, tokenizer)
        if used + cost > remaining:
            break
        taken.append(row)
        used += cost
    if not taken:
        return [], 0
    return header + taken, used


def assemble_context(
    results: RetrievalResult | Sequence[RetrievalResult],
    budget: int = 1600,
    tokenizer: Tokenizer | None = None,
) -> ContextBundle:
    """Serialize retrieval output as Markdown tables, knowledge before relations.

    Rows are taken in rank order and the first row that would overrun
    ``budget`` ends its section, so truncation only ever drops a suffix.
    Source texts go in verbatim and are not charged to the budget.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if isinstance(results, RetrievalResult):
        results = [results]

    k_rows: list[str] = []
    r_rows: list[str] = []
    seen_rel: set[tuple[str, str, str, str]] = set()
    sources: list[str] = []
    seen_chunks: set[str] = set()
    for res in results:
        for hit in res.valid_knowledge:
            k_rows.append(f"| {_cell(hit.entity)} | {hit.time_label.raw} | {_cell(hit.text)} |")
        for rel in res.valid_relations:
            for unit in rel.knowledge:
                key = (rel.source, rel.target, unit.time_label.raw, unit.text)
                if key in seen_rel:
                    continue
                seen_rel.add(key)
                r_rows.append(
                    f"| {_cell(rel.source)} | {_cell(rel.target)} | {unit.time_label.raw} | {_cell(unit.text)} |"
                )
        for src in res.valid_texts:
            if src.chunk.chunk_id not in seen_chunks:
                seen_chunks.add(src.chunk.chunk_id)
                sources.append(src.chunk.text.strip())

    bundle = ContextBundle()
    k_lines, k_used = _fill(KNOWLEDGE_HEADER, k_rows, budget, tokenizer)
    if k_rows and not k_lines:
        bundle.warnings.append(f"budget {budget} too small for the first knowledge row")
        logger.warning(bundle.warnings[-1])
    r_lines, r_used = _fill(RELATIONS_HEADER, r_rows, budget - k_used, tokenizer)
    bundle.knowledge_section = "\n".join(k_lines)
    bundle.relations_section = "\n".join(r_lines)
    bundle.knowledge_rows = max(len(k_lines) - len(KNOWLEDGE_HEADER), 0)
    bundle.relation_rows = max(len(r_lines) - len(RELATIONS_HEADER), 0)
    bundle.total_graph_tokens = count_tokens(bundle.knowledge_section, tokenizer) + count_tokens(
        bundle.relations_section, tokenizer
    )
    if sources:
        bundle.sources_section = SOURCES_HEADER + "\n" + "\n\n".join(sources)
    return bundle


def is_abstention(text: str) -> bool:
    norm = " ".join(text.replace("’", "'").lower().split())
    return ABSTENTION.lower() in norm


@dataclass
class SubAnswer:
    sub: SubQuery
    answer: str
    abstained: bool = False
    context_digest: str = ""
    time_labels: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "time": self.sub.time,
            "question": self.sub.text,
            "answer": self.answer,
            "abstained": self.abstained,
        }


@dataclass
class FinalAnswer:
    query: str
    answer: str
    sub_answers: list[SubAnswer]

    def to_record(self) -> dict:
        return {"query": self.query, "final": self.answer, "subs": [s.to_record() for s in self.sub_answers]}


def answer_subquery(
    sub: SubQuery,
    ctx: ContextBundle,
    llm: ChatProvider,
    temperature: float = 0.2,
    max_tokens: int = 1024,
) -> SubAnswer:
    """Answer one sub-query from its context. An empty context abstains
    without a model call."""
    digest = ctx.digest()
    if ctx.is_empty():
        return SubAnswer(sub, ABSTENTION, True, digest)
    user = prompts.render_named("subanswer", question=sub.text, context_data=ctx.render())
    try:
        text = llm.chat(ChatRequest("", user, max_tokens, temperature))
    except EmptyResponseError:
        return SubAnswer(sub, ABSTENTION, True, digest)
    except ProviderError as exc:
        raise StageError("answer", exc, sub.text) from exc
    text = text.strip()
    return SubAnswer(sub, text, is_abstention(text), digest)


def render_qa_dict(subs: Sequence[SubAnswer]) -> str:
    pairs: dict[str, str] = {}
    for s in subs:
        key = s.sub.text
        n = 2
        while key in pairs:
            key = f"{s.sub.text} ({n})"
            n += 1
        pairs[key] = s.answer
    return json.dumps(pairs, ensure_ascii=False, indent=1)


def finalize(
    query: str,
    subs: Sequence[SubAnswer],
    llm: ChatProvider,
    literal_two_stage: bool = False,
    temperature: float = 0.2,
    max_tokens: int = 1024,
) -> FinalAnswer:
    """Synthesize the final answer from the sub-answers.

    A lone undecomposed sub-query passes through unchanged unless
    ``literal_two_stage`` is set.
    """
    if not subs:
        raise ValueError("finalize needs at least one sub-answer")
    subs = list(subs)
    if len(subs) == 1 and subs[0].sub.origin == ORIGINAL and not literal_two_stage:
        return FinalAnswer(query, subs[0].answer, subs)
    user = prompts.render_named("final_answer", question=query, qa_dict=render_qa_dict(subs))
    try:
        text = llm.chat(ChatRequest("", user, max_tokens, temperature))
    except EmptyResponseError:
        text = ABSTENTION
    except ProviderError as exc:
        raise StageError("finalize", exc, query) from exc
    return FinalAnswer(query, text.strip(), subs)
