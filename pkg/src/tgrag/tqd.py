"""Temporal query decomposition."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable

from . import prompts
from .corpus import TimeLabel
from .errors import DecompositionError, ProviderError, StageError, TimeResolutionError
from .providers.base import ChatProvider, ChatRequest

logger = logging.getLogger(__name__)

SEP = "<SEP>"
ORIGINAL = "original"
DECOMPOSED = "decomposed"
NO_TIME_MARKERS = {"NONE", "NULL", "N/A", "NO", ""}

YEAR_TOKEN = re.compile(r"(?<!\d)(?:19|20)\d{2}(?!\d)")
_GROUP = re.compile(r"\[([^\[\]]*)\]")
_RANGE = re.compile(r"^\s*(\d{4})\s*[-–—~]\s*(\d{4})\s*$")
_SINGLE = re.compile(r"^\s*(\d{4})\s*$")


@dataclass(frozen=True)
class SubQuery:
    """One retrieval unit. ``time`` is the raw time string (a year, a
    ``"A-B"`` range) or ``None`` for questions spanning every period."""

    text: str
    time: str | None = None
    origin: str = ORIGINAL

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("sub-query text must be non-empty")


@dataclass
class DecompositionResult:
    subqueries: list[SubQuery]
    raw_llm_output: str = ""
    malformed: int = 0
    notes: list[str] = field(default_factory=list)


def has_year_token(text: str) -> bool:
    return bool(YEAR_TOKEN.search(text))


def _strip_quotes(s: str) -> str:
    s = s.strip()
    while len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'“”":
        s = s[1:-1].strip()
    if len(s) >= 2 and s[0] == "“" and s[-1] == "”":
        s = s[1:-1].strip()
    return s


def parse_tqd_output(raw: str) -> tuple[list[tuple[str, str]], int]:
    """Bracketed ``[<time><SEP><question>]`` records in ``raw`` and the count
    of bracket groups that did not fit the grammar."""
    records: list[tuple[str, str]] = []
    malformed = 0
    for match in _GROUP.finditer(raw):
        body = match.group(1)
        if SEP not in body:
            malformed += 1
            continue
        time_part, question = body.split(SEP, 1)
        time_part, question = _strip_quotes(time_part), _strip_quotes(question)
        if not question:
            malformed += 1
            continue
        records.append((time_part, question))
    return records, malformed


def resolve_time(time_string: str, available: Iterable[TimeLabel]) -> set[TimeLabel]:
    """Map a year or ``A-B`` range onto the available labels (possibly none)."""
    available = set(available)
    m = _SINGLE.match(time_string)
    if m:
        year = int(m.group(1))
        return {t for t in available if t.ordinal == year}
    m = _RANGE.match(time_string)
    if m:
        lo, hi = sorted((int(m.group(1)), int(m.group(2))))
        return {t for t in available if lo <= t.ordinal <= hi}
    raise TimeResolutionError(time_string)


def render_tqd_prompt(question: str, max_tokens: int = 512, temperature: float = 0.0) -> ChatRequest:
    return ChatRequest("", prompts.render_named("tqd", question=question), max_tokens, temperature)


def decompose(
    q: str,
    llm: ChatProvider,
    max_subqueries: int = 8,
    temperature: float = 0.0,
) -> DecompositionResult:
    """Split ``q`` into single-period sub-queries.

    A question without any year-like token is returned unchanged without a
    model call. Duplicate periods keep the first question. A year-bearing
    question whose model output has no parseable record raises
    ``DecompositionError``.
    """
    if not q.strip():
        raise ValueError("query must be non-empty")
    if not has_year_token(q):
        return DecompositionResult([SubQuery(q, None, ORIGINAL)], notes=["no year-like token; not decomposed"])

    try:
        raw = llm.chat(render_tqd_prompt(q, temperature=temperature))
    except ProviderError as exc:
        raise StageError("decompose", exc) from exc

    records, malformed = parse_tqd_output(raw)
    result = DecompositionResult([], raw, malformed)
    if records and all(t.upper() in NO_TIME_MARKERS for t, _ in records):
        result.subqueries = [SubQuery(q, None, ORIGINAL)]
        result.notes.append("model reported no time constraint")
        return result

    seen: set[str] = set()
    for time_part, question in records:
        if time_part.upper() in NO_TIME_MARKERS:
            result.notes.append(f"dropped untimed record {question!r}")
            continue
        key = re.sub(r"\s+", "", time_part)
        if key in seen:
            result.notes.append(f"duplicate period {time_part}; keeping first question")
            continue
        seen.add(key)
        result.subqueries.append(SubQuery(question, time_part, DECOMPOSED))

    if not result.subqueries:
        raise DecompositionError(f"no sub-queries parsed for {q!r}", raw)
    if len(result.subqueries) > max_subqueries:
        raise DecompositionError(
            f"{len(result.subqueries)} sub-queries exceed the cap of {max_subqueries}", raw
        )
    return result


def single_query(q: str) -> DecompositionResult:
    """Decomposition bypass: the question as one all-periods sub-query."""
    return DecompositionResult([SubQuery(q, None, ORIGINAL)], notes=["decomposition disabled"])
