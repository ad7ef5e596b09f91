"""Entity/relation extraction: prompt rendering and the delimiter-grammar parser."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import prompts
from .corpus import Chunk, TimeLabel
from .errors import ProviderError, StageError
from .providers.base import ChatProvider, ChatRequest

logger = logging.getLogger(__name__)

DEFAULT_ENTITY_TYPES = ("organization", "person", "location", "event", "product", "technology")

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+")
_SPACES = re.compile(r"\s+")


@dataclass(frozen=True)
class DelimiterSet:
    tuple_delimiter: str = "<|>"
    record_delimiter: str = "##"
    completion_delimiter: str = "<|COMPLETE|>"

    def __post_init__(self):
        tokens = (self.tuple_delimiter, self.record_delimiter, self.completion_delimiter)
        if not all(tokens):
            raise ValueError("delimiters must be non-empty")
        if len(set(tokens)) != 3:
            raise ValueError("delimiters must be distinct")


DEFAULT_DELIMITERS = DelimiterSet()


def normalize_name(name: str) -> str:
    return _SPACES.sub(" ", name.strip()).upper()


@dataclass(frozen=True)
class EntityRecord:
    name: str
    entity_type: str
    description: str
    source_chunk: str = ""
    time_label: TimeLabel | None = None


@dataclass(frozen=True)
class RelationRecord:
    source_name: str
    target_name: str
    description: str
    strength: float
    source_chunk: str = ""
    time_label: TimeLabel | None = None
    dangling: bool = False


@dataclass
class ExtractionOutput:
    entities: list[EntityRecord] = field(default_factory=list)
    relations: list[RelationRecord] = field(default_factory=list)
    malformed_lines: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def stamped(self, chunk_id: str, time_label: TimeLabel) -> "ExtractionOutput":
        return ExtractionOutput(
            entities=[replace(e, source_chunk=chunk_id, time_label=time_label) for e in self.entities],
            relations=[replace(r, source_chunk=chunk_id, time_label=time_label) for r in self.relations],
            malformed_lines=list(self.malformed_lines),
            warnings=list(self.warnings),
        )


def render_extraction_prompt(
    chunk: Chunk | str,
    entity_types: Sequence[str] = DEFAULT_ENTITY_TYPES,
    delimiters: DelimiterSet = DEFAULT_DELIMITERS,
    max_tokens: int = 4096,
    temperature: float = 0.0,
) -> ChatRequest:
    if not entity_types:
        raise ValueError("entity_types must not be empty")
    text = chunk.text if isinstance(chunk, Chunk) else chunk
    user = prompts.render_named(
        "extraction",
        entity_types=", ".join(entity_types),
        tuple_delimiter=delimiters.tuple_delimiter,
        record_delimiter=delimiters.record_delimiter,
        completion_delimiter=delimiters.completion_delimiter,
        input_text=text,
    )
    return ChatRequest("", user, max_tokens=max_tokens, temperature=temperature)


def _unquote(field_text: str) -> str:
    s = field_text.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1].strip()
    return s


def _split_records(raw: str, delimiters: DelimiterSet) -> list[str]:
    records: list[str] = []
    for piece in raw.split(delimiters.record_delimiter):
        current: list[str] | None = None
        for line in piece.splitlines():
            stripped = _BULLET.sub("", line, count=1).strip()
            if not stripped:
                continue
            if stripped.startswith("("):
                if current is not None:
                    records.append(" ".join(current))
                current = [stripped]
            elif current is not None:
                current.append(stripped)
            else:
                records.append(stripped)
        if current is not None:
            records.append(" ".join(current))
    return records


def parse_extraction(
    raw: str,
    delimiters: DelimiterSet = DEFAULT_DELIMITERS,
    entity_types: Sequence[str] | None = None,
) -> ExtractionOutput:
    """Parse extraction-grammar text. Total: anything unparseable lands in
    ``malformed_lines`` with a reason code."""
    out = ExtractionOutput()
    if delimiters.completion_delimiter in raw:
        raw = raw.split(delimiters.completion_delimiter, 1)[0]
    allowed = {t.strip().lower() for t in entity_types} if entity_types else None

    for record in _split_records(raw, delimiters):
        if not record.startswith("("):
            out.malformed_lines.append((record, "not_a_record"))
            continue
        if not record.endswith(")"):
            out.malformed_lines.append((record, "truncated"))
            continue
        fields = [_unquote(f) for f in record[1:-1].split(delimiters.tuple_delimiter)]
        tag = fields[0].lower()
        if tag == "entity":
            if len(fields) != 4:
                out.malformed_lines.append((record, "wrong_arity"))
                continue
            name, etype, desc = normalize_name(fields[1]), fields[2].strip().lower(), fields[3]
            if not name or not desc:
                out.malformed_lines.append((record, "empty_field"))
                continue
            if allowed is not None and etype not in allowed:
                out.warnings.append(f"entity {name!r}: type {etype!r} not configured, using 'other'")
                logger.warning("entity %s has unconfigured type %r; using 'other'", name, etype)
                etype = "other"
            out.entities.append(EntityRecord(name, etype or "other", desc))
        elif tag == "relationship":
            if len(fields) != 5:
                out.malformed_lines.append((record, "wrong_arity"))
                continue
            src, tgt, desc = normalize_name(fields[1]), normalize_name(fields[2]), fields[3]
            try:
                strength = float(fields[4])
            except ValueError:
                out.malformed_lines.append((record, "bad_strength"))
                continue
            if not math.isfinite(strength):
                out.malformed_lines.append((record, "bad_strength"))
                continue
            if not src or not tgt or not desc:
                out.malformed_lines.append((record, "empty_field"))
                continue
            if src == tgt:
                out.malformed_lines.append((record, "self_loop"))
                continue
            out.relations.append(RelationRecord(src, tgt, desc, strength))
        else:
            out.malformed_lines.append((record, "unknown_tag"))

    names = {e.name for e in out.entities}
    out.relations = [
        replace(r, dangling=r.source_name not in names or r.target_name not in names)
        for r in out.relations
    ]
    return out


def serialize_extraction(output: ExtractionOutput, delimiters: DelimiterSet = DEFAULT_DELIMITERS) -> str:
    """Emit ``output`` in the grammar ``parse_extraction`` reads."""
    td = delimiters.tuple_delimiter
    lines = []
    for e in output.entities:
        lines.append(f'("entity"{td}"{e.name}"{td}"{e.entity_type}"{td}"{e.description}")')
    for r in output.relations:
        lines.append(
            f'("relationship"{td}"{r.source_name}"{td}"{r.target_name}"{td}"{r.description}"{td}{r.strength!r})'
        )
    body = f"{delimiters.record_delimiter}\n".join(lines)
    return f"{body}\n{delimiters.completion_delimiter}" if body else delimiters.completion_delimiter


def extract_chunk(
    chunk: Chunk,
    llm: ChatProvider,
    entity_types: Sequence[str] = DEFAULT_ENTITY_TYPES,
    delimiters: DelimiterSet = DEFAULT_DELIMITERS,
    archive_dir: str | Path | None = None,
    replay: bool = False,
    temperature: float = 0.0,
) -> ExtractionOutput:
    """Render, call the model, parse, and stamp records with the chunk's id and period.

    With ``archive_dir`` the raw completion is written to
    ``<archive_dir>/<chunk_id>.txt``; with ``replay`` an existing archive is
    parsed instead of calling the model.
    """
    archive = Path(archive_dir) / f"{chunk.chunk_id}.txt" if archive_dir else None
    if replay and archive is not None and archive.is_file():
        raw = archive.read_text(encoding="utf-8")
    else:
        req = render_extraction_prompt(chunk, entity_types, delimiters, temperature=temperature)
        try:
            raw = llm.chat(req)
        except ProviderError as exc:
            raise StageError("extract", exc, chunk.chunk_id) from exc
        if archive is not None:
            archive.parent.mkdir(parents=True, exist_ok=True)
            archive.write_text(raw, encoding="utf-8")
    parsed = parse_extraction(raw, delimiters, entity_types)
    return parsed.stamped(chunk.chunk_id, chunk.time_label)
