"""Corpus ingestion, time labels, tokenization and fixed-size chunking."""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .errors import ConfigError, CorpusError, DataError

logger = logging.getLogger(__name__)

_YEAR_RE = re.compile(r"^\d{4}$")


@functools.total_ordering
@dataclass(frozen=True)
class TimeLabel:
    """A corpus period, ordered by ``ordinal``."""

    raw: str
    ordinal: int

    @classmethod
    def parse(cls, value: "str | int | TimeLabel") -> "TimeLabel":
        if isinstance(value, TimeLabel):
            return value
        text = str(value).strip()
        if text == ALL_TIMES.raw:
            return ALL_TIMES
        if not _YEAR_RE.match(text):
            raise ValueError(f"not a year-like time label: {value!r}")
        return cls(text, int(text))

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, TimeLabel):
            return NotImplemented
        return (self.ordinal, self.raw) < (other.ordinal, other.raw)

    def __str__(self) -> str:
        return self.raw


# Sentinel for views spanning every period; sorts after all real labels.
ALL_TIMES = TimeLabel("ALL", 10**9)


class Tokenizer(Protocol):
    def spans(self, text: str) -> list[tuple[int, int]]: ...


class RegexTokenizer:
    """Words and individual punctuation marks are tokens; whitespace is not."""

    def __init__(self, pattern: str = r"\w+|[^\w\s]"):
        self.pattern = re.compile(pattern)

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self.pattern.finditer(text)]

    def count(self, text: str) -> int:
        return sum(1 for _ in self.pattern.finditer(text))


DEFAULT_TOKENIZER = RegexTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    if tokenizer is None or tokenizer is DEFAULT_TOKENIZER:
        return DEFAULT_TOKENIZER.count(text)
    return len(tokenizer.spans(text))


@dataclass(frozen=True)
class Document:
    doc_id: str
    time_label: TimeLabel
    text: str
    source_path: str = ""


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    time_label: TimeLabel
    seq: int
    text: str
    token_count: int

    def to_record(self) -> dict:
        record = asdict(self)
        record["time_label"] = self.time_label.raw
        return record

    @classmethod
    def from_record(cls, record: dict) -> "Chunk":
        return cls(
            chunk_id=record["chunk_id"],
            doc_id=record["doc_id"],
            time_label=TimeLabel.parse(record["time_label"]),
            seq=int(record["seq"]),
            text=record["text"],
            token_count=int(record["token_count"]),
        )


@dataclass
class CorpusLayout:
    """Maps ``<root>/<time_label>/<doc>.<ext>`` files onto documents."""

    extensions: tuple[str, ...] = (".txt", ".md")
    label_parser: Callable[[str], TimeLabel] = TimeLabel.parse
    encoding: str = "utf-8"


@dataclass
class IngestIssue:
    path: str
    reason: str


def chunk_id_for(doc_id: str, seq: int) -> str:
    digest = hashlib.sha1(f"{doc_id}\x00{seq}".encode("utf-8")).hexdigest()
    return f"c{digest[:16]}"


def ingest(
    root: str | Path,
    layout: CorpusLayout | None = None,
    errors: list[IngestIssue] | None = None,
) -> list[Document]:
    """Read every document under ``root``.

    Subdirectory names are parsed as time labels; a name that does not parse
    is a hard error. Files that cannot be read or are blank are recorded in
    ``errors`` (when given) and skipped.
    """
    layout = layout or CorpusLayout()
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root is not a directory: {root}")

    documents: list[Document] = []
    for entry in sorted(root.iterdir()):
        if entry.name.startswith("."):
            continue
        if entry.is_file():
            if entry.suffix.lower() in layout.extensions:
                raise CorpusError(f"file outside any time-label directory: {entry}")
            continue
        try:
            label = layout.label_parser(entry.name)
        except ValueError as exc:
            raise CorpusError(f"cannot parse time label from directory {entry.name!r}: {exc}") from exc

        for path in sorted(entry.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in layout.extensions:
                continue
            rel = path.relative_to(root).with_suffix("").as_posix()
            try:
                text = path.read_text(encoding=layout.encoding)
            except (OSError, UnicodeDecodeError) as exc:
                logger.warning("skipping unreadable file %s: %s", path, exc)
                if errors is not None:
                    errors.append(IngestIssue(str(path), f"unreadable: {exc}"))
                continue
            if not text.strip():
                if errors is not None:
                    errors.append(IngestIssue(str(path), "empty document"))
                continue
            documents.append(Document(rel, label, text, str(path)))

    documents.sort(key=lambda d: (d.time_label, d.doc_id))
    return documents


def chunk(
    doc: Document,
    size: int = 1000,
    overlap: int = 0,
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    """Split ``doc`` into windows of at most ``size`` tokens.

    Consecutive windows share ``overlap`` tokens. Chunk text is a slice of the
    original document running from the first token of the window to the start
    of the next window's first unshared token (or end of text), so with
    ``overlap=0`` the chunk texts concatenate back to the document.
    """
    if size <= 0 or overlap < 0 or size <= overlap:
        raise ConfigError(f"chunk size must exceed overlap >= 0 (size={size}, overlap={overlap})")
    if not doc.text.strip():
        raise ValueError(f"document {doc.doc_id} has no text")
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    spans = tokenizer.spans(doc.text)
    n = len(spans)
    step = size - overlap

    windows: list[tuple[int, int]] = []
    start = 0
    while True:
        end = min(start + size, n)
        windows.append((start, end))
        if end >= n:
            break
        start += step

    chunks = []
    for seq, (s, e) in enumerate(windows):
        lo = 0 if s == 0 else spans[s][0]
        hi = len(doc.text) if e >= n else spans[e][0]
        text = doc.text[lo:hi]
        chunks.append(
            Chunk(
                chunk_id=chunk_id_for(doc.doc_id, seq),
                doc_id=doc.doc_id,
                time_label=doc.time_label,
                seq=seq,
                text=text,
                token_count=e - s,
            )
        )
    return chunks


def reconstruct(chunks: list[Chunk], overlap: int = 0, tokenizer: Tokenizer | None = None) -> str:
    """Join a document's chunks, dropping the ``overlap`` leading tokens of each follower."""
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    parts = []
    for c in sorted(chunks, key=lambda c: c.seq):
        if c.seq == 0 or overlap == 0:
            parts.append(c.text)
            continue
        spans = tokenizer.spans(c.text)
        parts.append(c.text[spans[overlap][0]:] if overlap < len(spans) else "")
    return "".join(parts)


def chunk_corpus(
    documents: Iterable[Document],
    size: int = 1000,
    overlap: int = 0,
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    out: list[Chunk] = []
    for doc in documents:
        out.extend(chunk(doc, size, overlap, tokenizer))
    return out


def save_chunks(chunks: Iterable[Chunk], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def load_chunks(path: str | Path) -> list[Chunk]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Chunk.from_record(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad chunk record: {exc}") from exc
    return out


@dataclass
class ChunkStore:
    """Chunks addressable by id, with per-period listing."""

    chunks: dict[str, Chunk] = field(default_factory=dict)

    @classmethod
    def from_chunks(cls, chunks: Iterable[Chunk]) -> "ChunkStore":
        return cls({c.chunk_id: c for c in chunks})

    def __getitem__(self, chunk_id: str) -> Chunk:
        return self.chunks[chunk_id]

    def __contains__(self, chunk_id: object) -> bool:
        return chunk_id in self.chunks

    def __len__(self) -> int:
        return len(self.chunks)

    def __iter__(self):
        return iter(self.chunks.values())

    def at(self, label: TimeLabel) -> list[Chunk]:
        if label == ALL_TIMES:
            return sorted(self.chunks.values(), key=lambda c: c.chunk_id)
        return sorted((c for c in self.chunks.values() if c.time_label == label), key=lambda c: c.chunk_id)
