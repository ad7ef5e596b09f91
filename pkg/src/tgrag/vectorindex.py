"""Exact cosine search over node and knowledge embeddings of a temporal subgraph."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import TimeLabel
from .errors import IndexLoadError, ProviderError, StageError
from .kgraph import TemporalSubgraph
from .providers.base import EmbeddingProvider

logger = logging.getLogger(__name__)

NODE = "node"
KNOWLEDGE = "knowledge"
SCORE_DECIMALS = 12


@dataclass
class IndexedItem:
    item_id: str
    kind: str
    owner_entity: str
    time_label: TimeLabel
    vector: np.ndarray
    payload_text: str


def _norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = _norm(a), _norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def top_m(items: Sequence[IndexedItem], q: Sequence[float], m: int) -> list[tuple[str, float]]:
    """The ``m`` items most cosine-similar to ``q``; ties (equal to
    ``SCORE_DECIMALS`` places) go to the smaller item_id."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not items:
        return []
    q = np.asarray(q, dtype=np.float64)
    qn = _norm(q)
    if qn == 0:
        raise ValueError("query vector is zero")
    matrix = np.vstack([it.vector for it in items]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    norms[norms == 0] = 1.0
    # rounding makes mathematically equal scores tie exactly despite float noise
    scores = np.round(np.clip(matrix @ (q / qn) / norms, -1.0, 1.0), SCORE_DECIMALS)
    order = sorted(range(len(items)), key=lambda i: (-scores[i], items[i].item_id))
    return [(items[i].item_id, float(scores[i])) for i in order[:m]]


def _item_id(prefix: str, *parts: str) -> str:
    digest = hashlib.sha1("\x00".join(parts).encode("utf-8")).hexdigest()[:12]
    return f"{prefix}:{parts[0]}:{digest}"


@dataclass
class SubgraphIndex:
    time_label: TimeLabel
    dim: int
    node_items: list[IndexedItem] = field(default_factory=list)
    knowledge_items: dict[str, list[IndexedItem]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def items(self) -> list[IndexedItem]:
        out = list(self.node_items)
        for name in sorted(self.knowledge_items):
            out.extend(self.knowledge_items[name])
        return out

    def node(self, name: str) -> IndexedItem | None:
        for item in self.node_items:
            if item.owner_entity == name:
                return item
        return None

    def __len__(self) -> int:
        return len(self.node_items)


def build_index(
    sub: TemporalSubgraph,
    em: EmbeddingProvider,
    aggregation: str = "mean",
    batch_size: int = 256,
) -> SubgraphIndex:
    """Embed every knowledge unit of ``sub`` and derive one vector per entity.

    With ``aggregation="mean"`` a node vector is the L2-normalized mean of its
    knowledge vectors; a zero mean falls back to the first knowledge vector
    and is reported in ``warnings``. ``"concat"`` embeds the entity's joined
    knowledge text instead. Vectors are stored as float32.
    """
    if aggregation not in ("mean", "concat"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    names = sorted(n for n, e in sub.entities.items() if e.knowledge)
    texts: list[str] = []
    owners: list[tuple[str, int]] = []
    for name in names:
        for i, unit in enumerate(sub.entities[name].knowledge):
            texts.append(unit.text)
            owners.append((name, i))

    vectors = _embed(em, texts, batch_size)
    dim = vectors.shape[1] if len(vectors) else em.dim
    index = SubgraphIndex(sub.time_label, dim)

    grouped: dict[str, list[np.ndarray]] = {}
    for (name, i), vec in zip(owners, vectors):
        unit = sub.entities[name].knowledge[i]
        item = IndexedItem(
            _item_id("k", name, unit.time_label.raw, unit.text),
            KNOWLEDGE,
            name,
            unit.time_label,
            vec.astype(np.float32),
            unit.text,
        )
        index.knowledge_items.setdefault(name, []).append(item)
        grouped.setdefault(name, []).append(vec)

    if aggregation == "concat" and names:
        joined = ["\n".join(u.text for u in sub.entities[n].knowledge) for n in names]
        node_vectors = list(_embed(em, joined, batch_size))
    else:
        node_vectors = []
        for name in names:
            mean = np.mean(grouped[name], axis=0)
            norm = _norm(mean)
            if norm <= 1e-12:
                msg = f"entity {name}: knowledge vectors cancel out; using first knowledge vector"
                index.warnings.append(msg)
                logger.warning(msg)
                first = grouped[name][0]
                node_vectors.append(first / _norm(first))
            else:
                node_vectors.append(mean / norm)

    for name, vec in zip(names, node_vectors):
        index.node_items.append(
            IndexedItem(f"n:{name}", NODE, name, sub.time_label, np.asarray(vec, dtype=np.float32), name)
        )
    return index


def _embed(em: EmbeddingProvider, texts: list[str], batch_size: int) -> np.ndarray:
    chunks = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        try:
            chunks.append(np.asarray(em.embed(batch), dtype=np.float64))
        except (ProviderError, ValueError, KeyError) as exc:
            preview = batch[0][:60] if batch else ""
            raise StageError("build_index", exc, f"batch at {start} starting {preview!r}") from exc
    if not chunks:
        return np.zeros((0, em.dim or 0))
    return np.vstack(chunks)


# -- persistence ---------------------------------------------------------------


def _file_stem(label: TimeLabel) -> str:
    return label.raw


def save_index(index: SubgraphIndex, directory: str | Path) -> tuple[Path, Path]:
    """Write ``<label>.vec`` (little-endian float32 rows) and ``<label>.manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = index.items()
    vec_path = directory / f"{_file_stem(index.time_label)}.vec"
    manifest_path = directory / f"{_file_stem(index.time_label)}.manifest.json"
    matrix = (
        np.vstack([it.vector for it in items]).astype("<f4")
        if items
        else np.zeros((0, index.dim), dtype="<f4")
    )
    vec_path.write_bytes(matrix.tobytes())
    manifest = {
        "time_label": index.time_label.raw,
        "dim": index.dim,
        "count": len(items),
        "dtype": "<f4",
        "warnings": index.warnings,
        "items": [
            {
                "item_id": it.item_id,
                "kind": it.kind,
                "owner_entity": it.owner_entity,
                "time_label": it.time_label.raw,
                "payload_text": it.payload_text,
                "offset": row * index.dim * 4,
            }
            for row, it in enumerate(items)
        ],
    }
    manifest_path.write_text(
        json.dumps(manifest, ensure_ascii=False, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return vec_path, manifest_path


def load_index(directory: str | Path, label: TimeLabel | str) -> SubgraphIndex:
    label = TimeLabel.parse(label)
    directory = Path(directory)
    try:
        manifest = json.loads((directory / f"{_file_stem(label)}.manifest.json").read_text(encoding="utf-8"))
        raw = (directory / f"{_file_stem(label)}.vec").read_bytes()
    except (OSError, ValueError) as exc:
        raise IndexLoadError(f"cannot read index for {label.raw}: {exc}") from exc
    dim, count = int(manifest["dim"]), int(manifest["count"])
    if len(raw) != dim * count * 4:
        raise IndexLoadError(f"index {label.raw}: expected {dim * count * 4} bytes, found {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim) if count else np.zeros((0, dim), "<f4")
    index = SubgraphIndex(label, dim, warnings=list(manifest.get("warnings", [])))
    for row, meta in enumerate(manifest["items"]):
        item = IndexedItem(
            meta["item_id"],
            meta["kind"],
            meta["owner_entity"],
            TimeLabel.parse(meta["time_label"]),
            matrix[row].astype(np.float32),
            meta["payload_text"],
        )
        if item.kind == NODE:
            index.node_items.append(item)
        else:
            index.knowledge_items.setdefault(item.owner_entity, []).append(item)
    return index
