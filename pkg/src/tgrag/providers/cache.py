from __future__ import annotations

import hashlib
import re
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import EmbeddingProvider, SharedProvider, check_texts


class CachedEmbedder(SharedProvider):
    """Disk cache in front of an embedding provider.

    Entries are keyed by ``(model_name, sha256(text))`` and stored one
    ``.npy`` file per text under ``cache_dir/<model>/``.
    """

    def __init__(self, inner: EmbeddingProvider, cache_dir: str | Path):
        self.inner = inner
        self.model_name = inner.model_name
        slug = re.sub(r"[^A-Za-z0-9._-]+", "_", inner.model_name) or "model"
        self.root = Path(cache_dir) / slug
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.inner.dim

    def _path(self, text: str) -> Path:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return self.root / digest[:2] / f"{digest}.npy"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        check_texts(texts)
        out: list[np.ndarray | None] = [None] * len(texts)
        todo: dict[str, list[int]] = {}
        for i, text in enumerate(texts):
            path = self._path(text)
            if path.exists():
                try:
                    out[i] = np.load(path)
                    with self._lock:
                        self.hits += 1
                    continue
                except (OSError, ValueError):
                    pass
            todo.setdefault(text, []).append(i)
        if todo:
            unique = list(todo)
            vectors = self.inner.embed(unique)
            with self._lock:
                self.misses += len(unique)
            for text, vec in zip(unique, vectors):
                path = self._path(text)
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".{threading.get_ident()}.tmp")
                with tmp.open("wb") as fh:
                    np.save(fh, np.asarray(vec, dtype=np.float64))
                tmp.replace(path)
                for i in todo[text]:
                    out[i] = vec
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack(out)
