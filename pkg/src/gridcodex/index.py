"""Exact cosine top-k search over chunk embeddings with durable persistence.

Corpora are regulation-sized, so every query is an exhaustive float32 scan:
results are exact and Recall@k measurements attribute entirely to the
pipeline, never to index approximation. The on-disk format is a manifest
(version, dim, count, checksums) plus fixed-width little-endian float32
vectors and a sidecar id table, so save/load is bit-stable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptIndex, DimMismatch, EmptyIndex, VersionMismatch
from .providers import EmbeddingVector

FORMAT_VERSION = 1

MANIFEST_FILE = "index.manifest"
VECTORS_FILE = "vectors.f32"
IDS_FILE = "ids.tsv"


@dataclass
class IndexEntry:
    chunk_id: str
    vector: EmbeddingVector
    level: int = 0
    kb_id: str = ""


@dataclass
class SearchHit:
    chunk_id: str
    score: float
    level: int


class VectorIndex:
    """Exact cosine index; first upsert fixes the dimensionality."""

    def __init__(self, kb_id: str = ""):
        self.kb_id = kb_id
        self.dim: int | None = None
        self._ids: list[str] = []
        self._levels: list[int] = []
        self._rows: dict[str, int] = {}
        self._vectors: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def chunk_ids(self) -> list[str]:
        return list(self._ids)

    def upsert(self, entries: list[IndexEntry]) -> int:
        for entry in entries:
            vec = entry.vector.values.astype(np.float32)
            if self.dim is None:
                self.dim = int(vec.shape[0])
            elif vec.shape[0] != self.dim:
                raise DimMismatch(
                    f"entry {entry.chunk_id} has dim {vec.shape[0]}, index dim {self.dim}"
                )
            row = self._rows.get(entry.chunk_id)
            if row is None:
                self._rows[entry.chunk_id] = len(self._ids)
                self._ids.append(entry.chunk_id)
                self._levels.append(entry.level)
                self._vectors.append(vec)
            else:
                self._levels[row] = entry.level
                self._vectors[row] = vec
        return len(entries)

    def search(
        self,
        query: EmbeddingVector,
        k: int,
        level_filter: set[int] | None = None,
    ) -> list[SearchHit]:
        if not self._ids:
            raise EmptyIndex(f"index {self.kb_id} is empty")
        if k < 1:
            raise ValueError("k must be >= 1")
        q = query.values.astype(np.float32)
        if q.shape[0] != self.dim:
            raise DimMismatch(f"query dim {q.shape[0]}, index dim {self.dim}")
        matrix = np.stack(self._vectors)
        scores = matrix @ q
        candidates = range(len(self._ids))
        if level_filter is not None:
            candidates = [i for i in candidates if self._levels[i] in level_filter]
        ranked = sorted(candidates, key=lambda i: (-scores[i], self._ids[i]))[:k]
        return [
            SearchHit(chunk_id=self._ids[i], score=float(scores[i]), level=self._levels[i])
            for i in ranked
        ]

    def persist(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if self.dim is None:
            vec_bytes = b""
        else:
            vec_bytes = np.stack(self._vectors).astype("<f4").tobytes() if self._ids else b""
        ids_text = "".join(f"{cid}\t{lvl}\n" for cid, lvl in zip(self._ids, self._levels))
        ids_bytes = ids_text.encode("utf-8")
        manifest = {
            "version": FORMAT_VERSION,
            "kb_id": self.kb_id,
            "dim": self.dim,
            "count": len(self._ids),
            "vectors_sha256": hashlib.sha256(vec_bytes).hexdigest(),
            "ids_sha256": hashlib.sha256(ids_bytes).hexdigest(),
        }
        (directory / VECTORS_FILE).write_bytes(vec_bytes)
        (directory / IDS_FILE).write_bytes(ids_bytes)
        (directory / MANIFEST_FILE).write_text(
            json.dumps(manifest, indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "VectorIndex":
        directory = Path(directory)
        try:
            manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptIndex(f"unreadable manifest in {directory}: {exc}")
        if manifest.get("version") != FORMAT_VERSION:
            raise VersionMismatch(
                f"index format {manifest.get('version')} != {FORMAT_VERSION}"
            )
        vec_bytes = (directory / VECTORS_FILE).read_bytes()
        ids_bytes = (directory / IDS_FILE).read_bytes()
        if hashlib.sha256(vec_bytes).hexdigest() != manifest["vectors_sha256"]:
            raise CorruptIndex(f"vector checksum mismatch in {directory}")
        if hashlib.sha256(ids_bytes).hexdigest() != manifest["ids_sha256"]:
            raise CorruptIndex(f"id table checksum mismatch in {directory}")

        index = cls(kb_id=manifest.get("kb_id", ""))
        index.dim = manifest["dim"]
        count = manifest["count"]
        if count:
            matrix = np.frombuffer(vec_bytes, dtype="<f4").reshape(count, index.dim)
            for line in ids_bytes.decode("utf-8").splitlines():
                cid, lvl = line.split("\t")
                index._rows[cid] = len(index._ids)
                index._ids.append(cid)
                index._levels.append(int(lvl))
            if len(index._ids) != count:
                raise CorruptIndex(f"id count mismatch in {directory}")
            index._vectors = [matrix[i].copy() for i in range(count)]
        return index
