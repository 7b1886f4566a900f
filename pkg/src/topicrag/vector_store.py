"""Embedded document store with exact cosine top-k search and
topic-metadata filtering.

On disk a store is a directory: manifest.json, docs.jsonl (documents
minus embeddings, sorted by id) and embeddings.f32 (row-major
little-endian float32, one row per docs.jsonl line).
"""

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, FormatVersionMismatch, ManifestMismatch
from .jsonio import canonical_dumps, canonical_pretty

STORE_FORMAT_VERSION = 1
MANIFEST_JSON = "manifest.json"
DOCS_JSONL = "docs.jsonl"
EMBEDDINGS_F32 = "embeddings.f32"


def _check_timestamp(value: str) -> None:
    # ISO-8601 instant; accept a trailing Z for UTC
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"timestamp {value!r} is not ISO-8601") from exc


@dataclass
class Document:
    id: str
    title: str
    text: str
    embedding: np.ndarray
    topic_id: int = -1
    topic_probability: float = 0.0
    source: str = ""
    timestamp: Optional[str] = None
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not 0.0 <= self.topic_probability <= 1.0:
            raise ValueError("topic_probability must be in [0, 1]")
        if self.topic_id < -1:
            raise ValueError("topic_id must be >= -1")
        if self.timestamp is not None:
            _check_timestamp(self.timestamp)
        self.embedding = np.ascontiguousarray(self.embedding, dtype=np.float32)
        if self.embedding.ndim != 1:
            raise ValueError("embedding must be a 1-D vector")


@dataclass(frozen=True)
class SearchHit:
    document: Document
    score: float
    used_fallback: bool = False


class VectorStore:
    """In-memory store of documents with a persistent directory layout.

    Concurrency contract: many readers or one writer. ``upsert_batch``
    validates the whole batch before applying it under the writer lock,
    so a search never observes a partially applied batch.
    """

    def __init__(self, dimension: int, topic_model_fingerprint: str = ""):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.topic_model_fingerprint = topic_model_fingerprint
        self._docs: dict[str, Document] = {}
        self._lock = threading.Lock()
        self._cache: Optional[tuple[list[str], np.ndarray, np.ndarray]] = None

    @property
    def count(self) -> int:
        return len(self._docs)

    def upsert_batch(self, docs) -> int:
        """Insert or overwrite documents by id; returns the store count.

        The whole batch is validated first: one bad dimension rejects
        the batch and leaves the store unchanged.
        """
        docs = list(docs)
        for doc in docs:
            if doc.embedding.shape[0] != self.dimension:
                raise DimensionMismatch(
                    f"document {doc.id!r} has dimension {doc.embedding.shape[0]}, "
                    f"store expects {self.dimension}"
                )
        with self._lock:
            for doc in docs:
                self._docs[doc.id] = doc
            self._cache = None
            return len(self._docs)

    def get(self, doc_id: str) -> Optional[Document]:
        return self._docs.get(doc_id)

    def documents(self) -> list[Document]:
        """All documents, sorted by id."""
        with self._lock:
            return [self._docs[i] for i in sorted(self._docs)]

    def _matrix(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        with self._lock:
            if self._cache is None:
                ids = sorted(self._docs)
                if ids:
                    matrix = np.stack([self._docs[i].embedding for i in ids]).astype(np.float64)
                    norms = np.linalg.norm(matrix, axis=1)
                else:
                    matrix = np.zeros((0, self.dimension), dtype=np.float64)
                    norms = np.zeros(0, dtype=np.float64)
                self._cache = (ids, matrix, norms)
            return self._cache

    def search(
        self, query_vec, k: int, topic_filter: Optional[int] = None
    ) -> list[SearchHit]:
        """Exact cosine top-k, ordered by descending score then ascending id.

        With a topic filter, candidates are restricted to that topic id
        before scoring; if the filtered candidate set is empty or smaller
        than k the search falls back to the unfiltered corpus and every
        returned hit is marked used_fallback=True.
        """
        query = np.asarray(query_vec, dtype=np.float64)
        if query.ndim != 1 or query.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"query has shape {query.shape}, store expects ({self.dimension},)"
            )
        if k < 1:
            raise ValueError("k must be positive")
        qnorm = float(np.linalg.norm(query))
        if qnorm == 0.0:
            raise ValueError("query vector is zero")

        ids, matrix, norms = self._matrix()
        if not ids:
            return []

        candidate_idx = np.arange(len(ids))
        used_fallback = False
        if topic_filter is not None:
            mask = np.fromiter(
                (self._docs[i].topic_id == topic_filter for i in ids),
                dtype=bool,
                count=len(ids),
            )
            if int(mask.sum()) < k:
                used_fallback = True
            else:
                candidate_idx = np.flatnonzero(mask)

        scores = (matrix[candidate_idx] @ query) / (norms[candidate_idx] * qnorm)
        order = sorted(range(len(candidate_idx)), key=lambda j: (-scores[j], ids[candidate_idx[j]]))
        hits = []
        for j in order[:k]:
            doc = self._docs[ids[candidate_idx[j]]]
            hits.append(SearchHit(document=doc, score=float(scores[j]), used_fallback=used_fallback))
        return hits

    def persist(self, path: str | Path) -> None:
        """Write the canonical on-disk layout (documents sorted by id)."""
        directory = Path(path)
        directory.mkdir(parents=True, exist_ok=True)
        ids = sorted(self._docs)
        manifest = {
            "version": STORE_FORMAT_VERSION,
            "dimension": self.dimension,
            "count": len(ids),
            "topic_model_fingerprint": self.topic_model_fingerprint,
        }
        (directory / MANIFEST_JSON).write_text(canonical_pretty(manifest), "utf-8")
        with open(directory / DOCS_JSONL, "w", encoding="utf-8") as fh:
            for doc_id in ids:
                doc = self._docs[doc_id]
                row = {
                    "id": doc.id,
                    "title": doc.title,
                    "text": doc.text,
                    "topic_id": doc.topic_id,
                    "topic_probability": doc.topic_probability,
                    "source": doc.source,
                    "timestamp": doc.timestamp,
                    "extra": doc.extra,
                }
                fh.write(canonical_dumps(row) + "\n")
        with open(directory / EMBEDDINGS_F32, "wb") as fh:
            for doc_id in ids:
                fh.write(np.ascontiguousarray(self._docs[doc_id].embedding, dtype="<f4").tobytes())


def open_store(path: str | Path, expected_dimension: Optional[int] = None) -> VectorStore:
    """Load a persisted store; identical search results to the original.

    ``expected_dimension`` guards against pairing a store with an
    embedder of a different dimension (ManifestMismatch).
    """
    directory = Path(path)
    try:
        manifest = json.loads((directory / MANIFEST_JSON).read_text("utf-8"))
    except ValueError as exc:
        raise FormatVersionMismatch(f"manifest.json unreadable: {exc}") from exc
    if manifest.get("version") != STORE_FORMAT_VERSION:
        raise FormatVersionMismatch(f"unsupported store version {manifest.get('version')!r}")
    dimension = int(manifest["dimension"])
    if expected_dimension is not None and dimension != expected_dimension:
        raise ManifestMismatch(
            f"store dimension {dimension} != configured embedder dimension {expected_dimension}"
        )
    count = int(manifest["count"])
    store = VectorStore(dimension, manifest.get("topic_model_fingerprint", ""))

    blob = (directory / EMBEDDINGS_F32).read_bytes()
    if len(blob) != count * dimension * 4:
        raise FormatVersionMismatch(
            f"embeddings.f32 holds {len(blob)} bytes, expected {count * dimension * 4}"
        )
    matrix = np.frombuffer(blob, dtype="<f4").reshape(count, dimension) if count else None

    docs = []
    with open(directory / DOCS_JSONL, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            if i >= count:
                raise FormatVersionMismatch("docs.jsonl holds more rows than the manifest count")
            try:
                row = json.loads(line)
            except ValueError as exc:
                raise FormatVersionMismatch(f"docs.jsonl line {i + 1} unreadable: {exc}") from exc
            docs.append(
                Document(
                    id=row["id"],
                    title=row.get("title", ""),
                    text=row.get("text", ""),
                    embedding=matrix[i],
                    topic_id=int(row.get("topic_id", -1)),
                    topic_probability=float(row.get("topic_probability", 0.0)),
                    source=row.get("source", ""),
                    timestamp=row.get("timestamp"),
                    extra=dict(row.get("extra") or {}),
                )
            )
    if len(docs) != count:
        raise FormatVersionMismatch(f"docs.jsonl holds {len(docs)} rows, manifest says {count}")
    store.upsert_batch(docs)
    return store
