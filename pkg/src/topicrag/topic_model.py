"""Topic assignment model: spherical k-means over document embeddings
plus class-based TF-IDF keyword weights per cluster.

A fitted model maps any embedding to a topic id and probability
(softmax over centroid cosine similarities), with -1 reserved for
outliers whose best similarity falls below the threshold.
"""

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    FormatVersionMismatch,
    InsufficientData,
    UnknownTopic,
)
from .jsonio import canonical_pretty

MODEL_FORMAT_VERSION = 1
MODEL_JSON = "model.json"
CENTROIDS_F32 = "centroids.f32"

DEFAULT_OUTLIER_THRESHOLD = 0.0
DEFAULT_SOFTMAX_TEMPERATURE = 0.1

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6
KMEANS_RESTARTS = 4

_WORD_SPLIT = re.compile(r"[^0-9a-z]+")
_MIN_TOKEN_LEN = 2


def _load_stopwords() -> frozenset:
    text = resources.files("topicrag").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


STOPWORDS = _load_stopwords()


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop short tokens and stopwords."""
    return [
        t
        for t in _WORD_SPLIT.split(text.lower())
        if len(t) >= _MIN_TOKEN_LEN and t not in STOPWORDS
    ]


@dataclass(frozen=True)
class TopicAssignment:
    topic_id: int  # -1 marks an outlier
    probability: float  # pre-threshold max softmax probability, also for outliers


@dataclass
class TopicModel:
    centroids: np.ndarray  # (k, dim) float32, rows L2-normalized
    term_weights: list[dict[str, float]]  # one map per topic
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD
    softmax_temperature: float = DEFAULT_SOFTMAX_TEMPERATURE
    vocab_stats: dict[str, int] = field(default_factory=dict)  # corpus term frequencies
    warnings: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.centroids.shape[1])


def _as_matrix(embeddings) -> np.ndarray:
    matrix = np.asarray(embeddings, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch("embeddings must share one dimension")
    return matrix


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector cannot be cosine-normalized")
    return matrix / norms


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding on unit vectors.

    D^2 = squared Euclidean = 2(1 - cos). Each step samples a few
    D^2-weighted candidates and keeps the one that minimizes the total
    potential, the standard robust variant of the ++ scheme.
    """
    n = data.shape[0]
    trials = 2 + int(math.log(k)) if k > 1 else 1
    centers = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = data[first]
    d2 = 2.0 * np.clip(1.0 - data @ centers[0], 0.0, None)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all points coincide with chosen centers; any pick works
            candidates = [int(rng.integers(n))]
        else:
            candidates = [int(c) for c in rng.choice(n, size=trials, p=d2 / total)]
        best_idx, best_d2, best_potential = None, None, None
        for idx in candidates:
            cand_d2 = np.minimum(d2, 2.0 * np.clip(1.0 - data @ data[idx], 0.0, None))
            potential = float(cand_d2.sum())
            if best_potential is None or potential < best_potential:
                best_idx, best_d2, best_potential = idx, cand_d2, potential
        centers[j] = data[best_idx]
        d2 = best_d2
    return centers


def _lloyd(data: np.ndarray, centers: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations with cosine assignment and renormalized mean centroids.

    Converges when the largest centroid shift drops below KMEANS_TOL or
    after KMEANS_MAX_ITER rounds.
    """
    labels = np.zeros(data.shape[0], dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        sims = data @ centers.T
        labels = np.argmax(sims, axis=1)  # ties resolve to the lowest index
        new_centers = centers.copy()
        for j in range(k):
            members = data[labels == j]
            if len(members) == 0:
                # re-seed an empty cluster with the point worst served by
                # its current centroid (lowest best-similarity, lowest index)
                best = sims[np.arange(len(labels)), labels]
                idx = int(np.argmin(best))
                new_centers[j] = data[idx]
                labels[idx] = j
                continue
            mean = members.mean(axis=0)
            norm = float(np.linalg.norm(mean))
            if norm > 0:
                new_centers[j] = mean / norm
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < KMEANS_TOL:
            break
    sims = data @ centers.T
    labels = np.argmax(sims, axis=1)
    return labels, centers


def _spherical_kmeans(
    data: np.ndarray, k: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Best of KMEANS_RESTARTS seeded runs, scored by total assigned cosine.

    A single RNG seeded once drives every restart, so the whole fit is
    deterministic for fixed (inputs, k, seed).
    """
    rng = np.random.default_rng(seed)
    best_labels, best_centers, best_cost = None, None, -np.inf
    for _ in range(KMEANS_RESTARTS):
        centers = _kmeans_pp_init(data, k, rng)
        labels, centers = _lloyd(data, centers, k)
        cost = float((data * centers[labels]).sum())
        if cost > best_cost:
            best_labels, best_centers, best_cost = labels, centers, cost
    return best_labels, best_centers


def class_tf_idf(
    documents: list[str], labels: np.ndarray, k: int
) -> tuple[list[dict[str, float]], dict[str, int]]:
    """Per-cluster term weights: tf_in_cluster * log(1 + avg_cluster_tokens / total_tf).

    Each cluster's documents are concatenated into one class; tf is the
    raw term count within the class, the idf factor uses the term's
    total count across all classes and the average token count per
    cluster.
    """
    class_counts = [Counter() for _ in range(k)]
    for doc, label in zip(documents, labels):
        class_counts[int(label)].update(tokenize(doc))
    totals: Counter = Counter()
    for counts in class_counts:
        totals.update(counts)
    total_tokens = sum(totals.values())
    avg_tokens = total_tokens / k if k else 0.0
    weights: list[dict[str, float]] = []
    for counts in class_counts:
        weights.append(
            {term: tf * math.log(1.0 + avg_tokens / totals[term]) for term, tf in counts.items()}
        )
    return weights, dict(totals)


def fit(
    embeddings,
    documents: list[str],
    k: int,
    seed: int,
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD,
    softmax_temperature: float = DEFAULT_SOFTMAX_TEMPERATURE,
) -> TopicModel:
    """Cluster embeddings into k topics and compute per-topic keyword weights.

    Deterministic for fixed (embeddings, documents, k, seed). If every
    embedding is identical and k > 1, the fit degrades to a single topic
    and records a warning instead of failing.
    """
    matrix = _as_matrix(embeddings)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(documents) != matrix.shape[0]:
        raise ValueError("embeddings and documents must align")
    if matrix.shape[0] < k:
        raise InsufficientData(f"{matrix.shape[0]} documents for k={k}")
    if not -1.0 <= outlier_threshold < 1.0:
        raise ValueError("outlier_threshold must be in [-1, 1)")
    if softmax_temperature <= 0:
        raise ValueError("softmax_temperature must be positive")

    data = _normalize_rows(matrix)
    warnings: list[str] = []
    if k > 1 and bool(np.all(np.abs(data - data[0]) < 1e-12)):
        warnings.append(f"all embeddings identical; reduced k from {k} to 1")
        k = 1

    labels, centers = _spherical_kmeans(data, k, seed)
    term_weights, vocab_stats = class_tf_idf(documents, labels, k)
    centroids = np.ascontiguousarray(centers, dtype=np.float32)
    return TopicModel(
        centroids=centroids,
        term_weights=term_weights,
        outlier_threshold=outlier_threshold,
        softmax_temperature=softmax_temperature,
        vocab_stats=vocab_stats,
        warnings=warnings,
    )


def _similarities(model: TopicModel, embedding) -> np.ndarray:
    vec = np.asarray(embedding, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != model.dimension:
        raise DimensionMismatch(
            f"embedding has shape {vec.shape}, model dimension is {model.dimension}"
        )
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot assign a zero vector")
    return model.centroids.astype(np.float64) @ (vec / norm)


def topic_probabilities(model: TopicModel, embedding) -> np.ndarray:
    """Full softmax distribution over topics (sums to 1)."""
    sims = _similarities(model, embedding)
    scaled = sims / model.softmax_temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def assign(model: TopicModel, embedding) -> TopicAssignment:
    """Nearest-centroid topic with its softmax probability.

    Ties break to the lowest topic id. When the best cosine similarity
    is below the outlier threshold the topic id is -1 but the
    probability still reports the pre-threshold maximum.
    """
    sims = _similarities(model, embedding)
    probs = topic_probabilities(model, embedding)
    best = int(np.argmax(sims))
    probability = float(probs[best])
    if sims[best] < model.outlier_threshold:
        return TopicAssignment(topic_id=-1, probability=probability)
    return TopicAssignment(topic_id=best, probability=probability)


def top_terms(model: TopicModel, topic_id: int, n: int) -> list[tuple[str, float]]:
    """The n highest-weight terms of a topic, descending, ties lexicographic."""
    if not 0 <= topic_id < model.k:
        raise UnknownTopic(f"topic {topic_id} outside 0..{model.k - 1}")
    if n < 1:
        raise ValueError("n must be positive")
    ranked = sorted(model.term_weights[topic_id].items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:n]


def topic_distribution(assignments) -> dict[int, float]:
    """Relative density per topic id (including the -1 outlier bucket)."""
    assignments = list(assignments)
    if not assignments:
        raise EmptyInput("no assignments")
    counts = Counter(a.topic_id for a in assignments)
    total = len(assignments)
    return {topic: count / total for topic, count in sorted(counts.items())}


def _model_json_payload(model: TopicModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "dimension": model.dimension,
        "outlier_threshold": model.outlier_threshold,
        "softmax_temperature": model.softmax_temperature,
        "term_weights": {str(i): weights for i, weights in enumerate(model.term_weights)},
        "vocab_stats": model.vocab_stats,
        "warnings": model.warnings,
    }


def _centroid_bytes(model: TopicModel) -> bytes:
    return np.ascontiguousarray(model.centroids, dtype="<f4").tobytes()


def save(model: TopicModel, path: str | Path) -> None:
    """Write model.json plus centroids.f32 (row-major little-endian float32).

    Serialization is canonical: saving the same model twice produces
    byte-identical files.
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MODEL_JSON).write_text(canonical_pretty(_model_json_payload(model)), "utf-8")
    (directory / CENTROIDS_F32).write_bytes(_centroid_bytes(model))


def load(path: str | Path) -> TopicModel:
    directory = Path(path)
    raw = (directory / MODEL_JSON).read_text("utf-8")
    try:
        import json

        payload = json.loads(raw)
    except ValueError as exc:
        raise FormatVersionMismatch(f"model.json unreadable: {exc}") from exc
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"unsupported model version {payload.get('version')!r}"
        )
    k = int(payload["k"])
    dim = int(payload["dimension"])
    blob = (directory / CENTROIDS_F32).read_bytes()
    expected = k * dim * 4
    if len(blob) != expected:
        raise FormatVersionMismatch(
            f"centroids.f32 holds {len(blob)} bytes, expected {expected}"
        )
    centroids = np.frombuffer(blob, dtype="<f4").reshape(k, dim).copy()
    term_weights = [dict(payload["term_weights"].get(str(i), {})) for i in range(k)]
    return TopicModel(
        centroids=centroids,
        term_weights=term_weights,
        outlier_threshold=float(payload["outlier_threshold"]),
        softmax_temperature=float(payload["softmax_temperature"]),
        vocab_stats={t: int(c) for t, c in payload["vocab_stats"].items()},
        warnings=list(payload.get("warnings", [])),
    )


def fingerprint(model: TopicModel) -> str:
    """SHA-256 over the canonical serialized form; recorded in store manifests."""
    digest = hashlib.sha256()
    digest.update(canonical_pretty(_model_json_payload(model)).encode("utf-8"))
    digest.update(_centroid_bytes(model))
    return digest.hexdigest()
