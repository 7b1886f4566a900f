"""Text-to-vector clients: a remote embeddings endpoint and a
deterministic feature-hashing mock.

All embedders expose ``dimension`` and ``embed_batch(texts)`` returning
L2-normalized float64 vectors in input order.
"""

import hashlib
import re
from dataclasses import dataclass
from typing import Optional
from urllib.parse import urlparse

import numpy as np

from ._http import Transport, auth_headers, post_json
from .errors import DimensionMismatch
from .llm_client import DEFAULT_API_KEY_ENV

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EmbedderEndpointConfig:
    base_url: str
    model: str
    dimension: int
    api_key_env: str = DEFAULT_API_KEY_ENV
    request_timeout: float = 30.0
    max_retries: int = 2
    batch_size: int = 64

    def __post_init__(self):
        parsed = urlparse(self.base_url)
        if not parsed.scheme or not parsed.netloc:
            raise ValueError(f"base_url must be an absolute URL, got {self.base_url!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def _check_texts(texts) -> None:
    for i, text in enumerate(texts):
        if not text or not text.strip():
            raise ValueError(f"text at index {i} is empty after trimming")


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot L2-normalize a zero vector")
    return vec / norm


def hash_token(token: str, dimension: int, seed: int) -> tuple[int, float]:
    """Bucket index and sign for one token.

    Keyed BLAKE2b of the UTF-8 token with the seed as an 8-byte
    little-endian key; bytes 0..7 (little-endian) mod dimension pick the
    bucket and the low bit of byte 8 picks the sign.
    """
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9, key=key).digest()
    bucket = int.from_bytes(digest[:8], "little") % dimension
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


def tokenize_for_hashing(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class HashEmbedder:
    """Deterministic feature-hashing embedder for offline runs.

    Each token adds its sign to its hashed bucket, so token counts
    accumulate; the result is L2-normalized. Texts sharing more tokens
    get higher cosine similarity, which is all the engine needs from an
    embedding space in tests.
    """

    def __init__(self, dimension: int, seed: int = 0):
        if dimension < 8:
            raise ValueError("dimension must be >= 8")
        self.dimension = dimension
        self.seed = seed

    def embed_batch(self, texts) -> list[np.ndarray]:
        _check_texts(texts)
        out = []
        for text in texts:
            vec = np.zeros(self.dimension, dtype=np.float64)
            tokens = tokenize_for_hashing(text)
            if not tokens:
                raise ValueError(f"text {text!r} has no hashable tokens")
            for token in tokens:
                bucket, sign = hash_token(token, self.dimension, self.seed)
                vec[bucket] += sign
            out.append(_normalize(vec))
        return out


class HttpEmbedder:
    """Client for a remote embeddings endpoint.

    POSTs {base_url}/embeddings with {"model": ..., "input": [texts]}
    in batches of ``config.batch_size`` and reads data[i].embedding.
    Vectors are re-normalized locally so downstream cosine math can rely
    on unit norms regardless of provider behavior.
    """

    def __init__(self, config: EmbedderEndpointConfig, transport: Optional[Transport] = None):
        self.config = config
        self.dimension = config.dimension
        self._transport = transport

    def embed_batch(self, texts) -> list[np.ndarray]:
        _check_texts(texts)
        texts = list(texts)
        out: list[np.ndarray] = []
        url = self.config.base_url.rstrip("/") + "/embeddings"
        for start in range(0, len(texts), self.config.batch_size):
            chunk = texts[start : start + self.config.batch_size]
            body = post_json(
                url,
                {"model": self.config.model, "input": chunk},
                auth_headers(self.config.api_key_env),
                self.config.request_timeout,
                self.config.max_retries,
                transport=self._transport,
            )
            rows = body.get("data")
            if not isinstance(rows, list) or len(rows) != len(chunk):
                raise DimensionMismatch(
                    f"endpoint returned {len(rows) if isinstance(rows, list) else 'no'} "
                    f"vectors for {len(chunk)} inputs"
                )
            for row in rows:
                values = np.asarray(row.get("embedding"), dtype=np.float64)
                if values.ndim != 1 or values.shape[0] != self.dimension:
                    raise DimensionMismatch(
                        f"expected dimension {self.dimension}, got {values.shape}"
                    )
                if not np.all(np.isfinite(values)):
                    raise DimensionMismatch("embedding contains non-finite values")
                out.append(_normalize(values))
        return out


def make_hash_mock(dimension: int, seed: int = 0) -> HashEmbedder:
    return HashEmbedder(dimension, seed)
