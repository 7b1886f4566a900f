"""Engine configuration: a single JSON file describing the LLM, judge
and embedder endpoints plus pipeline settings. Endpoint kind "http"
talks to a real service; "mock:<script-path>" (LLM/judge) and "mock"
(embedder) run fully offline, which is how CI exercises every command.
"""

import json
from pathlib import Path
from typing import Optional

from . import _http
from .embedding_client import EmbedderEndpointConfig, HashEmbedder, HttpEmbedder
from .llm_client import (
    DEFAULT_API_KEY_ENV,
    HttpLlmClient,
    LlmEndpointConfig,
    ScriptedLlmClient,
)
from .pipeline import PipelineConfig

DEFAULT_CONFIG = {
    "llm": {"kind": "http", "base_url": "http://localhost:8000/v1", "model": "gpt-4o"},
    "judge": {"kind": "http", "base_url": "http://localhost:8000/v1", "model": "gpt-4o"},
    "embedder": {"kind": "mock", "dimension": 256, "seed": 0},
    "pipeline": {},
    "inflight_limit": 4,
}


class EngineConfig:
    """Parsed config file plus the directory its relative paths resolve against."""

    def __init__(self, data: dict, base_dir: Path):
        self.data = data
        self.base_dir = base_dir

    @classmethod
    def from_file(cls, path: Optional[str | Path]) -> "EngineConfig":
        if path is None:
            return cls(json.loads(json.dumps(DEFAULT_CONFIG)), Path.cwd())
        path = Path(path)
        data = json.loads(path.read_text("utf-8"))
        merged = json.loads(json.dumps(DEFAULT_CONFIG))
        merged.update(data)
        return cls(merged, path.parent)

    def apply(self) -> None:
        _http.set_inflight_limit(int(self.data.get("inflight_limit", 4)))

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def build_llm(self, section: str = "llm"):
        spec = self.data.get(section) or {}
        kind = spec.get("kind", "http")
        if kind.startswith("mock:"):
            return load_scripted_client(self._resolve(kind[len("mock:"):]))
        if kind == "http":
            config = LlmEndpointConfig(
                base_url=spec.get("base_url", "http://localhost:8000/v1"),
                api_key_env=spec.get("api_key_env", DEFAULT_API_KEY_ENV),
                request_timeout=float(spec.get("request_timeout", 30.0)),
                max_retries=int(spec.get("max_retries", 2)),
            )
            return HttpLlmClient(config, default_model=spec.get("model", "gpt-4o"))
        raise ValueError(f"{section}.kind must be 'http' or 'mock:<script-path>', got {kind!r}")

    def build_embedder(self):
        spec = self.data.get("embedder") or {}
        kind = spec.get("kind", "mock")
        dimension = int(spec.get("dimension", 256))
        if kind == "mock":
            return HashEmbedder(dimension=dimension, seed=int(spec.get("seed", 0)))
        if kind == "http":
            config = EmbedderEndpointConfig(
                base_url=spec.get("base_url", "http://localhost:8000/v1"),
                model=spec.get("model", "text-embedding"),
                dimension=dimension,
                api_key_env=spec.get("api_key_env", DEFAULT_API_KEY_ENV),
                request_timeout=float(spec.get("request_timeout", 30.0)),
                max_retries=int(spec.get("max_retries", 2)),
                batch_size=int(spec.get("batch_size", 64)),
            )
            return HttpEmbedder(config)
        raise ValueError(f"embedder.kind must be 'http' or 'mock', got {kind!r}")

    def build_pipeline_config(self, **overrides) -> PipelineConfig:
        spec = dict(self.data.get("pipeline") or {})
        spec.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig(
            max_iterations=int(spec.get("max_iterations", 3)),
            retrieval_k=int(spec.get("retrieval_k", 4)),
            topic_filtering=bool(spec.get("topic_filtering", True)),
        )


def load_scripted_client(script_path: Path) -> ScriptedLlmClient:
    """Scripted mock description: {"fallback": str, "rules": [{"contains", "response"}]}."""
    data = json.loads(Path(script_path).read_text("utf-8"))
    script = {}
    for rule in data.get("rules", []):
        script[rule["contains"]] = rule["response"]
    return ScriptedLlmClient(script, fallback=data.get("fallback", "UNMATCHED"))
