"""Chat-completion clients: one HTTP client speaking the open
chat-completions protocol, and a deterministic scripted mock for
offline tests.

Both expose ``complete(request) -> str`` and a ``default_model``
attribute, so every caller treats them interchangeably.
"""

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union
from urllib.parse import urlparse

from ._http import RETRY_BACKOFF_SECONDS, Transport, auth_headers, post_json
from .errors import ProtocolError

ROLES = ("system", "user", "assistant")

DEFAULT_API_KEY_ENV = "AT_RAG_LLM_API_KEY"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_output_tokens: int = 512

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    request_timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        parsed = urlparse(self.base_url)
        if not parsed.scheme or not parsed.netloc:
            raise ValueError(f"base_url must be an absolute URL, got {self.base_url!r}")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def request_to_wire(request: CompletionRequest) -> dict:
    """Wire-format body: POST {base_url}/chat/completions."""
    return {
        "model": request.model,
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    }


def request_from_wire(body: dict) -> CompletionRequest:
    try:
        return CompletionRequest(
            model=body["model"],
            messages=tuple(ChatMessage(m["role"], m["content"]) for m in body["messages"]),
            temperature=body["temperature"],
            max_output_tokens=body["max_tokens"],
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed request body: {exc}") from exc


def serialize_request(request: CompletionRequest) -> bytes:
    """Canonical bytes; serialize -> parse -> serialize round-trips exactly."""
    return json.dumps(request_to_wire(request), sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")


def parse_request(data: bytes) -> CompletionRequest:
    return request_from_wire(json.loads(data.decode("utf-8")))


def extract_completion_text(body: dict) -> str:
    """Pull choices[0].message.content out of a chat-completions body."""
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"response missing choices[0].message.content: {exc}") from exc
    if not isinstance(text, str):
        raise ProtocolError("completion content is not a string")
    return text


class HttpLlmClient:
    """Blocking client for a chat-completions endpoint.

    Retries transport failures and HTTP 5xx up to config.max_retries
    times with a fixed 500 ms backoff; 401/403 raise AuthError without
    retrying. Safe to share across threads.
    """

    def __init__(
        self,
        config: LlmEndpointConfig,
        default_model: str = "gpt-4o",
        transport: Optional[Transport] = None,
        backoff: float = RETRY_BACKOFF_SECONDS,
    ):
        self.config = config
        self.default_model = default_model
        self._transport = transport
        self._backoff = backoff

    def complete(self, request: CompletionRequest) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = post_json(
            url,
            request_to_wire(request),
            auth_headers(self.config.api_key_env),
            self.config.request_timeout,
            self.config.max_retries,
            transport=self._transport,
            backoff=self._backoff,
        )
        return extract_completion_text(body)


class ScriptedLlmClient:
    """Deterministic mock endpoint driven by substring matchers.

    ``script`` maps a matcher substring to either a single response or a
    sequence of responses; the prompt (all message contents joined with
    newlines) is tested against matchers in insertion order and the
    first hit wins. A sequence value is consumed one entry per matching
    call, repeating its last entry once exhausted. Unmatched prompts get
    ``fallback``. Every call is appended to ``calls``.
    """

    def __init__(
        self,
        script: Optional[Mapping[str, Union[str, Sequence[str]]]] = None,
        fallback: str = "UNMATCHED",
    ):
        self.fallback = fallback
        self.default_model = "mock"
        self.calls: list[CompletionRequest] = []
        self._rules: list[tuple[str, list[str]]] = []
        self._cursors: list[int] = []
        for matcher, response in (script or {}).items():
            responses = [response] if isinstance(response, str) else list(response)
            if not responses:
                raise ValueError(f"matcher {matcher!r} has an empty response sequence")
            self._rules.append((matcher, responses))
            self._cursors.append(0)

    def complete(self, request: CompletionRequest) -> str:
        self.calls.append(request)
        prompt = "\n".join(m.content for m in request.messages)
        for i, (matcher, responses) in enumerate(self._rules):
            if matcher in prompt:
                cursor = min(self._cursors[i], len(responses) - 1)
                self._cursors[i] += 1
                return responses[cursor]
        return self.fallback

    def prompts_containing(self, fragment: str) -> list[str]:
        """Logged prompts that contain ``fragment`` (for call accounting)."""
        out = []
        for request in self.calls:
            prompt = "\n".join(m.content for m in request.messages)
            if fragment in prompt:
                out.append(prompt)
        return out


def make_scripted_mock(
    script: Optional[Mapping[str, Union[str, Sequence[str]]]] = None,
    fallback: str = "UNMATCHED",
) -> ScriptedLlmClient:
    return ScriptedLlmClient(script, fallback)


def complete(client, request: CompletionRequest) -> str:
    """Functional form of the client call; works for real and mock clients."""
    return client.complete(request)


def chat(
    llm,
    user: str,
    system: Optional[str] = None,
    temperature: float = 0.0,
    max_output_tokens: int = 1024,
) -> str:
    """Build a one-shot request against the client's default model."""
    messages = []
    if system:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", user))
    request = CompletionRequest(
        model=llm.default_model,
        messages=tuple(messages),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )
    return llm.complete(request)
