"""Shared HTTP plumbing for the chat and embedding endpoints.

One POST helper with the engine's retry policy, plus the engine-wide
cap on concurrent in-flight requests (default 4).
"""

import json
import os
import threading
import time
from typing import Callable, Optional

from .errors import AuthError, ProtocolError, TransportError

# A transport takes (url, payload, headers, timeout) and returns
# (status_code, body_text). The default uses requests; tests inject fakes.
Transport = Callable[[str, dict, dict, float], tuple[int, str]]

RETRY_BACKOFF_SECONDS = 0.5

_inflight = threading.BoundedSemaphore(4)


def set_inflight_limit(limit: int) -> None:
    """Replace the engine-wide concurrent-request cap."""
    global _inflight
    if limit < 1:
        raise ValueError("in-flight limit must be >= 1")
    _inflight = threading.BoundedSemaphore(limit)


def _requests_transport(url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, str]:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    return resp.status_code, resp.text


def auth_headers(api_key_env: str) -> dict:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def post_json(
    url: str,
    payload: dict,
    headers: dict,
    timeout: float,
    max_retries: int,
    transport: Optional[Transport] = None,
    backoff: float = RETRY_BACKOFF_SECONDS,
) -> dict:
    """POST and return the parsed JSON body.

    Makes at most 1 + max_retries attempts. Retries cover transport
    failures and HTTP 5xx only; 401/403 raise AuthError immediately and
    any other non-2xx status, or an unparseable 2xx body, raises
    ProtocolError.
    """
    send = transport or _requests_transport
    attempts = 1 + max_retries
    last_failure = "no attempt made"
    for attempt in range(attempts):
        if attempt > 0 and backoff > 0:
            time.sleep(backoff)
        try:
            with _inflight:
                status, body = send(url, payload, headers, timeout)
        except (ConnectionError, OSError) as exc:
            last_failure = f"transport failure: {exc}"
            continue
        if status in (401, 403):
            raise AuthError(f"endpoint returned HTTP {status}")
        if 500 <= status < 600:
            last_failure = f"HTTP {status}"
            continue
        if not 200 <= status < 300:
            raise ProtocolError(f"unexpected HTTP {status}: {body[:200]}")
        try:
            parsed = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response body is not JSON: {exc}") from exc
        if not isinstance(parsed, dict):
            raise ProtocolError("response body is not a JSON object")
        return parsed
    raise TransportError(f"{url}: giving up after {attempts} attempts ({last_failure})")
