"""Chat-completion provider boundary.

The wire protocol is the de-facto chat-completion JSON schema (POST with
model, messages array of role/content objects, optional temperature;
response carrying an assistant message) so local servers and hosted APIs are
interchangeable. The API key is read from a named environment variable,
never from config files.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import requests

from ..errors import EmptyCompletionError, TransportError
from .prompts import ChatRequest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str
    model_name: str
    api_key_env_var: str = ""
    request_timeout: float = 120.0
    max_retries: int = 2
    parallelism: int = 1

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Provider(Protocol):
    """Anything that turns a ChatRequest into assistant text."""

    def complete(self, request: ChatRequest) -> str: ...


def _default_post(url: str, payload: dict, headers: dict, timeout: float):
    resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    return resp.status_code, resp.json() if resp.content else {}


def complete(
    request: ChatRequest,
    config: ProviderConfig,
    post_fn: Callable | None = None,
    sleep_fn: Callable[[float], None] = time.sleep,
) -> str:
    """Send one request with retry on transport failure.

    Transport failures (network exceptions and 5xx statuses) retry up to
    config.max_retries with exponential backoff; 4xx statuses fail
    immediately. An empty assistant message is an error, not a retry.
    """
    post = post_fn or _default_post
    payload: dict = {
        "model": request.model_name or config.model_name,
        "messages": [{"role": role, "content": content} for role, content in request.messages],
        "max_tokens": request.max_output_tokens,
    }
    if request.temperature is not None:
        payload["temperature"] = request.temperature
    headers = {"Content-Type": "application/json"}
    if config.api_key_env_var:
        key = os.environ.get(config.api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"

    last_status: int | None = None
    last_error = ""
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            sleep_fn(0.5 * 2 ** (attempt - 1))
        try:
            status, body = post(config.endpoint_url, payload, headers, config.request_timeout)
        except Exception as exc:
            last_status, last_error = None, str(exc)
            logger.warning("transport failure (attempt %d): %s", attempt + 1, exc)
            continue
        if 200 <= status < 300:
            try:
                content = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise TransportError(f"malformed completion body: {body!r}", last_status=status)
            if not content:
                raise EmptyCompletionError("provider returned an empty completion")
            return content
        if 400 <= status < 500:
            raise TransportError(f"provider rejected request with status {status}", last_status=status)
        last_status, last_error = status, f"status {status}"
        logger.warning("transport failure (attempt %d): status %s", attempt + 1, status)
    raise TransportError(
        f"retries exhausted after {config.max_retries + 1} attempts: {last_error}",
        last_status=last_status,
    )


class HttpProvider:
    """Provider bound to one ProviderConfig; safe for concurrent calls."""

    def __init__(self, config: ProviderConfig, post_fn: Callable | None = None,
                 sleep_fn: Callable[[float], None] = time.sleep):
        self.config = config
        self._post_fn = post_fn
        self._sleep_fn = sleep_fn

    def complete(self, request: ChatRequest) -> str:
        return complete(request, self.config, post_fn=self._post_fn, sleep_fn=self._sleep_fn)


class CallBudget:
    """Shared countdown across providers; spend() reports whether calls remain."""

    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0
        self._lock = threading.Lock()

    def spend(self) -> bool:
        with self._lock:
            self.used += 1
            return self.used <= self.limit


class FailureInjector:
    """Wraps a provider and fails every call once a budget is spent.

    Testing hook for kill-and-resume scenarios: the run aborts mid-iteration
    when the call budget runs out, leaving the last atomic checkpoint as the
    resume point. The budget may be shared between providers.
    """

    def __init__(self, inner: Provider, budget: CallBudget):
        self.inner = inner
        self.budget = budget

    def complete(self, request: ChatRequest) -> str:
        if not self.budget.spend():
            raise TransportError("injected transport failure", last_status=None)
        return self.inner.complete(request)
