"""Provider-agnostic chat-completion clients.

:class:`HttpChatClient` speaks the widely used ``/chat/completions`` JSON
protocol; :class:`MockClient` replays canned or computed responses offline.
"""
from __future__ import annotations

import logging
import os
import time
from typing import Callable, Mapping

import httpx

logger = logging.getLogger(__name__)


class ConfigurationError(RuntimeError):
    pass


class TransportError(RuntimeError):
    """Request failed for good; ``attempts`` lists what happened on each try."""

    def __init__(self, message: str, status: int | None = None, attempts: list[str] | None = None):
        super().__init__(message)
        self.status = status
        self.attempts = attempts or []


class LlmClient:
    model_id: str = "unknown"

    def send(self, prompt: str, temperature: float = 0.0, max_tokens: int = 2048) -> str:
        raise NotImplementedError


class HttpChatClient(LlmClient):
    """Chat-completion client with bounded retries.

    Retries 429, 5xx and network timeouts with exponential backoff
    (``backoff_s * 2**k``), up to ``max_attempts`` tries in total.
    """

    RETRY_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(self, base_url: str, model: str, api_key_env: str, *, timeout_s: float = 60.0,
                 max_attempts: int = 3, backoff_s: float = 1.0,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, environ: Mapping[str, str] | None = None):
        env = os.environ if environ is None else environ
        key = env.get(api_key_env)
        if not key:
            raise ConfigurationError(f"credential environment variable {api_key_env} is not set")
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model_id = model
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout_s, transport=transport,
                                    headers={"Authorization": f"Bearer {key}"})

    def send(self, prompt: str, temperature: float = 0.0, max_tokens: int = 2048) -> str:
        body = {"model": self.model_id, "temperature": temperature, "max_tokens": max_tokens,
                "messages": [{"role": "user", "content": prompt}]}
        attempts: list[str] = []
        status = None
        for k in range(self.max_attempts):
            try:
                resp = self._client.post(self.url, json=body)
            except httpx.TimeoutException as exc:
                attempts.append(f"attempt {k + 1}: timeout ({exc.__class__.__name__})")
            except httpx.TransportError as exc:
                attempts.append(f"attempt {k + 1}: transport error ({exc})")
            else:
                status = resp.status_code
                if resp.is_success:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise TransportError(f"unexpected response body from {self.url}: {exc}",
                                             status, attempts) from exc
                attempts.append(f"attempt {k + 1}: HTTP {status}")
                if status not in self.RETRY_STATUS:
                    raise TransportError(f"HTTP {status} from {self.url}", status, attempts)
            logger.warning("LLM request failed: %s", attempts[-1])
            if k + 1 < self.max_attempts:
                self._sleep(self.backoff_s * 2 ** k)
        raise TransportError(f"giving up on {self.url} after {self.max_attempts} attempts: "
                             + "; ".join(attempts), status, attempts)

    def close(self) -> None:
        self._client.close()


class MockClient(LlmClient):
    """Offline client. ``responder`` is a prompt -> text mapping or callable."""

    def __init__(self, responder: Mapping[str, str] | Callable[[str], str], model_id: str = "mock"):
        self.responder = responder
        self.model_id = model_id
        self.prompts: list[str] = []

    def send(self, prompt: str, temperature: float = 0.0, max_tokens: int = 2048) -> str:
        self.prompts.append(prompt)
        if callable(self.responder):
            return self.responder(prompt)
        try:
            return self.responder[prompt]
        except KeyError:
            raise TransportError("mock client has no canned response for this prompt") from None


def client_from_config(provider, **kwargs) -> HttpChatClient:
    return HttpChatClient(provider.base_url, provider.model, provider.api_key_env,
                          timeout_s=provider.timeout_s, **kwargs)
