"""Remote providers speaking a minimal OpenAI-style JSON shape over HTTP.

Requests carry a single user message (chat) or a single input text
(embeddings); responses are read from the first choice / first data entry,
so any vendor exposing that shape can be dropped in. Retries apply only to
429, 5xx and transport timeouts, with exponential backoff; other 4xx fail
fast so misconfiguration surfaces immediately.
"""

from __future__ import annotations

import logging
import os
import time
from typing import Any, Callable

import httpx
import numpy as np

from .base import ChatProvider, EncoderProvider, TransportError

logger = logging.getLogger(__name__)

API_KEY_ENV = "DORIS_API_KEY"
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE = 1.0


def _is_retryable(status: int) -> bool:
    return status == 429 or status >= 500


class _RemoteBase:
    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.model = model
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url, headers=headers, timeout=timeout, transport=transport
        )

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        last_error = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(path, json=payload)
            except httpx.TransportError as exc:
                last_error = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    return response.json()
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if not _is_retryable(response.status_code):
                    raise TransportError(f"{path} failed non-retryably ({last_error})")
            if attempt < self.max_attempts:
                delay = self.backoff_base * 2 ** (attempt - 1)
                logger.warning("%s attempt %d failed (%s); retrying in %.1fs",
                               path, attempt, last_error, delay)
                self._sleep(delay)
        raise TransportError(
            f"{path} failed after {self.max_attempts} attempts ({last_error})"
        )


class RemoteEncoder(_RemoteBase, EncoderProvider):
    """HTTP embeddings endpoint; output is re-normalized to unit length."""

    def __init__(self, base_url: str, model: str, dim: int, **kwargs: Any):
        super().__init__(base_url, model, **kwargs)
        self.dim = dim
        self.name = f"remote-enc-{model}"

    def _encode(self, text: str) -> np.ndarray:
        data = self._post("/embeddings", {"model": self.model, "input": [text]})
        try:
            raw = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed embeddings response: {exc}") from exc
        vec = np.asarray(raw, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise TransportError(
                f"embedding has dimension {vec.shape}, expected ({self.dim},)"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not np.isfinite(norm):
            raise TransportError("embedding endpoint returned a degenerate vector")
        return vec / norm


class RemoteChat(_RemoteBase, ChatProvider):
    """HTTP chat-completion endpoint; single user message, first choice out.

    Temperature is pinned to 0 for reproducibility.
    """

    def __init__(self, base_url: str, model: str, max_concurrency: int = 4, **kwargs: Any):
        super().__init__(base_url, model, **kwargs)
        self.name = f"remote-chat-{model}"
        self.max_concurrency = max_concurrency

    def _complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc
        if not isinstance(content, str):
            raise TransportError("chat response content is not a string")
        return content
