"""Response caching for provider calls.

The cache is keyed by a sha256 digest of (provider name, request payload)
and stores raw response strings. On disk it is an append-only JSONL of
{"digest": ..., "response": ...}; later entries win on replay, so an
overwrite is just another append. The caching wrappers below add
single-flight semantics: under concurrency, n identical requests trigger
exactly one upstream call.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Callable

import numpy as np

from .base import ChatProvider, EncoderProvider


def request_digest(namespace: str, payload: str) -> str:
    """Cache key: sha256 over the exact (namespace, payload) pair."""
    h = hashlib.sha256()
    h.update(namespace.encode("utf-8"))
    h.update(b"\x00")
    h.update(payload.encode("utf-8"))
    return h.hexdigest()


class ResponseCache:
    """Digest-keyed response store, optionally persisted to an append-only JSONL."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    self._entries[obj["digest"]] = obj["response"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, digest: str) -> str | None:
        with self._lock:
            return self._entries.get(digest)

    def put(self, digest: str, response: str) -> None:
        line = json.dumps({"digest": digest, "response": response}, ensure_ascii=False)
        with self._lock:
            self._entries[digest] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")


class _SingleFlight:
    """Deduplicates concurrent calls per key: one caller computes, the rest wait."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}

    def run(self, key: str, lookup: Callable[[], str | None], call: Callable[[], str]) -> str:
        while True:
            with self._lock:
                hit = lookup()
                if hit is not None:
                    return hit
                event = self._inflight.get(key)
                if event is None:
                    event = threading.Event()
                    self._inflight[key] = event
                    break
            event.wait()
        try:
            return call()
        finally:
            with self._lock:
                del self._inflight[key]
            event.set()


class CachingEncoder(EncoderProvider):
    """Wraps an encoder with digest-keyed caching of its vectors."""

    def __init__(self, inner: EncoderProvider, cache: ResponseCache | None = None):
        self.inner = inner
        self.name = inner.name
        self.dim = inner.dim
        self.cache = cache if cache is not None else ResponseCache()
        self._vectors: dict[str, np.ndarray] = {}
        self._flight = _SingleFlight()

    def _encode(self, text: str) -> np.ndarray:
        digest = request_digest(f"encode:{self.name}", text)
        vec = self._vectors.get(digest)
        if vec is not None:
            return vec

        def lookup() -> str | None:
            return self.cache.get(digest)

        def call() -> str:
            fresh = self.inner.encode(text)
            response = json.dumps([float(v) for v in fresh])
            self.cache.put(digest, response)
            return response

        response = self._flight.run(digest, lookup, call)
        vec = np.asarray(json.loads(response), dtype=np.float64)
        self._vectors[digest] = vec
        return vec


class CachingChat(ChatProvider):
    """Wraps a chat provider with digest-keyed caching of completions."""

    def __init__(self, inner: ChatProvider, cache: ResponseCache | None = None):
        self.inner = inner
        self.name = inner.name
        self.max_concurrency = inner.max_concurrency
        self.prompt_char_budget = inner.prompt_char_budget
        self.is_mock = inner.is_mock
        self.cache = cache if cache is not None else ResponseCache()
        self._flight = _SingleFlight()

    def _digest(self, prompt: str) -> str:
        return request_digest(f"chat:{self.name}", prompt)

    def _complete(self, prompt: str) -> str:
        digest = self._digest(prompt)

        def lookup() -> str | None:
            return self.cache.get(digest)

        def call() -> str:
            response = self.inner.complete(prompt)
            self.cache.put(digest, response)
            return response

        return self._flight.run(digest, lookup, call)

    def complete_fresh(self, prompt: str) -> str:
        """Bypass the cached response and re-ask upstream, overwriting the entry.

        Used for one re-ask after an unparseable completion; normal calls keep
        the one-upstream-call-per-unique-request guarantee.
        """
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if len(prompt) > self.prompt_char_budget:
            raise ValueError("prompt exceeds provider budget")
        response = self.inner.complete(prompt)
        self.cache.put(self._digest(prompt), response)
        return response
