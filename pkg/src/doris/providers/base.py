"""Provider interfaces for text encoding and chat completion.

Every encoder returns unit-norm float vectors of a fixed dimension and is
deterministic per instance; every chat provider returns plain completion
text or raises a typed error. Pipeline code only ever sees these two
interfaces, so remote and local implementations are interchangeable.
"""

from __future__ import annotations

import abc

import numpy as np

DEFAULT_PROMPT_CHAR_BUDGET = 24_000
NORM_TOLERANCE = 1e-6


class ProviderError(RuntimeError):
    """Base class for provider failures."""


class TransportError(ProviderError):
    """Remote call failed after exhausting the retry policy (or non-retryably)."""


class ContextOverflowError(ProviderError):
    """Prompt exceeds the provider's context budget even after truncation."""


class EncoderProvider(abc.ABC):
    """Text-to-embedding interface.

    Attributes:
        name: identifies the cache namespace; two encoders with the same name
            must produce identical vectors.
        dim: output dimension, equal for all embeddings from one instance.
    """

    name: str = "encoder"
    dim: int = 0

    def encode(self, text: str) -> np.ndarray:
        """Encode text into a unit-norm vector of length `dim`."""
        if not text:
            raise ValueError("cannot encode empty text")
        vec = self._encode(text)
        if not np.all(np.isfinite(vec)):
            raise ProviderError(f"encoder {self.name!r} produced non-finite values")
        return vec

    @abc.abstractmethod
    def _encode(self, text: str) -> np.ndarray: ...


class ChatProvider(abc.ABC):
    """Chat-completion interface: one user prompt in, completion text out."""

    name: str = "chat"
    max_concurrency: int = 4
    prompt_char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET
    is_mock: bool = False

    def complete(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if len(prompt) > self.prompt_char_budget:
            raise ContextOverflowError(
                f"prompt of {len(prompt)} characters exceeds the "
                f"{self.prompt_char_budget}-character budget of {self.name!r}"
            )
        return self._complete(prompt)

    @abc.abstractmethod
    def _complete(self, prompt: str) -> str: ...


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity dot(a,b)/(|a||b|); symmetric, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("cosine_similarity requires finite inputs")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_similarity is undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))
