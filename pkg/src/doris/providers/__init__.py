"""Pluggable text-encoder and chat-completion providers with caching."""

from .base import (
    ChatProvider,
    ContextOverflowError,
    EncoderProvider,
    ProviderError,
    TransportError,
    cosine_similarity,
)
from .cache import CachingChat, CachingEncoder, ResponseCache, request_digest
from .local import (
    EMOTION_KEYWORDS,
    SYMPTOM_KEYWORDS,
    HashingEncoder,
    MockChat,
    deterministic_test_encoder,
    match_emotions,
    match_symptoms,
    mock_annotator,
)
from .remote import API_KEY_ENV, RemoteChat, RemoteEncoder

__all__ = [
    "API_KEY_ENV",
    "CachingChat",
    "CachingEncoder",
    "ChatProvider",
    "ContextOverflowError",
    "EMOTION_KEYWORDS",
    "EncoderProvider",
    "HashingEncoder",
    "MockChat",
    "ProviderError",
    "RemoteChat",
    "RemoteEncoder",
    "ResponseCache",
    "SYMPTOM_KEYWORDS",
    "TransportError",
    "cosine_similarity",
    "deterministic_test_encoder",
    "match_emotions",
    "match_symptoms",
    "mock_annotator",
    "request_digest",
]
