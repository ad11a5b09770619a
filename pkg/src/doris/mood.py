"""Mood-course representation.

Per-emotion top-m% filtering picks the corpus's most emotionally charged
posts; each user's slice of that set is summarized by the chat provider into
a mood-course narrative, and the final representation blends the summary
embedding with the mean embedding of the user's emotional posts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import prompts
from .core import Post, UserRecord
from .criteria import selection_count
from .providers.base import ChatProvider, EncoderProvider, cosine_similarity
from .templates import EMOTIONS

NO_EMOTIONAL_POSTS = "NO_EMOTIONAL_POSTS"


@dataclass(frozen=True)
class EmotionScores:
    post_id: str
    scores: tuple[float, ...]  # cosine to each emotion template, fixed order


@dataclass(frozen=True)
class MoodCourse:
    user_id: str
    emotional_posts: tuple[str, ...]  # post_ids, time-sorted
    summary_text: str
    representation: np.ndarray


def emotion_scores(post: Post, emotion_embeddings: np.ndarray, encoder: EncoderProvider) -> EmotionScores:
    return EmotionScores(
        post_id=post.post_id,
        scores=text_emotion_scores(post.text, emotion_embeddings, encoder),
    )


def text_emotion_scores(
    text: str, emotion_embeddings: np.ndarray, encoder: EncoderProvider
) -> tuple[float, ...]:
    if emotion_embeddings.shape[0] != len(EMOTIONS):
        raise ValueError(f"expected {len(EMOTIONS)} emotion embeddings, got {emotion_embeddings.shape}")
    h = encoder.encode(text)
    return tuple(cosine_similarity(h, emotion_embeddings[j]) for j in range(len(EMOTIONS)))


def select_emotional(scores: Sequence[EmotionScores], m: float) -> set[str]:
    """Union over emotions of the floor(m% * n) posts most similar to each
    emotion template; ties break by (score descending, post_id ascending)."""
    if not scores:
        raise ValueError("select_emotional requires a non-empty score list")
    count = selection_count(m, len(scores))
    selected: set[str] = set()
    for j in range(len(EMOTIONS)):
        ranked = sorted(scores, key=lambda e: (-e.scores[j], e.post_id))
        selected.update(e.post_id for e in ranked[:count])
    return selected


def select_emotional_ids(post_ids: np.ndarray, scores: np.ndarray, m: float) -> set[str]:
    """Vectorized select_emotional over an (n, 5) score matrix; same tie-break."""
    if post_ids.size == 0:
        raise ValueError("select_emotional requires a non-empty score list")
    count = selection_count(m, int(post_ids.size))
    selected: set[str] = set()
    if count == 0:
        return selected
    for j in range(scores.shape[1]):
        order = np.lexsort((post_ids, -scores[:, j]))
        selected.update(post_ids[order[:count]].tolist())
    return selected


def emotional_posts(user: UserRecord, emotional_ids: set[str]) -> tuple[Post, ...]:
    """The user's posts that made the emotional set, still time-sorted."""
    return tuple(p for p in user.posts if p.post_id in emotional_ids)


def summarize_mood_course(user: UserRecord, emotional_ids: set[str], chat: ChatProvider) -> str:
    """Chat-provider narrative over the user's emotional posts in time order.

    Users with no emotional posts get the fixed sentinel without any
    provider call.
    """
    posts = emotional_posts(user, emotional_ids)
    if not posts:
        return NO_EMOTIONAL_POSTS
    prompt = prompts.build_mood_prompt(posts, char_budget=chat.prompt_char_budget)
    return chat.complete(prompt)


def mood_representation(
    summary: str,
    emotional_embeddings: Sequence[np.ndarray],
    alpha: float,
    beta: float,
    encoder: EncoderProvider,
) -> np.ndarray:
    """alpha * encode(summary) + beta * mean(emotional post embeddings).

    With no emotional posts the representation is the zero vector; nothing
    is encoded on that path.
    """
    if alpha < 0 or beta < 0:
        raise ValueError(f"alpha and beta must be non-negative, got {alpha}, {beta}")
    if not emotional_embeddings:
        return np.zeros(encoder.dim, dtype=np.float64)
    summary_embedding = encoder.encode(summary)
    mean_embedding = np.mean(np.stack(emotional_embeddings), axis=0)
    return alpha * summary_embedding + beta * mean_embedding
