"""Diagnostic-criteria feature extraction.

Posts are risk-scored by their mean cosine similarity to the nine symptom
templates; only the top-k% riskiest posts (corpus-wide) are sent to the chat
provider for symptom annotation, everything else keeps a zero vector. The
per-user feature is the entry-wise mean of symptom vectors over ALL posts,
so unannotated posts dilute it by design.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import prompts
from .core import N_CRITERIA, SYMPTOM_CRITERIA, ZERO_SYMPTOMS, Post, SymptomVector, UserRecord
from .providers.base import ChatProvider, EncoderProvider, cosine_similarity
from .providers.cache import CachingChat

logger = logging.getLogger(__name__)


class AnnotationParseError(ValueError):
    """Raised when a completion does not match the annotation grammar."""


@dataclass(frozen=True)
class RiskScore:
    post_id: str
    score: float  # mean cosine to the nine symptom templates, in [-1, 1]


@dataclass(frozen=True)
class AnnotationResult:
    post_id: str
    raw: str
    vector: SymptomVector
    source: str  # "llm" | "mock" | "skipped_zero"


@dataclass(frozen=True)
class CriteriaFeature:
    user_id: str
    values: tuple[float, ...]  # 9 entries in [0, 1]


class AnnotationStats:
    """Thread-safe counter for degraded (unparseable) annotations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.parse_warnings = 0

    def record_parse_warning(self) -> None:
        with self._lock:
            self.parse_warnings += 1


def selection_count(percent: float, n: int) -> int:
    """floor(percent/100 * n), with exact integer arithmetic for integral percents."""
    if not 0.0 <= percent <= 100.0:
        raise ValueError(f"percent must be in [0, 100], got {percent}")
    if float(percent).is_integer():
        return (int(percent) * n) // 100
    return int(np.floor(percent * n / 100.0))


def risk_score(post: Post, symptom_embeddings: np.ndarray, encoder: EncoderProvider) -> RiskScore:
    """Mean cosine similarity between the post embedding and the nine templates."""
    return RiskScore(post_id=post.post_id, score=text_risk_score(post.text, symptom_embeddings, encoder))


def text_risk_score(text: str, symptom_embeddings: np.ndarray, encoder: EncoderProvider) -> float:
    if symptom_embeddings.shape[0] != N_CRITERIA:
        raise ValueError(f"expected {N_CRITERIA} symptom embeddings, got {symptom_embeddings.shape}")
    h = encoder.encode(text)
    sims = [cosine_similarity(h, symptom_embeddings[i]) for i in range(N_CRITERIA)]
    return float(np.mean(sims))


def select_top_k(scores: Sequence[RiskScore], k: float) -> set[str]:
    """post_ids of the floor(k% * n) highest-scoring posts, corpus-wide.

    Ties break by (score descending, post_id ascending) so the selection is
    deterministic and monotone in k.
    """
    if not scores:
        raise ValueError("select_top_k requires a non-empty score list")
    count = selection_count(k, len(scores))
    ranked = sorted(scores, key=lambda r: (-r.score, r.post_id))
    return {r.post_id for r in ranked[:count]}


def select_top_k_ids(post_ids: np.ndarray, scores: np.ndarray, k: float) -> set[str]:
    """Vectorized select_top_k over parallel id/score arrays; same tie-break."""
    if post_ids.size == 0:
        raise ValueError("select_top_k requires a non-empty score list")
    count = selection_count(k, int(post_ids.size))
    if count == 0:
        return set()
    order = np.lexsort((post_ids, -scores))
    return set(post_ids[order[:count]].tolist())


def format_annotation(vector: SymptomVector) -> str:
    """Inverse of parse_annotation: '(A, D)' style, or 'None' for all zeros."""
    letters = [SYMPTOM_CRITERIA[i] for i, flag in enumerate(vector) if flag]
    if not letters:
        return "None"
    return "(" + ", ".join(letters) + ")"


def parse_annotation(raw: str) -> SymptomVector:
    """Parse a completion of the form 'None' or '(A, B, C)' into flags.

    Case-insensitive and whitespace-tolerant; letters outside A-I or
    duplicated letters are a parse error.
    """
    text = raw.strip()
    if text.lower() == "none":
        return ZERO_SYMPTOMS
    if not (text.startswith("(") and text.endswith(")")):
        raise AnnotationParseError(f"annotation not in expected format: {raw!r}")
    flags = [0] * N_CRITERIA
    for part in text[1:-1].split(","):
        letter = part.strip().upper()
        index = SYMPTOM_CRITERIA.find(letter)
        if len(letter) != 1 or index < 0:
            raise AnnotationParseError(f"invalid criteria letter {part.strip()!r} in {raw!r}")
        if flags[index]:
            raise AnnotationParseError(f"duplicated criteria letter {letter!r} in {raw!r}")
        flags[index] = 1
    return tuple(flags)


def annotate_post(
    post: Post, chat: ChatProvider, stats: AnnotationStats | None = None
) -> AnnotationResult:
    """Ask the chat provider to annotate one post against the nine criteria.

    An unparseable completion triggers exactly one re-ask (bypassing the
    response cache where possible); if that also fails to parse, the result
    degrades to all zeros and the parse-warning counter is incremented.
    """
    prompt = prompts.build_annotation_prompt(post.text)
    source = "mock" if chat.is_mock else "llm"
    raw = chat.complete(prompt)
    try:
        return AnnotationResult(post.post_id, raw, parse_annotation(raw), source)
    except AnnotationParseError:
        pass
    if isinstance(chat, CachingChat):
        raw = chat.complete_fresh(prompt)
    else:
        raw = chat.complete(prompt)
    try:
        return AnnotationResult(post.post_id, raw, parse_annotation(raw), source)
    except AnnotationParseError:
        logger.warning("unparseable annotation for post %s: %r", post.post_id, raw[:80])
        if stats is not None:
            stats.record_parse_warning()
        return AnnotationResult(post.post_id, raw, ZERO_SYMPTOMS, source)


def skipped_annotation(post_id: str) -> AnnotationResult:
    return AnnotationResult(post_id=post_id, raw="", vector=ZERO_SYMPTOMS, source="skipped_zero")


def criteria_feature(
    user: UserRecord, annotations: Mapping[str, SymptomVector]
) -> CriteriaFeature:
    """Entry-wise mean of symptom vectors over all N posts of the user;
    posts absent from `annotations` contribute zero vectors."""
    if not user.posts:
        raise ValueError(f"user {user.user_id!r} has no posts")
    sums = [0] * N_CRITERIA
    for post in user.posts:
        vector = annotations.get(post.post_id, ZERO_SYMPTOMS)
        for i, flag in enumerate(vector):
            sums[i] += flag
    n = len(user.posts)
    return CriteriaFeature(user_id=user.user_id, values=tuple(s / n for s in sums))


def annotations_as_map(results: Iterable[AnnotationResult]) -> dict[str, SymptomVector]:
    return {r.post_id: r.vector for r in results}
