"""Evidence-backed explanation reports.

A report bundles the classifier verdict with the concrete evidence behind
it: the symptom-annotated posts (most recent first, excerpts capped) and the
mood-course narrative, plus an explanation paragraph from the chat provider.
Explanation failures never alter the verdict; the report is emitted with a
placeholder instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import prompts
from .core import SymptomVector, UserRecord, format_timestamp
from .criteria import format_annotation
from .gbt import BoostedModel
from .isotonic import IsotonicCalibrator
from .providers.base import ChatProvider, ProviderError

logger = logging.getLogger(__name__)

EXCERPT_CAP = 280
EXPLANATION_UNAVAILABLE = "UNAVAILABLE"


@dataclass(frozen=True)
class EvidenceItem:
    post_id: str
    excerpt: str
    criteria: str  # e.g. "A, D"
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "excerpt": self.excerpt,
            "criteria": self.criteria,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class ExplanationReport:
    user_id: str
    verdict: str  # "depressed" | "normal"
    probability: float
    symptom_evidence: tuple[EvidenceItem, ...]
    mood_course: str
    explanation: str

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "verdict": self.verdict,
            "probability": self.probability,
            "symptom_evidence": [e.to_dict() for e in self.symptom_evidence],
            "mood_course": self.mood_course,
            "explanation": self.explanation,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExplanationReport":
        return cls(
            user_id=obj["user_id"],
            verdict=obj["verdict"],
            probability=obj["probability"],
            symptom_evidence=tuple(EvidenceItem(**e) for e in obj["symptom_evidence"]),
            mood_course=obj["mood_course"],
            explanation=obj["explanation"],
        )


def _excerpt(text: str) -> str:
    if len(text) <= EXCERPT_CAP:
        return text
    return text[: EXCERPT_CAP - 3].rstrip() + "..."


def collect_evidence(
    user: UserRecord, annotations: Mapping[str, SymptomVector]
) -> tuple[EvidenceItem, ...]:
    """Evidence items for every post with a nonzero symptom vector, most
    recent first. Criteria strings come straight from the stored vectors, so
    no letter can appear that was not annotated."""
    items = []
    for post in reversed(user.posts):
        vector = annotations.get(post.post_id)
        if vector is None or not any(vector):
            continue
        letters = format_annotation(vector).strip("()")
        items.append(
            EvidenceItem(
                post_id=post.post_id,
                excerpt=_excerpt(post.text),
                criteria=letters,
                timestamp=format_timestamp(post.timestamp),
            )
        )
    return tuple(items)


def build_explanation_prompt(
    mood_course: str,
    evidence: Sequence[EvidenceItem],
    verdict: int,
    char_budget: int | None = None,
) -> str:
    """Render evidence lines and substitute everything into the explanation
    prompt; oldest evidence is dropped first if the budget is exceeded."""
    lines = [
        prompts.format_evidence_item(e.criteria, e.timestamp, e.excerpt) for e in evidence
    ]
    kwargs = {} if char_budget is None else {"char_budget": char_budget}
    return prompts.build_explanation_prompt(mood_course, lines, verdict, **kwargs)


def explain_user(
    user: UserRecord,
    fused: np.ndarray,
    model: BoostedModel,
    calibrator: IsotonicCalibrator,
    mood_course: str,
    annotations: Mapping[str, SymptomVector],
    chat: ChatProvider,
    threshold: float = 0.5,
) -> ExplanationReport:
    """Build the full report for one featurized user.

    The verdict comes from the calibrated probability; the explanation text
    comes from the chat provider and degrades to a placeholder on provider
    failure without touching the verdict.
    """
    probability = calibrator.probability(model.raw_score(fused))
    verdict = 1 if probability >= threshold else 0
    evidence = collect_evidence(user, annotations)
    prompt = build_explanation_prompt(
        mood_course, evidence, verdict, char_budget=chat.prompt_char_budget
    )
    try:
        explanation = chat.complete(prompt)
    except ProviderError as exc:
        logger.warning("explanation unavailable for user %s: %s", user.user_id, exc)
        explanation = EXPLANATION_UNAVAILABLE
    return ExplanationReport(
        user_id=user.user_id,
        verdict="depressed" if verdict == 1 else "normal",
        probability=float(probability),
        symptom_evidence=evidence,
        mood_course=mood_course,
        explanation=explanation,
    )


def write_report(report: ExplanationReport, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{report.user_id}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_index(reports: Sequence[ExplanationReport], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {
        r.user_id: {"file": f"{r.user_id}.json", "verdict": r.verdict, "probability": r.probability}
        for r in sorted(reports, key=lambda r: r.user_id)
    }
    path = directory / "index.json"
    path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
