"""Deterministic offline providers.

HashingEncoder is a signed feature-hashing encoder over word unigrams and
bigrams; it gives texts that share vocabulary a higher cosine similarity, so
the embedding-similarity filters behave sensibly without a neural model.

MockChat answers the three pipeline prompts by rule: symptom annotation via
per-criterion keyword tables drawn from the symptom-template vocabulary,
mood-course prompts via a fixed summary naming the dominant emotion signals,
and explanation prompts via a templated paragraph citing the evidence.
"""

from __future__ import annotations

import hashlib
import re
import threading

import numpy as np

from .. import prompts
from ..core import SYMPTOM_CRITERIA
from .base import ChatProvider, EncoderProvider

_TOKEN_RE = re.compile(r"[a-z0-9']+")

# Keyword tables for the mock annotator, one entry per diagnostic criterion,
# drawn from the symptom-template vocabulary. Every template expression
# matches at least one keyword of its own criterion (pinned by a test).
SYMPTOM_KEYWORDS: dict[str, tuple[str, ...]] = {
    "A": ("feel low", "unhappy", "joyless", "depressed", "oppressed", "gloomy",
          "disappointed", "melancholic", "sad", "distressed", "heartbroken",
          "sense of loss", "heavy-hearted", "despair", "despondency", "sorrowful",
          "urge to cry", "inner pain", "emptiness"),
    "B": ("lost interest", "indifferent", "bored", "unconcerned", "lack enthusiasm",
          "unmotivated", "no interest", "uninteresting", "lack motivation",
          "reduced pleasure", "cannot experience happiness", "dull", "muster energy"),
    "C": ("appetite", "feel full", "nausea", "weight loss", "swallowing",
          "emaciation", "weight gain", "weight increase"),
    "D": ("sleep", "sleeping", "insomnia", "asleep", "stay up late", "hypersomnia",
          "oversleeping", "sleepiness", "tossing and turning"),
    "E": ("neurotic", "agitated", "unstable", "impatient", "anxious", "restless",
          "tense", "irritable", "uneasy", "fidgety", "impulsive", "out of control"),
    "F": ("fatigued", "fatigue", "listless", "exhausted", "weakened",
          "lacking in energy", "dispirited", "tired", "powerless", "weary",
          "muster strength", "heavy body", "vitality", "drowsy", "lethargic"),
    "G": ("self-denial", "lack of confidence", "self-doubt", "inferiority",
          "disappointment", "guilt", "guilty", "self-evaluation", "self-blame",
          "belittle", "incompetent", "worthless", "failure", "blame myself",
          "my fault", "disappointed in my expectations"),
    "H": ("slow thinking", "concentrating", "concentrate", "concentration",
          "judgment", "memory", "distractibility", "indecision", "attention",
          "focus", "cognitive", "hesitancy", "spaced out", "difficulty thinking"),
    "I": ("death", "suicide", "suicidal", "self-harm", "self-harming",
          "self-injury", "self-mutilation", "ending my life", "cutting wrists",
          "overdosing"),
}

# Emotion keyword tables for the mock mood-course summary, one per emotion
# template, in the fixed emotion order.
EMOTION_KEYWORDS: dict[str, tuple[str, ...]] = {
    "anger": ("angry", "mad", "agitated", "annoyed", "indignant", "irritable",
              "furious", "disgusted", "incensed", "enraged", "irritated", "vexed",
              "resentful", "rage", "glaring", "shouting", "screaming", "insulting",
              "hating", "bellowing", "outraged", "ranting", "detesting", "fuming"),
    "disgust": ("detest", "loathe", "disgust", "abhor", "hate", "tire of",
                "nauseated", "aversion", "despise", "scorn", "disdain", "reject",
                "repugnant", "dislike", "revulsion", "abominate", "displeasure",
                "weary of", "impatient with", "dismiss", "look down upon"),
    "anxiety": ("anxious", "uneasy", "worried", "concerned", "nervous", "restless",
                "panicked", "fretful", "afraid", "uncertain", "apprehensive",
                "tense", "jittery", "indecisive", "fearful", "flustered",
                "melancholic", "frightened", "doubts", "brooding", "terrified",
                "distrustful", "on edge"),
    "happiness": ("happy", "joyful", "glad", "blissful", "merry", "satisfied",
                  "delighted", "elated", "pleased", "laughing", "cheerful",
                  "excited", "jubilant", "optimistic", "enthusiastic", "uplifted",
                  "exuberant", "overjoyed", "smile on my face",
                  "pleasantly surprised", "beaming with joy", "blooms with happiness"),
    "sadness": ("sad", "sorrowful", "melancholic", "in pain", "lost", "pessimistic",
                "tearful", "grieving", "mournful", "depressed", "suicidal",
                "heartbroken", "devastated", "upset", "crying", "saddened",
                "disconsolate", "dejected", "lamenting", "desolate", "gloomy",
                "weeping", "desperate", "indignant"),
}


def _keyword_regex(keywords: tuple[str, ...]) -> re.Pattern[str]:
    alternatives = "|".join(re.escape(k) for k in keywords)
    return re.compile(rf"\b(?:{alternatives})\b")

_SYMPTOM_RES = {c: _keyword_regex(k) for c, k in SYMPTOM_KEYWORDS.items()}
_EMOTION_RES = {e: _keyword_regex(k) for e, k in EMOTION_KEYWORDS.items()}

_EVIDENCE_LETTERS_RE = re.compile(r"\(([A-I](?:, [A-I])*)\)")


def match_symptoms(text: str) -> list[str]:
    """Criteria letters whose keyword table matches the text, in A-I order."""
    lowered = text.lower()
    return [c for c in SYMPTOM_CRITERIA if _SYMPTOM_RES[c].search(lowered)]


def match_emotions(text: str) -> list[str]:
    """Emotion names whose keyword table matches the text, in template order."""
    lowered = text.lower()
    return [e for e in EMOTION_KEYWORDS if _EMOTION_RES[e].search(lowered)]


class HashingEncoder(EncoderProvider):
    """Signed hashing of lowercased word unigrams+bigrams into `dim` buckets,
    then L2 normalization. Deterministic given (dim, seed)."""

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 8:
            raise ValueError(f"encoder dim must be at least 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.name = f"hash-enc-d{dim}-s{seed}"
        self._key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
        self.calls = 0
        self._calls_lock = threading.Lock()

    def _bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=9, key=self._key).digest()
        index = int.from_bytes(digest[:8], "little") % self.dim
        sign = 1.0 if digest[8] & 1 else -1.0
        return index, sign

    def _encode(self, text: str) -> np.ndarray:
        with self._calls_lock:
            self.calls += 1
        tokens = _TOKEN_RE.findall(text.lower())
        vec = np.zeros(self.dim, dtype=np.float64)
        for feature in tokens:
            index, sign = self._bucket(feature)
            vec[index] += sign
        for a, b in zip(tokens, tokens[1:]):
            index, sign = self._bucket(f"{a} {b}")
            vec[index] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # Either no tokens or full sign cancellation: pin to one bucket.
            index, _ = self._bucket(f"\x00raw\x00{text}")
            vec[index] = 1.0
            norm = 1.0
        return vec / norm


def deterministic_test_encoder(dim: int = 256, seed: int = 0) -> HashingEncoder:
    return HashingEncoder(dim=dim, seed=seed)


class MockChat(ChatProvider):
    """Offline stand-in for the chat provider; answers all three prompt kinds
    deterministically."""

    name = "mock-annotator"
    is_mock = True

    def __init__(self, max_concurrency: int = 4):
        self.max_concurrency = max_concurrency
        self.calls = 0
        self._calls_lock = threading.Lock()

    def _complete(self, prompt: str) -> str:
        with self._calls_lock:
            self.calls += 1
        kind = prompts.prompt_kind(prompt)
        if kind == "annotation":
            return self._annotate(prompts.extract_annotation_text(prompt))
        if kind == "mood":
            return self._summarize(prompts.extract_mood_entries(prompt))
        if kind == "explanation":
            return self._explain(*prompts.extract_explanation_parts(prompt))
        return "Acknowledged."

    @staticmethod
    def _annotate(text: str) -> str:
        letters = match_symptoms(text)
        if not letters:
            return "None"
        return "(" + ", ".join(letters) + ")"

    @staticmethod
    def _summarize(entries: list[tuple[str, str]]) -> str:
        counts = {emotion: 0 for emotion in EMOTION_KEYWORDS}
        for _, text in entries:
            for emotion in match_emotions(text):
                counts[emotion] += 1
        observed = [(emotion, n) for emotion, n in counts.items() if n > 0]
        if not observed:
            return (
                f"Mood course over {len(entries)} dated expressions: no marked "
                "affective signals; mood presents as stable and neutral across the period."
            )
        dominant = max(observed, key=lambda item: item[1])[0]
        signals = ", ".join(f"{emotion} in {n} entries" for emotion, n in observed)
        return (
            f"Mood course over {len(entries)} dated expressions: the dominant affect "
            f"is {dominant}. Signals observed: {signals}. The pattern persists across "
            "the observed period with fluctuations tracking the flagged entries."
        )

    @staticmethod
    def _explain(mood_course: str, evidence: str, verdict_word: str) -> str:
        letters: set[str] = set()
        for group in _EVIDENCE_LETTERS_RE.findall(evidence):
            letters.update(part.strip() for part in group.split(","))
        mood_clause = mood_course.strip()
        if len(mood_clause) > 200:
            mood_clause = mood_clause[:200].rstrip() + "..."
        if letters:
            cited = ", ".join(sorted(letters))
            return (
                f"The automated judgment of {verdict_word} is grounded in the cited posts, "
                f"which document diagnostic criteria {cited}. Together with the mood course "
                f"({mood_clause}) these observations form consistent, concrete evidence "
                "for the assessment."
            )
        return (
            f"The automated judgment of {verdict_word} rests on the summarized mood course "
            f"({mood_clause}); no symptom-annotated posts were available as additional evidence."
        )


def mock_annotator(max_concurrency: int = 4) -> MockChat:
    return MockChat(max_concurrency=max_concurrency)
