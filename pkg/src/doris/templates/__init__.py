"""Registry of the nine symptom templates and five emotion templates.

Templates ship as two plain-text files next to this module so clinicians can
review or replace them without code changes; a checksum test pins the shipped
text. Embedding them is a pure function of (encoder, template text) and goes
through the caching encoder, so re-embedding costs nothing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..core import SYMPTOM_CRITERIA
from ..providers.base import EncoderProvider

EMOTIONS = ("anger", "disgust", "anxiety", "happiness", "sadness")

SYMPTOMS_FILE = "symptoms.txt"
EMOTIONS_FILE = "emotions.txt"


@dataclass(frozen=True)
class SymptomTemplate:
    criterion: str  # one of A-I
    name: str
    text: str


@dataclass(frozen=True)
class EmotionTemplate:
    emotion: str
    text: str


@dataclass(frozen=True)
class TemplateRegistry:
    symptoms: tuple[SymptomTemplate, ...]
    emotions: tuple[EmotionTemplate, ...]
    # Row i embeds symptom/emotion template i; set by embed_templates.
    symptom_embeddings: np.ndarray | None = None
    emotion_embeddings: np.ndarray | None = None


def default_templates_dir() -> Path:
    return Path(__file__).resolve().parent


def _parse_blocks(path: Path) -> list[tuple[str, str]]:
    """Parse (header, text) blocks: header line, then the template text."""
    blocks: list[tuple[str, str]] = []
    header: str | None = None
    body: list[str] = []
    for line in path.read_text(encoding="utf-8").splitlines() + [""]:
        if line.startswith("#"):
            continue
        if not line.strip():
            if header is not None:
                blocks.append((header, " ".join(body).strip()))
                header, body = None, []
            continue
        if header is None:
            header = line.strip()
        else:
            body.append(line.strip())
    return blocks


def load_templates(directory: str | Path | None = None) -> TemplateRegistry:
    """Load both template files, validating cardinality and fixed order."""
    directory = Path(directory) if directory is not None else default_templates_dir()

    symptoms: list[SymptomTemplate] = []
    for header, text in _parse_blocks(directory / SYMPTOMS_FILE):
        letter, _, name = header.partition(". ")
        symptoms.append(SymptomTemplate(criterion=letter, name=name, text=text))
    letters = "".join(t.criterion for t in symptoms)
    if letters != SYMPTOM_CRITERIA:
        raise ValueError(
            f"symptom templates must cover {SYMPTOM_CRITERIA} in order, got {letters!r}"
        )
    if any(not t.text for t in symptoms):
        raise ValueError("symptom template with empty text")

    emotions: list[EmotionTemplate] = []
    for header, text in _parse_blocks(directory / EMOTIONS_FILE):
        _, _, name = header.partition(". ")
        emotions.append(EmotionTemplate(emotion=name, text=text))
    names = tuple(t.emotion for t in emotions)
    if names != EMOTIONS:
        raise ValueError(f"emotion templates must be {EMOTIONS} in order, got {names!r}")
    if any(not t.text for t in emotions):
        raise ValueError("emotion template with empty text")

    return TemplateRegistry(symptoms=tuple(symptoms), emotions=tuple(emotions))


def embed_templates(registry: TemplateRegistry, encoder: EncoderProvider) -> TemplateRegistry:
    """Return a registry copy with one unit-norm embedding row per template."""
    sym = np.stack([encoder.encode(t.text) for t in registry.symptoms])
    emo = np.stack([encoder.encode(t.text) for t in registry.emotions])
    return replace(registry, symptom_embeddings=sym, emotion_embeddings=emo)


def template_expressions(text: str) -> list[str]:
    """Split a template into its comma-separated expressions.

    Leading `and`/`or` connectives and the trailing period are stripped;
    this is the phrase vocabulary the synthetic generator injects from.
    """
    out: list[str] = []
    for chunk in text.split(","):
        phrase = chunk.strip().rstrip(".").strip()
        for connective in ("and ", "or "):
            if phrase.startswith(connective):
                phrase = phrase[len(connective):]
        if phrase:
            out.append(phrase)
    return out


def template_file_digests(directory: str | Path | None = None) -> dict[str, str]:
    """sha256 of each shipped template file, keyed by filename."""
    directory = Path(directory) if directory is not None else default_templates_dir()
    digests = {}
    for fname in (SYMPTOMS_FILE, EMOTIONS_FILE):
        digests[fname] = hashlib.sha256((directory / fname).read_bytes()).hexdigest()
    return digests
