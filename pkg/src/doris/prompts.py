"""Prompt construction for the three LLM roles: symptom annotation of a single
post, longitudinal mood-course summarization, and final explanation text.

Builders own the truncation policy: when a prompt would exceed the provider's
character budget, the oldest posts (or oldest evidence items) are dropped
first. The extraction helpers are the inverse used by the offline mock
provider to recover the embedded content.
"""

from __future__ import annotations

import re
from typing import Sequence

from .core import Post, format_timestamp
from .providers.base import DEFAULT_PROMPT_CHAR_BUDGET, ContextOverflowError

ANNOTATION_PREFIX = "Assuming you are a psychiatrist specializing in depression. Given "

_ANNOTATION_SUFFIX = (
    ", please determine if this message includes any of the following states of the author:\n"
    "A. Depressive mood B. Loss of interest/pleasure C. Weight loss or gain "
    "D. Insomnia or hypersomnia E. Psychomotor agitation or retardation F. Fatigue "
    "G. Inappropriate guilt H. Decreased concentration I. Thoughts of suicide.\n"
    "If present, answer in the format of enclosed letters separated by commas, "
    "for example, (A, B, C). If none are present, respond with None."
)

MOOD_PREFIX = (
    "As a consulting psychiatrist, please conduct a longitudinal mood course analysis "
    "based on the following temporal sequence of personal expressions. For each entry, "
    "evaluate affect, emotional valence, and severity of mood states. Synthesize these "
    "observations into a clinical summary of mood progression, noting any patterns of "
    "persistence, fluctuation, or changes over time:\n"
)

EXPLANATION_PREFIX = "Assuming you are a psychiatrist specializing in depression.\n"
_EXPLANATION_MOOD_MARKER = "Here is a user's mood course: "
_EXPLANATION_EVIDENCE_MARKER = (
    "; below are posts from this user displaying symptoms of depression "
    "and the types of symptoms exhibited:"
)
_EXPLANATION_VERDICT_MARKER = (
    "this user has been determined by an automated depression detection system to be "
)
_EXPLANATION_SUFFIX = (
    "\nPlease consider the user's mood course and posts to generate an explanation "
    "for this judgment. Your explanation should be grounded in concrete evidence."
)


def build_annotation_prompt(text: str) -> str:
    """Single-post symptom annotation prompt; the post text replaces the slot."""
    return ANNOTATION_PREFIX + text + _ANNOTATION_SUFFIX


def extract_annotation_text(prompt: str) -> str:
    """Recover the post text embedded by build_annotation_prompt."""
    body = prompt[len(ANNOTATION_PREFIX):]
    idx = body.rfind(_ANNOTATION_SUFFIX)
    return body[:idx] if idx >= 0 else body


def _mood_entry(post: Post) -> str:
    return f"Time: {format_timestamp(post.timestamp)}, Post: {post.text}"


def build_mood_prompt(
    posts: Sequence[Post], char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET
) -> str:
    """Mood-course prompt over time-sorted posts.

    Drops the oldest posts first if the prompt would exceed `char_budget`;
    raises ContextOverflowError if even a single post cannot fit.
    """
    if not posts:
        raise ValueError("mood prompt requires at least one post")
    entries = [_mood_entry(p) for p in posts]
    while True:
        prompt = MOOD_PREFIX + ", ".join(entries)
        if len(prompt) <= char_budget:
            return prompt
        if len(entries) == 1:
            raise ContextOverflowError(
                f"mood prompt exceeds the {char_budget}-character budget with a single post"
            )
        entries.pop(0)


_MOOD_ENTRY_RE = re.compile(r"Time: (.*?), Post: (.*?)(?=, Time: |\Z)", re.DOTALL)


def extract_mood_entries(prompt: str) -> list[tuple[str, str]]:
    """Recover (timestamp, text) pairs embedded by build_mood_prompt."""
    body = prompt[len(MOOD_PREFIX):] if prompt.startswith(MOOD_PREFIX) else prompt
    return [(m.group(1), m.group(2)) for m in _MOOD_ENTRY_RE.finditer(body)]


def format_evidence_item(letters: str, timestamp: str, excerpt: str) -> str:
    return f"({letters}) Time: {timestamp}, Post: {excerpt}"


def build_explanation_prompt(
    mood_course: str,
    evidence: Sequence[str],
    verdict: int,
    char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET,
) -> str:
    """Explanation prompt combining the mood course, evidence lines (most
    recent first) and the classifier verdict.

    Oldest evidence items are dropped first when over `char_budget`.
    """
    verdict_word = "depressed" if verdict == 1 else "normal"
    items = list(evidence)
    while True:
        evidence_block = "\n".join(items) if items else "(none)"
        prompt = (
            EXPLANATION_PREFIX
            + _EXPLANATION_MOOD_MARKER
            + mood_course
            + _EXPLANATION_EVIDENCE_MARKER
            + "\n"
            + evidence_block
            + "\n"
            + _EXPLANATION_VERDICT_MARKER
            + verdict_word
            + "."
            + _EXPLANATION_SUFFIX
        )
        if len(prompt) <= char_budget:
            return prompt
        if not items:
            raise ContextOverflowError(
                f"explanation prompt exceeds the {char_budget}-character budget "
                "with no evidence items left to drop"
            )
        items.pop()


def extract_explanation_parts(prompt: str) -> tuple[str, str, str]:
    """Recover (mood course, evidence block, verdict word) from an explanation prompt."""
    _, _, rest = prompt.partition(_EXPLANATION_MOOD_MARKER)
    mood, _, rest = rest.partition(_EXPLANATION_EVIDENCE_MARKER)
    evidence, _, rest = rest.partition(_EXPLANATION_VERDICT_MARKER)
    verdict_word = rest.split(".", 1)[0].strip()
    return mood, evidence.strip(), verdict_word


def prompt_kind(prompt: str) -> str:
    """Classify a prompt as 'annotation', 'mood', 'explanation' or 'other'."""
    if prompt.startswith(EXPLANATION_PREFIX) and _EXPLANATION_MOOD_MARKER in prompt:
        return "explanation"
    if prompt.startswith(ANNOTATION_PREFIX):
        return "annotation"
    if prompt.startswith(MOOD_PREFIX):
        return "mood"
    return "other"
