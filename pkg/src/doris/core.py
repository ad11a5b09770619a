"""Domain types and dataset IO for user post histories.

A dataset is JSONL, one user per line:

    {"user_id": "...", "label": 0|1|null,
     "posts": [{"post_id": "...", "text": "...", "timestamp": "2023-01-31T12:00:00Z"}, ...]}

All types are immutable values; posts inside a record are kept sorted by
(timestamp, post_id) so every downstream stage sees a total order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

DATASET_SCHEMA_VERSION = "1"

# Six months of history, fixed as a day count so the cutoff is unambiguous.
DEFAULT_HISTORY_WINDOW = timedelta(days=183)

# Canonical index order of the nine depression-symptom flags.
SYMPTOM_CRITERIA = "ABCDEFGHI"
N_CRITERIA = len(SYMPTOM_CRITERIA)

SymptomVector = tuple[int, ...]

ZERO_SYMPTOMS: SymptomVector = (0,) * N_CRITERIA


class DatasetError(ValueError):
    """Raised when a dataset file violates the schema."""


def as_symptom_vector(flags: Iterable[int]) -> SymptomVector:
    """Validate and freeze a 9-entry binary symptom vector."""
    vec = tuple(int(f) for f in flags)
    if len(vec) != N_CRITERIA:
        raise ValueError(f"symptom vector must have {N_CRITERIA} entries, got {len(vec)}")
    if any(f not in (0, 1) for f in vec):
        raise ValueError(f"symptom vector entries must be 0 or 1, got {vec}")
    return vec


@dataclass(frozen=True)
class Post:
    post_id: str
    text: str
    timestamp: datetime  # always timezone-aware UTC


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    posts: tuple[Post, ...]
    label: int | None = None


@dataclass(frozen=True)
class Prediction:
    """Classifier output for one user: raw ensemble score, calibrated probability,
    and the thresholded class."""

    user_id: str
    raw_score: float
    probability: float
    label: int


def parse_timestamp(raw: str) -> datetime:
    """Parse an ISO 8601 instant into an aware UTC datetime."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    """Canonical ISO 8601 form with a Z suffix; fractional seconds only if nonzero."""
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def _sorted_posts(posts: Iterable[Post]) -> tuple[Post, ...]:
    return tuple(sorted(posts, key=lambda p: (p.timestamp, p.post_id)))


def _parse_user(obj: dict, line_no: int) -> tuple[UserRecord, int]:
    """Build one UserRecord from a decoded JSON object.

    Returns the record plus the number of empty-text posts that were dropped.
    """
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_no}: expected a JSON object, got {type(obj).__name__}")
    user_id = obj.get("user_id")
    if not isinstance(user_id, str) or not user_id:
        raise DatasetError(f"line {line_no}: missing or invalid user_id")
    label = obj.get("label")
    if label not in (0, 1, None):
        raise DatasetError(f"line {line_no}: label for user {user_id!r} must be 0, 1 or null")
    raw_posts = obj.get("posts")
    if not isinstance(raw_posts, list):
        raise DatasetError(f"line {line_no}: posts for user {user_id!r} must be a list")

    posts: list[Post] = []
    seen_post_ids: set[str] = set()
    dropped = 0
    for entry in raw_posts:
        if not isinstance(entry, dict):
            raise DatasetError(f"line {line_no}: post entries for user {user_id!r} must be objects")
        post_id = entry.get("post_id")
        if not isinstance(post_id, str) or not post_id:
            raise DatasetError(f"line {line_no}: missing or invalid post_id for user {user_id!r}")
        if post_id in seen_post_ids:
            raise DatasetError(f"line {line_no}: duplicate post_id {post_id!r} for user {user_id!r}")
        seen_post_ids.add(post_id)
        text = entry.get("text")
        if not isinstance(text, str):
            raise DatasetError(f"line {line_no}: post {post_id!r} has a non-string text")
        if not text.strip():
            dropped += 1
            continue
        raw_ts = entry.get("timestamp")
        try:
            ts = parse_timestamp(raw_ts) if isinstance(raw_ts, str) else None
        except ValueError:
            ts = None
        if ts is None:
            raise DatasetError(f"line {line_no}: unparseable timestamp for post {post_id!r}")
        posts.append(Post(post_id=post_id, text=text, timestamp=ts))

    return UserRecord(user_id=user_id, posts=_sorted_posts(posts), label=label), dropped


def load_dataset(path: str | Path, schema: str = DATASET_SCHEMA_VERSION) -> list[UserRecord]:
    """Load a JSONL cohort file.

    Rejects malformed JSON (naming the line), duplicate user_ids (naming both
    lines) and unparseable timestamps (naming the post). Empty-text posts are
    dropped with a warning counter; a user left with no posts is skipped.
    """
    if schema != DATASET_SCHEMA_VERSION:
        raise DatasetError(f"unsupported dataset schema version {schema!r}")
    path = Path(path)
    records: list[UserRecord] = []
    first_line_by_user: dict[str, int] = {}
    dropped_posts = 0
    skipped_users = 0
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            record, dropped = _parse_user(obj, line_no)
            dropped_posts += dropped
            if record.user_id in first_line_by_user:
                raise DatasetError(
                    f"duplicate user_id {record.user_id!r} on lines "
                    f"{first_line_by_user[record.user_id]} and {line_no}"
                )
            first_line_by_user[record.user_id] = line_no
            if not record.posts:
                skipped_users += 1
                continue
            records.append(record)
    if dropped_posts:
        logger.warning("dropped %d empty-text posts while loading %s", dropped_posts, path)
    if skipped_users:
        logger.warning("skipped %d users with no non-empty posts in %s", skipped_users, path)
    return records


def save_dataset(records: Iterable[UserRecord], path: str | Path) -> None:
    """Write records back out in the canonical JSONL form (posts time-sorted)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            obj = {
                "user_id": record.user_id,
                "label": record.label,
                "posts": [
                    {
                        "post_id": p.post_id,
                        "text": p.text,
                        "timestamp": format_timestamp(p.timestamp),
                    }
                    for p in record.posts
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def truncate_history(record: UserRecord, window: timedelta = DEFAULT_HISTORY_WINDOW) -> UserRecord:
    """Keep only posts within `window` of the user's most recent post.

    The most recent post always survives, so the result is never empty, and
    applying the same window twice changes nothing.
    """
    if not record.posts:
        raise ValueError(f"user {record.user_id!r} has no posts to truncate")
    cutoff = record.posts[-1].timestamp - window
    kept = tuple(p for p in record.posts if p.timestamp >= cutoff)
    if len(kept) == len(record.posts):
        return record
    return replace(record, posts=kept)
