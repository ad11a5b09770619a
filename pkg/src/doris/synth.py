"""Deterministic synthetic-cohort generator for offline end-to-end tests.

Mimics the shape of a realistic screening cohort: ~5% prevalence, ~69 posts
per user spread over six months. Control users draw from topic-grouped
neutral phrase pools (every phrase is guaranteed keyword-free for the mock
annotator); depressed users additionally have symptom/emotion template
phrases injected into an exact share of their posts, so the pipeline's
embedding filters and the mock annotator can both detect the signal.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .core import Post, UserRecord, save_dataset
from .templates import TemplateRegistry, load_templates, template_expressions

ANCHOR = datetime(2024, 6, 30, 12, 0, 0, tzinfo=timezone.utc)
SPAN_DAYS = 183

NEUTRAL_TOPICS: dict[str, tuple[str, ...]] = {
    "cooking": (
        "tried a new pasta recipe tonight",
        "the sourdough starter doubled overnight",
        "roasted vegetables with rosemary for dinner",
        "perfected my ramen broth after three batches",
        "the farmers market had fresh basil today",
        "baked a loaf of rye bread this morning",
        "marinated tofu skewers for the grill",
        "my knife skills are improving with practice",
        "simmered a pot of lentil soup all afternoon",
        "picked up a cast iron pan at the flea market",
    ),
    "gardening": (
        "the tomato seedlings sprouted this week",
        "repotted the ferns into bigger containers",
        "mulched the flower beds before the rain",
        "the roses need pruning again",
        "built a small trellis for the beans",
        "harvested the first zucchini of the season",
        "the compost bin is finally producing good soil",
        "planted bulbs along the fence line",
        "watered the herb garden at dawn",
        "spotted a hummingbird near the feeder",
    ),
    "sports": (
        "the local team won in overtime last night",
        "ran my usual five kilometer loop this morning",
        "new running shoes arrived in the mail",
        "the gym added a rowing machine",
        "watched the cycling race highlights",
        "practiced free throws at the park",
        "the climbing wall opened a new route",
        "stretched for twenty minutes after the workout",
        "signed up for the autumn relay",
        "the pool reopened after renovations",
    ),
    "tech": (
        "updated the laptop to the latest release",
        "the new keyboard has quiet switches",
        "refactored a small script to parse logs",
        "backed up the photo archive to two drives",
        "the router firmware update went smoothly",
        "soldered a new capacitor onto the old radio",
        "benchmarked the database on the spare server",
        "wrote a plugin for the text editor",
        "the mechanical drive finally got replaced with an ssd",
        "configured the thermostat schedule remotely",
    ),
    "travel": (
        "booked a window seat for the coastal train",
        "the mountain trail map arrived by post",
        "packed light for the weekend trip north",
        "the ferry schedule changed for the season",
        "found a quiet hostel near the old town",
        "photographed the lighthouse at low tide",
        "the museum added a new wing of maps",
        "rented bicycles to tour the vineyards",
        "the overnight bus was surprisingly comfortable",
        "planned a route through three national parks",
    ),
    "music": (
        "learned a new chord progression today",
        "the vinyl shop had a rare pressing",
        "tuned the guitar before rehearsal",
        "the choir starts its winter program soon",
        "practiced scales on the piano for an hour",
        "the festival lineup was announced this morning",
        "restrung the violin with fresh strings",
        "recorded a short demo in the garage",
        "the drummer brought a vintage snare",
        "listened to the radio broadcast of the symphony",
    ),
    "office": (
        "the quarterly report went out on schedule",
        "reorganized the shared drive folders",
        "the printer jammed twice before lunch",
        "onboarded two new colleagues this week",
        "the standup meeting ran long today",
        "archived the old project boards",
        "the coffee machine finally got descaled",
        "drafted the agenda for the planning session",
        "the elevator inspection closed the lobby briefly",
        "updated the contact list for the branch office",
    ),
    "weather": (
        "a light fog settled over the harbor",
        "the forecast calls for scattered showers",
        "first frost arrived earlier than usual",
        "the river level rose after the storm",
        "a double rainbow appeared after the squall",
        "the heat wave broke overnight",
        "crisp air this morning on the walk",
        "leaves are turning along the boulevard",
        "the snowplows cleared the main roads by noon",
        "a gentle breeze moved through the orchard",
    ),
}

ALL_NEUTRAL_PHRASES: tuple[str, ...] = tuple(
    phrase for topic in NEUTRAL_TOPICS.values() for phrase in topic
)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 2000
    prevalence: float = 0.05
    posts_per_user: int = 69
    symptom_injection_rate: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.prevalence < 1:
            raise ValueError(f"prevalence must be in (0, 1), got {self.prevalence}")
        if self.n_users <= 0 or self.posts_per_user <= 0:
            raise ValueError("n_users and posts_per_user must be positive")
        if not 0 <= self.symptom_injection_rate <= 1:
            raise ValueError("symptom_injection_rate must be in [0, 1]")


def injection_vocabulary(registry: TemplateRegistry | None = None) -> list[list[str]]:
    """Per-template expression lists the generator injects from (symptoms
    first, then emotions)."""
    registry = registry or load_templates()
    vocab = [template_expressions(t.text) for t in registry.symptoms]
    vocab.extend(template_expressions(t.text) for t in registry.emotions)
    return vocab


def generate_records(config: SynthConfig) -> list[UserRecord]:
    """Build the cohort; fully deterministic per (config, seed)."""
    rng = random.Random(config.seed)
    vocab = injection_vocabulary()
    n_pos = max(1, round(config.n_users * config.prevalence))
    positives = set(rng.sample(range(config.n_users), n_pos))
    topic_names = sorted(NEUTRAL_TOPICS)

    records: list[UserRecord] = []
    for u in range(config.n_users):
        user_id = f"u{u:05d}"
        label = 1 if u in positives else 0
        topics = rng.sample(topic_names, 3)
        phrases = [p for t in topics for p in NEUTRAL_TOPICS[t]]

        lo = max(1, round(config.posts_per_user * 0.8))
        hi = round(config.posts_per_user * 1.2)
        n_posts = rng.randint(lo, hi)

        texts: list[str] = []
        for _ in range(n_posts):
            text = rng.choice(phrases)
            if rng.random() < 0.3:
                text = text + ". " + rng.choice(phrases)
            texts.append(text)

        if label == 1:
            n_inject = round(config.symptom_injection_rate * n_posts)
            for i in rng.sample(range(n_posts), n_inject):
                expressions = vocab[rng.randrange(len(vocab))]
                start = rng.randrange(len(expressions))
                chunk = ", ".join(expressions[start:start + rng.randint(1, 2)])
                texts[i] = texts[i] + ". " + chunk

        offsets = sorted(rng.uniform(0, SPAN_DAYS * 86400) for _ in range(n_posts))
        posts = tuple(
            Post(
                post_id=f"{user_id}-p{i:04d}",
                text=text,
                timestamp=ANCHOR - timedelta(days=SPAN_DAYS) + timedelta(seconds=round(off)),
            )
            for i, (off, text) in enumerate(zip(offsets, texts))
        )
        records.append(UserRecord(user_id=user_id, posts=posts, label=label))
    return records


def generate(config: SynthConfig, path: str | Path) -> Path:
    """Generate the cohort and write it as canonical JSONL."""
    path = Path(path)
    save_dataset(generate_records(config), path)
    return path


def injected_share(records: list[UserRecord]) -> float:
    """Fraction of depressed-user posts carrying an injected phrase, counted
    exactly via the '. ' separator against the neutral pool."""
    neutral = set(ALL_NEUTRAL_PHRASES)

    def is_neutral(text: str) -> bool:
        return all(part in neutral for part in text.split(". "))

    total = 0
    injected = 0
    for record in records:
        if record.label != 1:
            continue
        for post in record.posts:
            total += 1
            if not is_neutral(post.text):
                injected += 1
    if total == 0:
        return 0.0
    return injected / total
