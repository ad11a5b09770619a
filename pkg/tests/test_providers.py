"""Provider contracts: cosine similarity, the deterministic hashing encoder,
the mock annotator, response caching, and remote retry behavior."""

import json
import threading
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np
import pytest

from doris import prompts
from doris.core import SYMPTOM_CRITERIA
from doris.providers import (
    CachingChat,
    CachingEncoder,
    ChatProvider,
    ContextOverflowError,
    EMOTION_KEYWORDS,
    SYMPTOM_KEYWORDS,
    RemoteChat,
    RemoteEncoder,
    ResponseCache,
    TransportError,
    cosine_similarity,
    deterministic_test_encoder,
    match_symptoms,
    mock_annotator,
)
from doris.templates import load_templates, template_expressions


class TestCosineSimilarity:
    def test_identity(self):
        v = np.array([0.6, 0.8])
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_antipodal(self):
        v = np.array([0.6, 0.8])
        assert cosine_similarity(v, -v) == pytest.approx(-1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_symmetry_and_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.normal(size=8)
            b = rng.normal(size=8)
            assert cosine_similarity(a, b) == cosine_similarity(b, a)
            assert abs(cosine_similarity(a, b)) <= 1 + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            cosine_similarity(np.ones(3), np.ones(4))

    def test_zero_norm(self):
        with pytest.raises(ValueError, match="zero-norm"):
            cosine_similarity(np.zeros(3), np.ones(3))


class TestHashingEncoder:
    def test_deterministic(self):
        enc = deterministic_test_encoder(dim=64, seed=3)
        a = enc.encode("a b c")
        b = enc.encode("a b c")
        assert np.array_equal(a, b)
        assert cosine_similarity(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_unit_norm(self):
        enc = deterministic_test_encoder(dim=32, seed=0)
        for text in ("hello", "one two three four", "x", "repeat repeat repeat"):
            assert np.linalg.norm(enc.encode(text)) == pytest.approx(1.0, abs=1e-6)

    def test_shared_vocabulary_scores_higher(self):
        enc = deterministic_test_encoder(dim=64, seed=0)
        anchor = enc.encode("sad crying grief")
        near = cosine_similarity(anchor, enc.encode("sad crying tears"))
        far = cosine_similarity(anchor, enc.encode("stock market report"))
        assert near > far

    def test_instances_agree_and_seeds_differ(self):
        a = deterministic_test_encoder(dim=32, seed=1).encode("same text")
        b = deterministic_test_encoder(dim=32, seed=1).encode("same text")
        c = deterministic_test_encoder(dim=32, seed=2).encode("same text")
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_minimum_dim(self):
        with pytest.raises(ValueError):
            deterministic_test_encoder(dim=4)

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            deterministic_test_encoder(dim=16).encode("")


class TestMockAnnotator:
    def test_keyword_hits(self):
        chat = mock_annotator()
        prompt = prompts.build_annotation_prompt("I can't sleep and I think about suicide")
        assert chat.complete(prompt) == "(D, I)"

    def test_no_keywords(self):
        chat = mock_annotator()
        assert chat.complete(prompts.build_annotation_prompt("nice weather today")) == "None"

    def test_output_format_always_parseable(self):
        import re

        pattern = re.compile(r"^(None|\([A-I](, [A-I])*\))$")
        chat = mock_annotator()
        samples = [
            "feeling guilty and worthless, can't concentrate",
            "what a great day at the beach",
            "no appetite lately and so tired",
            "I am sad. insomnia again. thoughts of suicide",
        ]
        for text in samples:
            raw = chat.complete(prompts.build_annotation_prompt(text))
            assert pattern.match(raw), raw

    def test_keyword_tables_cover_every_template_expression(self):
        registry = load_templates()
        for template in registry.symptoms:
            for expression in template_expressions(template.text):
                assert template.criterion in match_symptoms(expression), (
                    template.criterion, expression)

    def test_emotion_tables_cover_every_template_expression(self):
        from doris.providers import match_emotions

        registry = load_templates()
        for template in registry.emotions:
            for expression in template_expressions(template.text):
                assert template.emotion in match_emotions(expression), (
                    template.emotion, expression)

    def test_mood_summary_names_dominant_emotion(self):
        from doris.core import Post, parse_timestamp

        chat = mock_annotator()
        posts = [
            Post("p1", "crying all day again", parse_timestamp("2023-01-01T00:00:00Z")),
            Post("p2", "still crying, everything hurts", parse_timestamp("2023-02-01T00:00:00Z")),
        ]
        summary = chat.complete(prompts.build_mood_prompt(posts))
        assert "sadness" in summary

    def test_explanation_mentions_every_letter(self):
        chat = mock_annotator()
        prompt = prompts.build_explanation_prompt(
            "summary here",
            [prompts.format_evidence_item("A, D", "2023-01-01T00:00:00Z", "text one"),
             prompts.format_evidence_item("I", "2023-02-01T00:00:00Z", "text two")],
            verdict=1,
        )
        text = chat.complete(prompt)
        for letter in ("A", "D", "I"):
            assert letter in text
        assert "depressed" in text


class _CountingChat(ChatProvider):
    name = "counting"
    is_mock = True

    def __init__(self, responses=None):
        self.calls = 0
        self._lock = threading.Lock()
        self._responses = responses

    def _complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
            n = self.calls
        if self._responses is None:
            return f"reply:{prompt[:16]}"
        return self._responses[min(n - 1, len(self._responses) - 1)]


class TestResponseCache:
    def test_single_upstream_call_sequential(self):
        inner = _CountingChat()
        chat = CachingChat(inner)
        for _ in range(5):
            chat.complete("same prompt")
        assert inner.calls == 1

    def test_single_upstream_call_concurrent(self):
        inner = _CountingChat()
        chat = CachingChat(inner)
        with ThreadPoolExecutor(max_workers=16) as pool:
            results = list(pool.map(lambda _: chat.complete("hot prompt"), range(64)))
        assert inner.calls == 1
        assert len(set(results)) == 1

    def test_distinct_prompts_distinct_calls(self):
        inner = _CountingChat()
        chat = CachingChat(inner)
        chat.complete("one")
        chat.complete("two")
        chat.complete("one")
        assert inner.calls == 2

    def test_disk_persistence(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        inner = _CountingChat()
        chat = CachingChat(inner, ResponseCache(path))
        first = chat.complete("persisted")
        inner2 = _CountingChat()
        chat2 = CachingChat(inner2, ResponseCache(path))
        assert chat2.complete("persisted") == first
        assert inner2.calls == 0

    def test_disk_cache_is_append_only_jsonl(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        chat = CachingChat(_CountingChat(), ResponseCache(path))
        chat.complete("a")
        chat.complete("b")
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert all(set(r) == {"digest", "response"} for r in rows)
        assert len(rows) == 2

    def test_complete_fresh_overwrites(self, tmp_path):
        inner = _CountingChat(responses=["bad", "good", "good"])
        chat = CachingChat(inner, ResponseCache(tmp_path / "c.jsonl"))
        assert chat.complete("p") == "bad"
        assert chat.complete_fresh("p") == "good"
        assert chat.complete("p") == "good"
        assert inner.calls == 2

    def test_encoder_caching(self):
        enc_inner = deterministic_test_encoder(dim=16, seed=0)
        enc = CachingEncoder(enc_inner)
        a = enc.encode("text")
        b = enc.encode("text")
        assert np.array_equal(a, b)
        assert enc_inner.calls == 1


def _transport(handler):
    return httpx.MockTransport(handler)


class TestRemoteChat:
    def _chat(self, handler, **kwargs):
        kwargs.setdefault("sleep", lambda s: None)
        return RemoteChat(
            base_url="https://api.example.test/v1",
            model="chat-model",
            transport=_transport(handler),
            api_key="k",
            **kwargs,
        )

    def test_success_first_try(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["messages"][0]["role"] == "user"
            assert body["temperature"] == 0
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        assert self._chat(handler).complete("hello") == "ok"

    def test_retry_on_429_then_success(self):
        attempts = []
        sleeps = []

        def handler(request):
            attempts.append(1)
            if len(attempts) < 2:
                return httpx.Response(429, json={})
            return httpx.Response(200, json={"choices": [{"message": {"content": "done"}}]})

        chat = RemoteChat(
            base_url="https://api.example.test/v1", model="m",
            transport=_transport(handler), sleep=sleeps.append, api_key="k",
        )
        assert chat.complete("p") == "done"
        assert len(attempts) == 2
        assert sleeps == [1.0]  # exponential backoff, base 1s

    def test_exhausted_retries(self):
        def handler(request):
            return httpx.Response(503, text="down")

        with pytest.raises(TransportError, match="after 3 attempts"):
            self._chat(handler).complete("p")

    def test_non_retryable_4xx_fails_fast(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            return httpx.Response(401, text="bad key")

        with pytest.raises(TransportError, match="non-retryably"):
            self._chat(handler).complete("p")
        assert len(attempts) == 1

    def test_timeout_is_retried(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) < 3:
                raise httpx.ConnectTimeout("slow")
            return httpx.Response(200, json={"choices": [{"message": {"content": "late"}}]})

        assert self._chat(handler).complete("p") == "late"
        assert len(attempts) == 3

    def test_context_budget_enforced(self):
        def handler(request):  # pragma: no cover - must not be reached
            raise AssertionError("no request expected")

        chat = self._chat(handler)
        with pytest.raises(ContextOverflowError):
            chat.complete("x" * (chat.prompt_char_budget + 1))


class TestRemoteEncoder:
    def _encoder(self, handler, dim=4):
        return RemoteEncoder(
            base_url="https://api.example.test/v1", model="emb", dim=dim,
            transport=_transport(handler), sleep=lambda s: None, api_key="k",
        )

    def test_normalizes_output(self):
        def handler(request):
            return httpx.Response(200, json={"data": [{"embedding": [3.0, 0.0, 4.0, 0.0]}]})

        vec = self._encoder(handler).encode("text")
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)
        assert vec[0] == pytest.approx(0.6)

    def test_wrong_dimension_rejected(self):
        def handler(request):
            return httpx.Response(200, json={"data": [{"embedding": [1.0, 2.0]}]})

        with pytest.raises(TransportError, match="dimension"):
            self._encoder(handler).encode("text")

    def test_cached_remote_encoder_one_call(self, tmp_path):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(200, json={"data": [{"embedding": [1.0, 0.0, 0.0, 0.0]}]})

        enc = CachingEncoder(self._encoder(handler), ResponseCache(tmp_path / "c.jsonl"))
        enc.encode("same")
        enc.encode("same")
        assert len(calls) == 1


class TestPromptBuilders:
    def test_mood_prompt_contains_posts_in_time_order(self):
        from doris.core import Post, parse_timestamp

        posts = [
            Post("p1", "first entry", parse_timestamp("2023-01-01T00:00:00Z")),
            Post("p2", "second entry", parse_timestamp("2023-02-01T00:00:00Z")),
        ]
        prompt = prompts.build_mood_prompt(posts)
        assert prompt.count("first entry") == 1
        assert prompt.count("second entry") == 1
        assert prompt.index("first entry") < prompt.index("second entry")
        entries = prompts.extract_mood_entries(prompt)
        assert [t for _, t in entries] == ["first entry", "second entry"]

    def test_mood_prompt_drops_oldest_first(self):
        from doris.core import Post, parse_timestamp

        posts = [
            Post(f"p{i}", f"entry number {i} " + "pad " * 30, parse_timestamp(f"2023-01-0{i+1}T00:00:00Z"))
            for i in range(5)
        ]
        full = prompts.build_mood_prompt(posts)
        budget = len(full) - 1
        trimmed = prompts.build_mood_prompt(posts, char_budget=budget)
        assert "entry number 0" not in trimmed
        assert "entry number 4" in trimmed

    def test_mood_prompt_single_post_overflow(self):
        from doris.core import Post, parse_timestamp

        post = Post("p", "x" * 500, parse_timestamp("2023-01-01T00:00:00Z"))
        with pytest.raises(ContextOverflowError):
            prompts.build_mood_prompt([post], char_budget=100)

    def test_annotation_prompt_lists_all_criteria(self):
        prompt = prompts.build_annotation_prompt("text body")
        for letter in SYMPTOM_CRITERIA:
            assert f"{letter}. " in prompt
        assert prompts.extract_annotation_text(prompt) == "text body"

    def test_keyword_tables_have_expected_anchors(self):
        assert "suicide" in SYMPTOM_KEYWORDS["I"]
        assert "insomnia" in SYMPTOM_KEYWORDS["D"]
        assert "crying" in EMOTION_KEYWORDS["sadness"]
