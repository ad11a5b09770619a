"""Risk scoring, top-k selection, annotation parsing, and per-user averaging."""

import itertools

import numpy as np
import pytest

from doris.core import ZERO_SYMPTOMS, Post, UserRecord, parse_timestamp
from doris.criteria import (
    AnnotationParseError,
    AnnotationStats,
    RiskScore,
    annotate_post,
    annotations_as_map,
    criteria_feature,
    format_annotation,
    parse_annotation,
    risk_score,
    select_top_k,
    select_top_k_ids,
    selection_count,
)
from doris.providers import CachingChat, ChatProvider, cosine_similarity
from doris.providers.base import EncoderProvider


class MappedEncoder(EncoderProvider):
    """Encoder stub returning prescribed vectors for known texts."""

    name = "mapped"

    def __init__(self, mapping, dim):
        self.mapping = mapping
        self.dim = dim

    def _encode(self, text):
        return np.asarray(self.mapping[text], dtype=np.float64)


def _post(pid="p0", text="t"):
    return Post(post_id=pid, text=text, timestamp=parse_timestamp("2023-01-01T00:00:00Z"))


class TestRiskScore:
    def test_matches_one_template_orthogonal_to_rest(self):
        dim = 16
        basis = np.eye(dim)
        templates = basis[:9]
        encoder = MappedEncoder({"t": basis[0]}, dim)
        result = risk_score(_post(), templates, encoder)
        assert result.score == pytest.approx(1 / 9, abs=1e-12)

    def test_orthogonal_to_all(self):
        dim = 16
        basis = np.eye(dim)
        encoder = MappedEncoder({"t": basis[12]}, dim)
        assert risk_score(_post(), basis[:9], encoder).score == 0.0

    def test_equals_mean_of_independent_cosines(self):
        rng = np.random.default_rng(11)
        dim = 24
        templates = rng.normal(size=(9, dim))
        templates /= np.linalg.norm(templates, axis=1, keepdims=True)
        vec = rng.normal(size=dim)
        vec /= np.linalg.norm(vec)
        encoder = MappedEncoder({"t": vec}, dim)
        expected = np.mean([cosine_similarity(vec, templates[i]) for i in range(9)])
        assert risk_score(_post(), templates, encoder).score == pytest.approx(expected, abs=1e-12)

    def test_wrong_template_count(self):
        encoder = MappedEncoder({"t": np.ones(4)}, 4)
        with pytest.raises(ValueError):
            risk_score(_post(), np.ones((5, 4)), encoder)


class TestSelectTopK:
    def _scores(self, values):
        return [RiskScore(post_id=f"p{i}", score=v) for i, v in enumerate(values)]

    def test_top_quarter(self):
        assert select_top_k(self._scores([0.9, 0.5, 0.3, 0.1]), 25) == {"p0"}

    def test_boundaries(self):
        scores = self._scores([0.9, 0.5, 0.3, 0.1])
        assert select_top_k(scores, 0) == set()
        assert select_top_k(scores, 100) == {"p0", "p1", "p2", "p3"}

    def test_floor_never_exceeds_budget(self):
        assert selection_count(30, 10) == 3
        assert selection_count(33, 10) == 3
        assert selection_count(20, 138_000) == 27_600
        assert selection_count(0.5, 1000) == 5

    def test_tie_break_by_post_id(self):
        scores = [RiskScore("pb", 0.5), RiskScore("pa", 0.5), RiskScore("pc", 0.9)]
        assert select_top_k(scores, 67) == {"pc", "pa"}

    def test_monotone_in_k(self):
        rng = np.random.default_rng(4)
        values = np.round(rng.uniform(-1, 1, size=200), 2)  # rounding forces ties
        scores = self._scores(values)
        previous = set()
        for k in (0, 5, 10, 20, 50, 100):
            current = select_top_k(scores, k)
            assert previous <= current
            previous = current

    def test_array_variant_agrees(self):
        rng = np.random.default_rng(9)
        values = np.round(rng.uniform(-1, 1, size=500), 2)
        scores = self._scores(values)
        ids = np.asarray([s.post_id for s in scores])
        arr = np.asarray([s.score for s in scores])
        for k in (0, 7, 20, 50, 100):
            assert select_top_k_ids(ids, arr, k) == select_top_k(scores, k)

    def test_invalid_percent(self):
        with pytest.raises(ValueError):
            select_top_k(self._scores([0.1]), 101)


class TestParseAnnotation:
    def test_paper_format_examples(self):
        assert parse_annotation("(G, I)") == (0, 0, 0, 0, 0, 0, 1, 0, 1)
        assert parse_annotation("(A, B, C)") == (1, 1, 1, 0, 0, 0, 0, 0, 0)
        assert parse_annotation("None") == ZERO_SYMPTOMS

    def test_case_and_whitespace_tolerance(self):
        assert parse_annotation("(a, i)") == (1, 0, 0, 0, 0, 0, 0, 0, 1)
        assert parse_annotation("  none ") == ZERO_SYMPTOMS
        assert parse_annotation("( A ,B )") == (1, 1, 0, 0, 0, 0, 0, 0, 0)

    def test_rejections(self):
        for bad in ("(A, Z)", "(A, A)", "A, B", "()", "(AB)", "maybe", "(A,)"):
            with pytest.raises(AnnotationParseError):
                parse_annotation(bad)

    def test_round_trip_all_512_vectors(self):
        for flags in itertools.product((0, 1), repeat=9):
            assert parse_annotation(format_annotation(flags)) == flags


class _ScriptedChat(ChatProvider):
    name = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def _complete(self, prompt):
        self.calls += 1
        return self.replies[min(self.calls - 1, len(self.replies) - 1)]


class TestAnnotatePost:
    def test_mock_source_and_vector(self):
        from doris.providers import mock_annotator

        result = annotate_post(_post(text="insomnia and guilt again"), mock_annotator())
        assert result.vector == (0, 0, 0, 1, 0, 0, 1, 0, 0)
        assert result.source == "mock"
        assert result.raw == "(D, G)"

    def test_reask_recovers_from_one_bad_reply(self):
        chat = _ScriptedChat(["garbage", "(B)"])
        stats = AnnotationStats()
        result = annotate_post(_post(), chat, stats)
        assert result.vector == (0, 1, 0, 0, 0, 0, 0, 0, 0)
        assert chat.calls == 2
        assert stats.parse_warnings == 0

    def test_double_failure_degrades_to_zeros(self):
        chat = _ScriptedChat(["garbage", "still garbage"])
        stats = AnnotationStats()
        result = annotate_post(_post(), chat, stats)
        assert result.vector == ZERO_SYMPTOMS
        assert result.source == "llm"
        assert chat.calls == 2
        assert stats.parse_warnings == 1

    def test_reask_bypasses_cache(self):
        inner = _ScriptedChat(["garbage", "(C)"])
        chat = CachingChat(inner)
        result = annotate_post(_post(), chat)
        assert result.vector == (0, 0, 1, 0, 0, 0, 0, 0, 0)
        assert inner.calls == 2


class TestCriteriaFeature:
    def _user(self, n):
        posts = tuple(
            Post(f"p{i}", "x", parse_timestamp(f"2023-01-{i+1:02d}T00:00:00Z")) for i in range(n)
        )
        return UserRecord(user_id="u", posts=posts, label=1)

    def test_mean_with_unannotated_zeros(self):
        user = self._user(4)
        annotations = {
            "p0": (1, 0, 0, 0, 0, 0, 0, 0, 0),
            "p1": (0, 0, 0, 0, 0, 0, 0, 0, 1),
        }
        feature = criteria_feature(user, annotations)
        assert feature.values == (0.25, 0, 0, 0, 0, 0, 0, 0, 0.25)

    def test_all_zeros(self):
        assert criteria_feature(self._user(3), {}).values == (0,) * 9

    def test_matches_brute_force_column_means(self):
        rng = np.random.default_rng(2)
        user = self._user(10)
        annotations = {
            f"p{i}": tuple(int(b) for b in rng.integers(0, 2, size=9)) for i in range(10)
        }
        feature = criteria_feature(user, annotations)
        matrix = np.asarray([annotations[f"p{i}"] for i in range(10)], dtype=float)
        expected = matrix.mean(axis=0)
        assert np.allclose(feature.values, expected, atol=1e-12)
        assert all(0 <= v <= 1 for v in feature.values)

    def test_value_one_means_every_post_annotated(self):
        user = self._user(3)
        annotations = {f"p{i}": (1, 0, 0, 0, 0, 0, 0, 0, 0) for i in range(3)}
        assert criteria_feature(user, annotations).values[0] == 1.0

    def test_annotations_as_map(self):
        from doris.criteria import AnnotationResult, skipped_annotation

        results = [
            AnnotationResult("p1", "(A)", (1, 0, 0, 0, 0, 0, 0, 0, 0), "mock"),
            skipped_annotation("p2"),
        ]
        mapping = annotations_as_map(results)
        assert mapping["p1"][0] == 1
        assert mapping["p2"] == ZERO_SYMPTOMS
