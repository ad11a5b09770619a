"""Template registry: shipped-file pinning, parsing, and embedding."""

import numpy as np
import pytest

from doris.core import SYMPTOM_CRITERIA
from doris.providers import CachingEncoder, cosine_similarity, deterministic_test_encoder
from doris.templates import (
    EMOTIONS,
    TemplateRegistry,
    embed_templates,
    load_templates,
    template_expressions,
    template_file_digests,
)

# The shipped template files are immutable inputs; any edit must be deliberate
# and re-pinned here.
PINNED_DIGESTS = {
    "symptoms.txt": "5704e9f4db14c4d9757ca7885686076a86def5d0558e9c2cdc2b00673058a62a",
    "emotions.txt": "5546cbccc99a662c389c9bfba64c50f686b61b6d82f96c5fd3008d350a8c4c29",
}


class TestRegistry:
    def test_shipped_files_pinned(self):
        assert template_file_digests() == PINNED_DIGESTS

    def test_cardinality_and_order(self):
        registry = load_templates()
        assert "".join(t.criterion for t in registry.symptoms) == SYMPTOM_CRITERIA
        assert tuple(t.emotion for t in registry.emotions) == EMOTIONS
        assert all(t.text for t in registry.symptoms)
        assert all(t.text for t in registry.emotions)

    def test_known_template_heads(self):
        registry = load_templates()
        assert registry.symptoms[0].text.startswith("I feel low, unhappy, joyless")
        assert registry.symptoms[8].name == "Thoughts of suicide"
        assert registry.emotions[0].text.startswith("I am angry, mad, agitated")
        assert registry.emotions[4].text.startswith("I am sad, sorrowful, melancholic")

    def test_bad_directory_rejected(self, tmp_path):
        (tmp_path / "symptoms.txt").write_text("A. Something\ntext\n", encoding="utf-8")
        (tmp_path / "emotions.txt").write_text("1. anger\ntext\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_templates(tmp_path)


class TestEmbedTemplates:
    def test_fourteen_unit_norm_embeddings(self):
        registry = embed_templates(load_templates(), deterministic_test_encoder(dim=64))
        assert registry.symptom_embeddings.shape == (9, 64)
        assert registry.emotion_embeddings.shape == (5, 64)
        norms = np.linalg.norm(
            np.vstack([registry.symptom_embeddings, registry.emotion_embeddings]), axis=1
        )
        assert np.allclose(norms, 1.0, atol=1e-6)

    def test_reembedding_hits_cache(self):
        inner = deterministic_test_encoder(dim=32)
        encoder = CachingEncoder(inner)
        first = embed_templates(load_templates(), encoder)
        calls_after_first = inner.calls
        second = embed_templates(load_templates(), encoder)
        assert inner.calls == calls_after_first
        assert np.array_equal(first.symptom_embeddings, second.symptom_embeddings)

    def test_shared_grief_vocabulary_orders_similarities(self):
        # The sadness emotion template shares words like "sad" and
        # "heartbroken" with the depressed-mood symptom template, while the
        # happiness template shares almost nothing with it.
        registry = embed_templates(load_templates(), deterministic_test_encoder(dim=256, seed=0))
        sadness = registry.emotion_embeddings[4]
        symptom_a = registry.symptom_embeddings[0]
        happiness = registry.emotion_embeddings[3]
        assert cosine_similarity(sadness, symptom_a) > cosine_similarity(sadness, happiness)

    def test_independent_of_call_order(self):
        encoder = deterministic_test_encoder(dim=32)
        registry = load_templates()
        reversed_registry = TemplateRegistry(
            symptoms=tuple(reversed(registry.symptoms)),
            emotions=tuple(reversed(registry.emotions)),
        )
        forward = embed_templates(registry, encoder)
        backward = embed_templates(reversed_registry, encoder)
        assert np.array_equal(forward.symptom_embeddings, backward.symptom_embeddings[::-1])


class TestTemplateExpressions:
    def test_split_strips_connectives_and_period(self):
        text = "I feel one, two, or three, and four."
        assert template_expressions(text) == ["I feel one", "two", "three", "four"]

    def test_every_template_yields_expressions(self):
        registry = load_templates()
        for template in list(registry.symptoms) + list(registry.emotions):
            expressions = template_expressions(template.text)
            assert len(expressions) >= 8
            assert all(expressions)
