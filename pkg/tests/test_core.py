"""Dataset loading, serialization round-trips, and history truncation."""

import json
from datetime import datetime, timedelta, timezone

import pytest

from doris.core import (
    DatasetError,
    Post,
    UserRecord,
    as_symptom_vector,
    format_timestamp,
    load_dataset,
    parse_timestamp,
    save_dataset,
    truncate_history,
)


def _post(pid, text, ts):
    return Post(post_id=pid, text=text, timestamp=parse_timestamp(ts))


def _write_lines(path, lines):
    path.write_text("\n".join(json.dumps(obj) for obj in lines) + "\n", encoding="utf-8")


def _user_obj(uid, label, posts):
    return {
        "user_id": uid,
        "label": label,
        "posts": [{"post_id": p, "text": t, "timestamp": ts} for p, t, ts in posts],
    }


class TestLoadDataset:
    def test_two_valid_users_time_sorted(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [
            _user_obj("u1", 0, [("p2", "later", "2023-02-01T00:00:00Z"),
                                ("p1", "earlier", "2023-01-01T00:00:00Z")]),
            _user_obj("u2", 1, [("q1", "only", "2023-03-01T00:00:00Z")]),
        ])
        records = load_dataset(path)
        assert len(records) == 2
        assert [p.post_id for p in records[0].posts] == ["p1", "p2"]
        assert records[1].label == 1

    def test_duplicate_user_id_cites_both_lines(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rows = [_user_obj(f"u{i}", 0, [("p", "x", "2023-01-01T00:00:00Z")]) for i in range(8)]
        rows[2]["user_id"] = "u1"
        rows[6]["user_id"] = "u1"
        del rows[1]  # keeps u1 on lines 2 and 6 after removal
        _write_lines(path, rows)
        with pytest.raises(DatasetError, match=r"duplicate user_id 'u1' on lines 2 and 6"):
            load_dataset(path)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        good = json.dumps(_user_obj("u1", 0, [("p", "x", "2023-01-01T00:00:00Z")]))
        path.write_text(good + "\n{not json\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path)

    def test_bad_timestamp_names_post(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [_user_obj("u1", 0, [("p7", "x", "not-a-time")])])
        with pytest.raises(DatasetError, match="p7"):
            load_dataset(path)

    def test_invalid_label_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [_user_obj("u1", 2, [("p", "x", "2023-01-01T00:00:00Z")])])
        with pytest.raises(DatasetError, match="label"):
            load_dataset(path)

    def test_empty_text_posts_dropped(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [_user_obj("u1", None, [
            ("p1", "   ", "2023-01-01T00:00:00Z"),
            ("p2", "kept", "2023-01-02T00:00:00Z"),
        ])])
        records = load_dataset(path)
        assert [p.post_id for p in records[0].posts] == ["p2"]
        assert records[0].label is None

    def test_duplicate_post_id_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [_user_obj("u1", 0, [
            ("p1", "a", "2023-01-01T00:00:00Z"),
            ("p1", "b", "2023-01-02T00:00:00Z"),
        ])])
        with pytest.raises(DatasetError, match="duplicate post_id"):
            load_dataset(path)

    def test_unsupported_schema_version(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [_user_obj("u1", 0, [("p", "x", "2023-01-01T00:00:00Z")])])
        with pytest.raises(DatasetError, match="schema"):
            load_dataset(path, schema="2")

    def test_round_trip_stability(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_lines(path, [
            _user_obj("u1", 1, [("p2", "b", "2023-02-01T08:30:00+02:00"),
                                ("p1", "a", "2023-01-01T00:00:00Z")]),
            _user_obj("u2", None, [("q1", "c", "2023-03-01T00:00:00.250000Z")]),
        ])
        first = load_dataset(path)
        out = tmp_path / "rt.jsonl"
        save_dataset(first, out)
        second = load_dataset(out)
        assert first == second
        out2 = tmp_path / "rt2.jsonl"
        save_dataset(second, out2)
        assert out.read_bytes() == out2.read_bytes()


class TestTimestamps:
    def test_zulu_and_offset_forms_agree(self):
        assert parse_timestamp("2023-01-31T12:00:00Z") == parse_timestamp("2023-01-31T13:00:00+01:00")

    def test_canonical_format(self):
        ts = parse_timestamp("2023-01-31T12:00:00+00:00")
        assert format_timestamp(ts) == "2023-01-31T12:00:00Z"
        with_us = parse_timestamp("2023-01-31T12:00:00.500000Z")
        assert format_timestamp(with_us) == "2023-01-31T12:00:00.500000Z"


class TestTruncateHistory:
    def _record(self, *day_offsets):
        base = datetime(2023, 1, 1, tzinfo=timezone.utc)
        posts = [
            Post(post_id=f"p{i}", text="x", timestamp=base + timedelta(days=d))
            for i, d in enumerate(day_offsets)
        ]
        return UserRecord(user_id="u", posts=tuple(posts), label=0)

    def test_all_inside_window_unchanged(self):
        record = self._record(0, 3, 10)
        assert truncate_history(record) is record

    def test_cutoff_arithmetic(self):
        record = self._record(0, 200)
        kept = truncate_history(record)
        assert [p.post_id for p in kept.posts] == ["p1"]

    def test_partial_window(self):
        # posts at days 0, 100, 200 with a 183-day window: the cutoff is
        # day 200 - 183 = day 17, so days 100 and 200 survive.
        record = self._record(0, 100, 200)
        kept = truncate_history(record)
        assert [p.post_id for p in kept.posts] == ["p1", "p2"]

    def test_idempotent_and_never_empty(self):
        import random

        rng = random.Random(5)
        for _ in range(50):
            days = sorted(rng.uniform(0, 400) for _ in range(rng.randint(1, 12)))
            record = self._record(*days)
            once = truncate_history(record)
            assert once.posts
            assert truncate_history(once) == once

    def test_empty_record_rejected(self):
        record = UserRecord(user_id="u", posts=(), label=0)
        with pytest.raises(ValueError):
            truncate_history(record)


class TestSymptomVector:
    def test_validation(self):
        assert as_symptom_vector([0, 1, 0, 0, 0, 0, 0, 0, 1]) == (0, 1, 0, 0, 0, 0, 0, 0, 1)
        with pytest.raises(ValueError):
            as_symptom_vector([0] * 8)
        with pytest.raises(ValueError):
            as_symptom_vector([0, 2, 0, 0, 0, 0, 0, 0, 0])
