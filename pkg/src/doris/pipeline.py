"""Staged pipeline: ingest -> truncate -> embed -> filter -> annotate -> mood
-> featurize -> split -> train -> calibrate -> eval (-> explain).

Every stage writes one artifact under the output directory and records its
digest in manifest.json; with resume enabled, stages whose artifact and
config digest still match are loaded instead of recomputed. The annotation
and mood stages additionally stream partial results, so an interrupted run
resumes without repeating provider calls (the response cache catches any
remainder).
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import timedelta
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import criteria, explain as explain_mod, mood as mood_mod
from .config import PipelineConfig, config_digest
from .core import (
    SymptomVector,
    UserRecord,
    as_symptom_vector,
    load_dataset,
    save_dataset,
    truncate_history,
)
from .evaluation import MetricsReport, Split, compute_metrics, emit_report, mean_metrics, split_cohort
from .features import fuse
from .gbt import BoostedModel, load_model, save_model, train
from .isotonic import IsotonicCalibrator, fit_isotonic
from .providers import (
    CachingChat,
    CachingEncoder,
    ChatProvider,
    EncoderProvider,
    HashingEncoder,
    MockChat,
    RemoteChat,
    RemoteEncoder,
    ResponseCache,
)
from .synth import SynthConfig, generate
from .templates import TemplateRegistry, embed_templates, load_templates

logger = logging.getLogger(__name__)

STAGE_ORDER = (
    "ingest", "truncate", "embed", "filter", "annotate",
    "mood", "featurize", "split", "train", "calibrate", "eval",
)

ABLATION_VARIANTS = (
    "full",
    "no_criteria",
    "no_mood",
    "no_mood_summary",
    "no_post_history",
    "post_history_only",
)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    tmp.replace(path)


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def build_providers(cfg: PipelineConfig) -> tuple[CachingEncoder, CachingChat]:
    """Construct the configured providers behind a shared response cache."""
    cache = ResponseCache(cfg.cache_path or None)
    encoder: EncoderProvider
    chat: ChatProvider
    if cfg.encoder == "test":
        encoder = HashingEncoder(dim=cfg.encoder_dim, seed=cfg.encoder_seed)
    else:
        encoder = RemoteEncoder(
            base_url=cfg.remote_base_url, model=cfg.remote_encoder_model, dim=cfg.encoder_dim
        )
    if cfg.chat == "mock":
        chat = MockChat(max_concurrency=cfg.max_concurrency)
    else:
        chat = RemoteChat(
            base_url=cfg.remote_base_url,
            model=cfg.remote_chat_model,
            max_concurrency=cfg.max_concurrency,
        )
    return CachingEncoder(encoder, cache), CachingChat(chat, cache)


@dataclass
class FeatureBlocks:
    """Per-user feature components, row-aligned across all arrays."""

    user_ids: tuple[str, ...]
    labels: np.ndarray       # (n,), -1 where unlabeled
    summary_emb: np.ndarray  # (n, d) mood-summary embeddings (zero rows possible)
    emo_mean: np.ndarray     # (n, d) mean embedding of emotional posts
    f_ph: np.ndarray         # (n, d) post-history means
    f_dc: np.ndarray         # (n, 9) criteria features

    def f_mc(self, alpha: float, beta: float) -> np.ndarray:
        return alpha * self.summary_emb + beta * self.emo_mean

    def matrix(self, variant: str, alpha: float, beta: float) -> np.ndarray:
        f_mc = self.f_mc(alpha, beta)
        if variant == "full":
            return np.hstack([f_mc + self.f_ph, self.f_dc])
        if variant == "no_criteria":
            return f_mc + self.f_ph
        if variant == "no_mood":
            return np.hstack([self.f_ph, self.f_dc])
        if variant == "no_mood_summary":
            return np.hstack([self.f_mc(0.0, beta) + self.f_ph, self.f_dc])
        if variant == "no_post_history":
            return np.hstack([f_mc, self.f_dc])
        if variant == "post_history_only":
            return self.f_ph.copy()
        raise ValueError(f"unknown ablation variant {variant!r}")

    def rows_for(self, user_ids: Sequence[str]) -> np.ndarray:
        index = {u: i for i, u in enumerate(self.user_ids)}
        return np.asarray([index[u] for u in user_ids], dtype=np.int64)


class PipelineRun:
    """One pipeline execution over one dataset and one seed."""

    def __init__(
        self,
        cfg: PipelineConfig,
        resume: bool = False,
        providers: tuple[CachingEncoder, CachingChat] | None = None,
    ):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.encoder, self.chat = providers if providers is not None else build_providers(cfg)
        self.config_digest = config_digest(cfg)
        self.dataset_path = Path(cfg.dataset)
        if not self.dataset_path.exists():
            raise FileNotFoundError(f"dataset not found: {self.dataset_path}")
        self.dataset_digest = sha256_file(self.dataset_path)
        self.annotation_stats = criteria.AnnotationStats()

        self.records: list[UserRecord] | None = None
        self._text_vectors: dict[str, np.ndarray] = {}
        self.registry: TemplateRegistry | None = None
        self.risk_scores: list[criteria.RiskScore] | None = None
        self.selected: set[str] | None = None
        self.annotations: dict[str, SymptomVector] | None = None
        self.mood_courses: dict[str, tuple[tuple[str, ...], str]] | None = None
        self.blocks: FeatureBlocks | None = None
        self.split: Split | None = None
        self.model: BoostedModel | None = None
        self.calibrator: IsotonicCalibrator | None = None
        self.report: dict | None = None

        self._resume = resume
        self._manifest_path = self.out / "manifest.json"
        self._manifest = self._load_manifest()

    # -- manifest ---------------------------------------------------------

    def _load_manifest(self) -> dict:
        fresh = {
            "config_digest": self.config_digest,
            "dataset_digest": self.dataset_digest,
            "stages": {},
        }
        if not self._resume or not self._manifest_path.exists():
            return fresh
        try:
            manifest = json.loads(self._manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            logger.warning("manifest unreadable; restarting pipeline from scratch")
            return fresh
        if (
            manifest.get("config_digest") != self.config_digest
            or manifest.get("dataset_digest") != self.dataset_digest
        ):
            logger.warning("config or dataset changed; restarting pipeline from scratch")
            return fresh
        return manifest

    def _save_manifest(self) -> None:
        tmp = self._manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self._manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self._manifest_path)

    def _record_stage(self, stage: str, artifact: Path) -> None:
        self._manifest["stages"][stage] = {
            "artifact": artifact.name,
            "digest": sha256_file(artifact),
        }
        self._save_manifest()

    def _can_skip(self, stage: str, artifact: Path) -> bool:
        if not self._resume:
            return False
        entry = self._manifest["stages"].get(stage)
        if not entry or not artifact.exists():
            return False
        if entry.get("digest") != sha256_file(artifact):
            logger.warning("artifact for stage %s changed on disk; recomputing", stage)
            return False
        return True

    # -- helpers ----------------------------------------------------------

    def _ensure_registry(self) -> TemplateRegistry:
        if self.registry is None:
            registry = load_templates(self.cfg.templates_dir or None)
            self.registry = embed_templates(registry, self.encoder)
        return self.registry

    def _all_posts(self) -> list[tuple[str, str]]:
        """(post_id, text) over the whole corpus, in record order."""
        assert self.records is not None
        return [(p.post_id, p.text) for r in self.records for p in r.posts]

    def _ensure_text_vectors(self) -> dict[str, np.ndarray]:
        """Embeddings for every unique post text, computed once per text."""
        missing = {text for _, text in self._all_posts()} - self._text_vectors.keys()
        for text in sorted(missing):
            self._text_vectors[text] = self.encoder.encode(text)
        return self._text_vectors

    @staticmethod
    def _cosine_matrix(vectors: np.ndarray, templates: np.ndarray) -> np.ndarray:
        """Pairwise cosine similarities, rows = texts, columns = templates."""
        v_norms = np.linalg.norm(vectors, axis=1)
        t_norms = np.linalg.norm(templates, axis=1)
        return (vectors @ templates.T) / (v_norms[:, None] * t_norms[None, :])

    def _mapped(self, func: Callable, items: Sequence, workers: int) -> list:
        if workers <= 1 or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items, chunksize=64))

    # -- stages -----------------------------------------------------------

    def run(self, until: str = "eval") -> "PipelineRun":
        if until not in STAGE_ORDER:
            raise ValueError(f"unknown stage {until!r}")
        for stage in STAGE_ORDER[: STAGE_ORDER.index(until) + 1]:
            method = getattr(self, f"_stage_{stage}")
            logger.info("stage %s", stage)
            try:
                method()
            except Exception as exc:
                raise StageError(stage, exc) from exc
        return self

    def _stage_ingest(self) -> None:
        artifact = self.out / "dataset.norm.jsonl"
        if self._can_skip("ingest", artifact):
            self.records = load_dataset(artifact)
            return
        self.records = load_dataset(self.dataset_path)
        save_dataset(self.records, artifact)
        self._record_stage("ingest", artifact)

    def _stage_truncate(self) -> None:
        artifact = self.out / "truncated.jsonl"
        if self._can_skip("truncate", artifact):
            self.records = load_dataset(artifact)
            return
        assert self.records is not None
        window = timedelta(days=self.cfg.window_days)
        self.records = [truncate_history(r, window) for r in self.records]
        save_dataset(self.records, artifact)
        self._record_stage("truncate", artifact)

    def _stage_embed(self) -> None:
        artifact = self.out / "embed_stats.json"
        self._ensure_registry()
        if self._can_skip("embed", artifact):
            return
        assert self.records is not None
        unique_texts = sorted(self._ensure_text_vectors())
        digest = hashlib.sha256("\x00".join(unique_texts).encode("utf-8")).hexdigest()
        artifact.write_text(
            json.dumps({"n_unique_texts": len(unique_texts), "texts_digest": digest}, sort_keys=True)
            + "\n",
            encoding="utf-8",
        )
        self._record_stage("embed", artifact)

    def _stage_filter(self) -> None:
        artifact = self.out / "risk_scores.jsonl"
        if self._can_skip("filter", artifact):
            rows = _read_jsonl(artifact)
            self.risk_scores = [criteria.RiskScore(r["post_id"], r["score"]) for r in rows]
            self.selected = {r["post_id"] for r in rows if r["selected"]}
            return
        assert self.records is not None
        registry = self._ensure_registry()
        sym = registry.symptom_embeddings
        assert sym is not None
        vectors = self._ensure_text_vectors()
        texts = sorted(vectors)
        sims = self._cosine_matrix(np.stack([vectors[t] for t in texts]), sym)
        score_by_text = dict(zip(texts, sims.mean(axis=1)))
        posts = self._all_posts()
        scores = [
            criteria.RiskScore(post_id=pid, score=float(score_by_text[text]))
            for pid, text in posts
        ]
        self.risk_scores = scores
        self.selected = criteria.select_top_k_ids(
            np.asarray([pid for pid, _ in posts]),
            np.asarray([s.score for s in scores]),
            self.cfg.k,
        )
        _write_jsonl(
            artifact,
            (
                {"post_id": s.post_id, "score": s.score, "selected": s.post_id in self.selected}
                for s in scores
            ),
        )
        self._record_stage("filter", artifact)

    def _stage_annotate(self) -> None:
        artifact = self.out / "annotations.jsonl"
        if self._can_skip("annotate", artifact):
            self.annotations = {
                r["post_id"]: as_symptom_vector(r["vector"]) for r in _read_jsonl(artifact)
            }
            return
        assert self.records is not None and self.selected is not None
        posts_by_id = {p.post_id: p for r in self.records for p in r.posts}

        done: dict[str, dict] = {}
        if self._resume and artifact.exists():
            for row in _read_jsonl(artifact):
                done[row["post_id"]] = row
            done = {pid: row for pid, row in done.items() if pid in self.selected}
            if done:
                logger.info("resuming annotation: %d posts already done", len(done))

        todo = sorted(pid for pid in self.selected if pid not in done)

        def annotate(post_id: str) -> dict:
            result = criteria.annotate_post(posts_by_id[post_id], self.chat, self.annotation_stats)
            return {
                "post_id": result.post_id,
                "raw": result.raw,
                "vector": list(result.vector),
                "source": result.source,
            }

        if todo:
            with artifact.open("a", encoding="utf-8") as fh:
                batch = 512
                for start in range(0, len(todo), batch):
                    rows = self._mapped(annotate, todo[start:start + batch], self.chat.max_concurrency)
                    for row in rows:
                        done[row["post_id"]] = row
                        fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                    fh.flush()

        # Canonical rewrite: sorted by post_id, duplicates from crashes gone.
        _write_jsonl(artifact, (done[pid] for pid in sorted(done)))
        self.annotations = {pid: as_symptom_vector(row["vector"]) for pid, row in done.items()}
        if self.annotation_stats.parse_warnings:
            logger.warning("%d annotations degraded to zeros", self.annotation_stats.parse_warnings)
        self._record_stage("annotate", artifact)

    def _stage_mood(self) -> None:
        artifact = self.out / "mood_courses.jsonl"
        if self._can_skip("mood", artifact):
            self.mood_courses = {
                r["user_id"]: (tuple(r["emotional_post_ids"]), r["summary"])
                for r in _read_jsonl(artifact)
            }
            return
        assert self.records is not None
        registry = self._ensure_registry()
        emo = registry.emotion_embeddings
        assert emo is not None

        vectors = self._ensure_text_vectors()
        texts = sorted(vectors)
        sims = self._cosine_matrix(np.stack([vectors[t] for t in texts]), emo)
        text_row = {t: i for i, t in enumerate(texts)}
        posts = self._all_posts()
        emotional_set = mood_mod.select_emotional_ids(
            np.asarray([pid for pid, _ in posts]),
            sims[[text_row[text] for _, text in posts]],
            self.cfg.m,
        )

        done: dict[str, dict] = {}
        if self._resume and artifact.exists():
            for row in _read_jsonl(artifact):
                done[row["user_id"]] = row
            if done:
                logger.info("resuming mood summaries: %d users already done", len(done))

        by_id = {r.user_id: r for r in self.records}
        todo = sorted(uid for uid in by_id if uid not in done)

        def summarize(user_id: str) -> dict:
            user = by_id[user_id]
            ids = tuple(p.post_id for p in mood_mod.emotional_posts(user, emotional_set))
            summary = mood_mod.summarize_mood_course(user, emotional_set, self.chat)
            return {"user_id": user_id, "emotional_post_ids": list(ids), "summary": summary}

        if todo:
            with artifact.open("a", encoding="utf-8") as fh:
                batch = 256
                for start in range(0, len(todo), batch):
                    rows = self._mapped(summarize, todo[start:start + batch], self.chat.max_concurrency)
                    for row in rows:
                        done[row["user_id"]] = row
                        fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                    fh.flush()

        _write_jsonl(artifact, (done[uid] for uid in sorted(done)))
        self.mood_courses = {
            uid: (tuple(row["emotional_post_ids"]), row["summary"]) for uid, row in done.items()
        }
        self._record_stage("mood", artifact)

    def _stage_featurize(self) -> None:
        artifact = self.out / "feature_blocks.jsonl"
        if self._can_skip("featurize", artifact):
            self._load_blocks(artifact)
            return
        assert self.records is not None and self.annotations is not None
        assert self.mood_courses is not None
        dim = self.encoder.dim
        zero = np.zeros(dim, dtype=np.float64)
        vectors = self._ensure_text_vectors()

        user_ids: list[str] = []
        labels: list[int] = []
        s_rows: list[np.ndarray] = []
        e_rows: list[np.ndarray] = []
        ph_rows: list[np.ndarray] = []
        dc_rows: list[tuple[float, ...]] = []
        for record in self.records:
            emotional_ids, summary = self.mood_courses[record.user_id]
            id_set = set(emotional_ids)
            emb = [vectors[p.text] for p in record.posts]
            ph = np.mean(np.stack(emb), axis=0)
            emotional = [e for p, e in zip(record.posts, emb) if p.post_id in id_set]
            if emotional:
                s_emb = self.encoder.encode(summary)
                e_mean = np.mean(np.stack(emotional), axis=0)
            else:
                s_emb = zero
                e_mean = zero
            dc = criteria.criteria_feature(record, self.annotations).values
            user_ids.append(record.user_id)
            labels.append(-1 if record.label is None else record.label)
            s_rows.append(s_emb)
            e_rows.append(e_mean)
            ph_rows.append(ph)
            dc_rows.append(dc)

        self.blocks = FeatureBlocks(
            user_ids=tuple(user_ids),
            labels=np.asarray(labels, dtype=np.int64),
            summary_emb=np.stack(s_rows),
            emo_mean=np.stack(e_rows),
            f_ph=np.stack(ph_rows),
            f_dc=np.asarray(dc_rows, dtype=np.float64),
        )

        _write_jsonl(
            artifact,
            (
                {
                    "user_id": uid,
                    "label": None if label < 0 else int(label),
                    "summary_emb": [float(v) for v in s],
                    "emo_mean": [float(v) for v in e],
                    "f_ph": [float(v) for v in ph],
                    "f_dc": [float(v) for v in dc],
                }
                for uid, label, s, e, ph, dc in zip(
                    user_ids, labels, s_rows, e_rows, ph_rows, dc_rows
                )
            ),
        )
        # The fused-feature artifact mirrors the blocks deterministically.
        fused_path = self.out / "features.jsonl"
        _write_jsonl(
            fused_path,
            (
                {
                    "user_id": uid,
                    "fused": [
                        float(v)
                        for v in fuse(
                            self.cfg.alpha * s + self.cfg.beta * e, ph, dc
                        )
                    ],
                    "label": None if label < 0 else int(label),
                }
                for uid, label, s, e, ph, dc in zip(
                    user_ids, labels, s_rows, e_rows, ph_rows, dc_rows
                )
            ),
        )
        self._record_stage("featurize", artifact)

    def _load_blocks(self, artifact: Path) -> None:
        rows = _read_jsonl(artifact)
        self.blocks = FeatureBlocks(
            user_ids=tuple(r["user_id"] for r in rows),
            labels=np.asarray(
                [-1 if r["label"] is None else r["label"] for r in rows], dtype=np.int64
            ),
            summary_emb=np.asarray([r["summary_emb"] for r in rows], dtype=np.float64),
            emo_mean=np.asarray([r["emo_mean"] for r in rows], dtype=np.float64),
            f_ph=np.asarray([r["f_ph"] for r in rows], dtype=np.float64),
            f_dc=np.asarray([r["f_dc"] for r in rows], dtype=np.float64),
        )

    def _stage_split(self) -> None:
        artifact = self.out / "split.json"
        if self._can_skip("split", artifact):
            obj = json.loads(artifact.read_text(encoding="utf-8"))
            self.split = Split(
                train=tuple(obj["train"]),
                validation=tuple(obj["validation"]),
                test=tuple(obj["test"]),
            )
            return
        assert self.records is not None
        labeled = [r for r in self.records if r.label is not None]
        self.split = split_cohort(labeled, self.cfg.seed)
        artifact.write_text(
            json.dumps(
                {
                    "train": list(self.split.train),
                    "validation": list(self.split.validation),
                    "test": list(self.split.test),
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        self._record_stage("split", artifact)

    def _matrix_for(self, user_ids: Sequence[str], variant: str = "full") -> tuple[np.ndarray, np.ndarray]:
        assert self.blocks is not None
        rows = self.blocks.rows_for(user_ids)
        X = self.blocks.matrix(variant, self.cfg.alpha, self.cfg.beta)[rows]
        y = self.blocks.labels[rows]
        return X, y

    def _stage_train(self) -> None:
        artifact = self.out / "model_raw.json"
        if self._can_skip("train", artifact):
            self.model, _ = load_model(artifact)
            return
        assert self.split is not None
        X, y = self._matrix_for(self.split.train)
        self.model = train(X, y, self.cfg.gbt_params())
        save_model(self.model, None, artifact)
        self._record_stage("train", artifact)

    def _stage_calibrate(self) -> None:
        artifact = self.out / "model.json"
        if self._can_skip("calibrate", artifact):
            self.model, self.calibrator = load_model(artifact)
            return
        assert self.model is not None and self.split is not None
        X, y = self._matrix_for(self.split.validation)
        self.calibrator = fit_isotonic(self.model.raw_scores(X), y)
        save_model(self.model, self.calibrator, artifact)
        self._record_stage("calibrate", artifact)

    def _stage_eval(self) -> None:
        artifact = self.out / "report.json"
        if self._can_skip("eval", artifact):
            self.report = json.loads(artifact.read_text(encoding="utf-8"))
            return
        self.report = self.evaluate_split("test", artifact)
        self._record_stage("eval", artifact)

    def evaluate_split(
        self,
        split_name: str,
        artifact: Path | None = None,
        model: BoostedModel | None = None,
        calibrator: IsotonicCalibrator | None = None,
    ) -> dict:
        """Metrics of (model, calibrator) on one split part; writes report
        files when `artifact` is given."""
        assert self.split is not None
        model = model if model is not None else self.model
        calibrator = calibrator if calibrator is not None else self.calibrator
        assert model is not None and calibrator is not None
        user_ids = self.split.part(split_name)
        X, y = self._matrix_for(user_ids)
        raw = model.raw_scores(X)
        probs = calibrator.probabilities(raw)
        metrics = compute_metrics(y, raw, probs, self.cfg.threshold)
        extra = {"split": split_name, "n_users": len(user_ids), "seed": self.cfg.seed}
        if artifact is not None:
            return emit_report(
                metrics, artifact,
                config_digest=self.config_digest,
                data_digest=self.dataset_digest,
                extra=extra,
            )
        obj = metrics.to_dict()
        obj.update(extra)
        obj["config_digest"] = self.config_digest
        obj["data_digest"] = self.dataset_digest
        return obj

    def metrics_for_variant(self, variant: str) -> MetricsReport:
        """Train/calibrate/evaluate one feature-ablation variant in memory."""
        assert self.split is not None
        X_train, y_train = self._matrix_for(self.split.train, variant)
        model = train(X_train, y_train, self.cfg.gbt_params())
        X_val, y_val = self._matrix_for(self.split.validation, variant)
        calibrator = fit_isotonic(model.raw_scores(X_val), y_val)
        X_test, y_test = self._matrix_for(self.split.test, variant)
        raw = model.raw_scores(X_test)
        return compute_metrics(y_test, raw, calibrator.probabilities(raw), self.cfg.threshold)

    def explain_users(self, user_ids: Sequence[str] | None = None) -> list[explain_mod.ExplanationReport]:
        """Write explanation reports (plus an index) for the given users,
        defaulting to the test split."""
        assert self.records is not None and self.blocks is not None
        assert self.annotations is not None and self.mood_courses is not None
        assert self.model is not None and self.calibrator is not None
        if user_ids is None:
            assert self.split is not None
            user_ids = self.split.test
        by_id = {r.user_id: r for r in self.records}
        fused_matrix = self.blocks.matrix("full", self.cfg.alpha, self.cfg.beta)
        rows = self.blocks.rows_for(user_ids)
        reports = []
        out_dir = self.out / "explanations"
        for uid, row in zip(user_ids, rows):
            _, summary = self.mood_courses[uid]
            report = explain_mod.explain_user(
                by_id[uid],
                fused_matrix[row],
                self.model,
                self.calibrator,
                summary,
                self.annotations,
                self.chat,
                threshold=self.cfg.threshold,
            )
            explain_mod.write_report(report, out_dir)
            reports.append(report)
        explain_mod.write_index(reports, out_dir)
        return reports


def run_pipeline(cfg: PipelineConfig, resume: bool = False, until: str = "eval") -> PipelineRun:
    run = PipelineRun(cfg, resume=resume)
    run.run(until=until)
    if until == "eval" and cfg.explain_enabled:
        try:
            run.explain_users()
        except Exception as exc:
            raise StageError("explain", exc) from exc
    return run


def run_many(
    cfg: PipelineConfig,
    seeds: Sequence[int],
    ablations: bool = False,
    resume: bool = False,
) -> dict:
    """Run the pipeline once per seed (same dataset, per-seed output dirs),
    then write the averaged report; optionally add the ablation harness."""
    base = Path(cfg.out_dir)
    per_seed_reports: list[dict] = []
    variant_metrics: dict[str, list[MetricsReport]] = {v: [] for v in ABLATION_VARIANTS}
    runs: list[PipelineRun] = []
    for seed in seeds:
        sub = replace(cfg, seed=seed, out_dir=str(base / f"seed_{seed}"))
        run = run_pipeline(sub, resume=resume)
        runs.append(run)
        assert run.report is not None
        per_seed_reports.append(run.report)
        if ablations:
            for variant in ABLATION_VARIANTS:
                variant_metrics[variant].append(run.metrics_for_variant(variant))

    metric_reports = [
        MetricsReport(
            precision=r["precision"], recall=r["recall"], f1=r["f1"],
            auroc=r["auroc"], auprc=r["auprc"], threshold=r["threshold"],
            counts=r["counts"], flags=tuple(r["flags"]),
        )
        for r in per_seed_reports
    ]
    summary = {
        "seeds": list(seeds),
        "mean": mean_metrics(metric_reports),
        "per_seed": per_seed_reports,
    }
    base.mkdir(parents=True, exist_ok=True)
    (base / "report_mean.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if ablations:
        summary["ablations"] = {
            variant: {
                "per_seed": [m.to_dict() for m in metrics],
                "mean": mean_metrics(metrics),
            }
            for variant, metrics in variant_metrics.items()
        }
        (base / "ablation_report.json").write_text(
            json.dumps(summary["ablations"], indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return summary


def run_synthetic_experiment(
    work_dir: str | Path,
    seeds: Sequence[int],
    synth_cfg: SynthConfig,
    cfg: PipelineConfig,
    variants: Sequence[str] = ("full",),
) -> dict[str, list[MetricsReport]]:
    """Closed-loop experiment: regenerate the cohort per seed, run the whole
    pipeline offline, and collect test metrics per feature variant."""
    work_dir = Path(work_dir)
    results: dict[str, list[MetricsReport]] = {v: [] for v in variants}
    for seed in seeds:
        cohort = work_dir / f"cohort_{seed}.jsonl"
        generate(replace(synth_cfg, seed=seed), cohort)
        sub = replace(cfg, seed=seed, dataset=str(cohort), out_dir=str(work_dir / f"seed_{seed}"))
        run = run_pipeline(sub)
        for variant in variants:
            if variant == "full":
                assert run.report is not None
                results[variant].append(
                    MetricsReport(
                        precision=run.report["precision"], recall=run.report["recall"],
                        f1=run.report["f1"], auroc=run.report["auroc"],
                        auprc=run.report["auprc"], threshold=run.report["threshold"],
                        counts=run.report["counts"], flags=tuple(run.report["flags"]),
                    )
                )
            else:
                results[variant].append(run.metrics_for_variant(variant))
    return results
