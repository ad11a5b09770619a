"""Pipeline configuration: a flat, commented key=value text file.

Unknown keys are rejected so typos surface immediately; the digest of the
fully resolved configuration is recorded in every output artifact for
provenance.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .gbt import GBTParams


class ConfigError(ValueError):
    """Raised for unparseable config files or invalid values."""


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = "cohort.jsonl"
    out_dir: str = "out"
    seed: int = 7
    window_days: int = 183
    k: float = 20.0                      # top-k% of posts sent for annotation
    m: float = 20.0                      # top-m% per emotion kept as emotional
    alpha: float = 0.4                   # weight of the mood-summary embedding
    beta: float = 0.6                    # weight of the emotional-post mean
    threshold: float = 0.5
    encoder: str = "test"                # test | remote
    chat: str = "mock"                   # mock | remote
    encoder_dim: int = 128
    encoder_seed: int = 0
    max_concurrency: int = 4
    cache_path: str = ""                 # empty: in-memory caching only
    templates_dir: str = ""              # empty: shipped templates
    remote_base_url: str = ""
    remote_encoder_model: str = ""
    remote_chat_model: str = ""
    gbt_n_trees: int = 300
    gbt_learning_rate: float = 0.1
    gbt_max_depth: int = 6
    gbt_min_leaf: int = 20
    gbt_subsample: float = 1.0
    gbt_pos_weight: float = 1.0
    explain_enabled: bool = False

    def gbt_params(self) -> GBTParams:
        return GBTParams(
            n_trees=self.gbt_n_trees,
            learning_rate=self.gbt_learning_rate,
            max_depth=self.gbt_max_depth,
            min_leaf=self.gbt_min_leaf,
            subsample=self.gbt_subsample,
            subsample_seed=self.seed,
            pos_weight=self.gbt_pos_weight,
        )


# config-file key -> (dataclass field, type tag)
_KEY_TABLE: dict[str, tuple[str, str]] = {
    "dataset": ("dataset", "str"),
    "out_dir": ("out_dir", "str"),
    "seed": ("seed", "int"),
    "window_days": ("window_days", "int"),
    "k": ("k", "float"),
    "m": ("m", "float"),
    "alpha": ("alpha", "float"),
    "beta": ("beta", "float"),
    "threshold": ("threshold", "float"),
    "provider.encoder": ("encoder", "str"),
    "provider.chat": ("chat", "str"),
    "provider.encoder_dim": ("encoder_dim", "int"),
    "provider.encoder_seed": ("encoder_seed", "int"),
    "provider.max_concurrency": ("max_concurrency", "int"),
    "provider.remote_base_url": ("remote_base_url", "str"),
    "provider.remote_encoder_model": ("remote_encoder_model", "str"),
    "provider.remote_chat_model": ("remote_chat_model", "str"),
    "cache.path": ("cache_path", "str"),
    "templates.dir": ("templates_dir", "str"),
    "gbt.n_trees": ("gbt_n_trees", "int"),
    "gbt.learning_rate": ("gbt_learning_rate", "float"),
    "gbt.max_depth": ("gbt_max_depth", "int"),
    "gbt.min_leaf": ("gbt_min_leaf", "int"),
    "gbt.subsample": ("gbt_subsample", "float"),
    "gbt.pos_weight": ("gbt_pos_weight", "float"),
    "explain.enabled": ("explain_enabled", "bool"),
}

_FIELD_TO_KEY = {field_name: key for key, (field_name, _) in _KEY_TABLE.items()}


def _convert(key: str, raw: str, kind: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {raw!r}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a key = value file; '#' starts a comment, unknown keys are errors."""
    overrides: dict[str, object] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        entry = _KEY_TABLE.get(key)
        if entry is None:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        field_name, kind = entry
        overrides[field_name] = _convert(key, raw, kind)
    cfg = PipelineConfig(**overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    if cfg.encoder not in ("test", "remote"):
        raise ConfigError(f"provider.encoder must be test or remote, got {cfg.encoder!r}")
    if cfg.chat not in ("mock", "remote"):
        raise ConfigError(f"provider.chat must be mock or remote, got {cfg.chat!r}")
    if not 0 <= cfg.k <= 100 or not 0 <= cfg.m <= 100:
        raise ConfigError("k and m must be percentages in [0, 100]")
    if cfg.alpha < 0 or cfg.beta < 0:
        raise ConfigError("alpha and beta must be non-negative")
    if cfg.encoder == "remote" and not cfg.remote_base_url:
        raise ConfigError("provider.remote_base_url required for the remote encoder")
    if cfg.chat == "remote" and not cfg.remote_base_url:
        raise ConfigError("provider.remote_base_url required for the remote chat provider")
    if cfg.max_concurrency < 1:
        raise ConfigError("provider.max_concurrency must be at least 1")


def config_text(cfg: PipelineConfig) -> str:
    """Canonical flat rendering of the resolved config (digest input)."""
    lines = []
    for f in fields(PipelineConfig):
        key = _FIELD_TO_KEY[f.name]
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_digest(cfg: PipelineConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode("utf-8")).hexdigest()


def with_overrides(cfg: PipelineConfig, **kwargs) -> PipelineConfig:
    """Apply non-None overrides (CLI flags) on top of a config."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    if not updates:
        return cfg
    cfg = replace(cfg, **updates)
    validate_config(cfg)
    return cfg
