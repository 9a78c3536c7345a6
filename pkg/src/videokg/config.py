"""Run configuration: thresholds, paths, and adapter wiring for the CLI/service."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    store: Path = Path("store")
    lexicon: Optional[Path] = None
    pipeline_spec: Optional[Path] = None  # None = the built-in recipe order
    stub_manifest: Optional[Path] = None
    adapter_endpoints: dict[str, str] = field(default_factory=dict)
    coherency_threshold: float = 0.15
    max_sentences_per_paragraph: int = 12
    max_paragraph_duration: float = 30.0
    concreteness_threshold: float = 3.0
    concreteness_lexicon: Optional[Path] = None  # None = packaged ratings file
    alpha: float = 0.02
    k_max: int = 25
    fps: float = 1.0
    pad_ratio: float = 0.02
    queue_capacity: int = 4
    kmeans_seed: int = 0
    kmeans_restarts: int = 5
    created_at: Optional[str] = None  # None = deterministic epoch default

    def __post_init__(self):
        if not 0.0 <= self.coherency_threshold <= 1.0:
            raise ConfigError(f"coherency_threshold must be in [0, 1], got {self.coherency_threshold}")
        if not 1.0 <= self.concreteness_threshold <= 5.0:
            raise ConfigError(
                f"concreteness_threshold must be in [1, 5], got {self.concreteness_threshold}"
            )
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        if self.max_sentences_per_paragraph < 1:
            raise ConfigError("max_sentences_per_paragraph must be >= 1")
        if self.max_paragraph_duration <= 0:
            raise ConfigError("max_paragraph_duration must be positive")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")
        if not 0.0 <= self.pad_ratio < 0.5:
            raise ConfigError("pad_ratio must be in [0, 0.5)")
        self.store = Path(self.store)
        if self.lexicon is not None:
            self.lexicon = Path(self.lexicon)
        if self.pipeline_spec is not None:
            self.pipeline_spec = Path(self.pipeline_spec)
        if self.stub_manifest is not None:
            self.stub_manifest = Path(self.stub_manifest)
        if self.concreteness_lexicon is not None:
            self.concreteness_lexicon = Path(self.concreteness_lexicon)

    @classmethod
    def load(cls, path: Path | str) -> "RunConfig":
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def describe(self) -> dict:
        doc = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in doc.items()}

    def behavior(self) -> dict:
        """Parameters that change pipeline output; deployment paths excluded."""
        keys = (
            "coherency_threshold",
            "max_sentences_per_paragraph",
            "max_paragraph_duration",
            "concreteness_threshold",
            "alpha",
            "k_max",
            "fps",
            "pad_ratio",
            "kmeans_seed",
            "kmeans_restarts",
        )
        return {k: getattr(self, k) for k in keys}
