"""Engine configuration: one JSON file, MLION_ environment overrides,
strict validation with unknown keys rejected."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigInvalid

ENV_PREFIX = "MLION_"


@dataclass
class ApiConfig:
    bind_host: str = "127.0.0.1"
    bind_port: int = 8170
    data_dir: str = "./data"

    # provider endpoints; empty string means use the deterministic stub
    llm_provider_url: str = ""
    retriever_url: str = ""
    provider_timeout: float = 10.0
    provider_retries: int = 1

    # fusion defaults
    alpha0: float = 0.5
    fusion_window: int = 20
    fusion_delta: float = 0.55
    fusion_step_down: float = 0.05
    horizon_1d: int = 2
    horizon_1h: int = 12
    horizon_5m: int = 24

    # signal scoring
    score_w_relevance: float = 0.5
    score_w_recency: float = 0.3
    score_w_credibility: float = 0.2
    score_threshold: float = 0.4
    score_top_k: int = 10

    # news / recommendation
    sentiment_tau: float = 0.5
    delta_short: int = 86400
    delta_medium: int = 7 * 86400
    delta_long: int = 90 * 86400
    eta: float = 0.05

    # cache
    queries_per_hour: float = 1.0

    seed: int = 0

    def validate(self) -> "ApiConfig":
        checks = [
            (0.0 <= self.alpha0 <= 1.0, "alpha0 must be in [0,1]"),
            (self.fusion_window > 0, "fusion_window must be positive"),
            (0.0 < self.fusion_delta < 1.0, "fusion_delta must be in (0,1)"),
            (0.0 < self.fusion_step_down <= 1.0, "fusion_step_down in (0,1]"),
            (self.horizon_1d > 0 and self.horizon_1h > 0 and self.horizon_5m > 0,
             "horizons must be positive"),
            (0.0 <= self.score_threshold <= 1.0, "score_threshold in [0,1]"),
            (self.score_top_k > 0, "score_top_k must be positive"),
            (0.0 <= self.sentiment_tau <= 1.0, "sentiment_tau in [0,1]"),
            (self.eta > 0, "eta must be > 0"),
            (self.delta_short > 0 and self.delta_medium > 0 and self.delta_long > 0,
             "delta windows must be positive"),
            (self.provider_timeout > 0, "provider_timeout must be > 0"),
            (0 < self.bind_port < 65536, "bind_port out of range"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigInvalid(msg)
        return self

    @property
    def score_weights(self) -> tuple[float, float, float]:
        return (self.score_w_relevance, self.score_w_recency,
                self.score_w_credibility)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[dict] = None,
    env: Optional[dict] = None,
) -> ApiConfig:
    """File < environment (MLION_*) < explicit overrides."""
    known = {f.name: f.type for f in fields(ApiConfig)}
    values: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigInvalid(f"cannot read config {path}: {e}") from e
        for k, v in doc.items():
            if k not in known:
                raise ConfigInvalid(f"unknown config key {k!r}")
            values[k] = v
    env = env if env is not None else os.environ
    for k, v in env.items():
        if not k.startswith(ENV_PREFIX):
            continue
        name = k[len(ENV_PREFIX):].lower()
        if name not in known:
            raise ConfigInvalid(f"unknown config key from environment: {k}")
        values[name] = _coerce(v, getattr(ApiConfig(), name))
    if overrides:
        for k, v in overrides.items():
            if k not in known:
                raise ConfigInvalid(f"unknown config override {k!r}")
            if v is not None:
                values[k] = v
    try:
        cfg = ApiConfig(**values)
    except TypeError as e:
        raise ConfigInvalid(str(e)) from e
    return cfg.validate()


def _coerce(raw: str, default):
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw
