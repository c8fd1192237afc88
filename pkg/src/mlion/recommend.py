"""Intent parsing, retrieval query planning, evidence-grounded ranking,
and the online feedback policy (logistic scoring with SGD updates).
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, StorageUnavailable, UnknownCategory
from .news_graph import (
    KnowledgeGraph,
    NewsItem,
    Sentiment,
    evidence_path,
    gazetteer,
)
from .report import jaccard, recency_weight, source_credibility

FEEDBACK_SCHEMA_VERSION = 1

N_FEATURES = 5  # relevance, recency, credibility, sentiment_match, graph_degree_norm
DEFAULT_ETA = 0.05

HORIZON_WINDOWS = {
    "Short": ("last 24 hours", 24 * 3600),
    "Medium": ("past 7-30 days", 7 * 86400),
    "Long": ("past 1-3 months", 90 * 86400),
}


class Risk(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


class Horizon(str, Enum):
    SHORT = "Short"
    MEDIUM = "Medium"
    LONG = "Long"


@dataclass
class Intent:
    category: str
    risk: Risk
    horizon: Horizon

    @property
    def window_seconds(self) -> int:
        return HORIZON_WINDOWS[self.horizon.value][1]


@dataclass
class RankedItem:
    news_id: str
    score: float
    evidence_path: list[str]
    path_truncated: bool = False
    headline: str = ""
    features: list[float] = field(default_factory=list)


@dataclass
class Recommendation:
    summary: str
    ranked_items: list[RankedItem]
    intent_echo: Intent
    generated_at: int

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "ranked_items": [
                {"news_id": r.news_id, "score": r.score,
                 "evidence_path": r.evidence_path,
                 "path_truncated": r.path_truncated,
                 "headline": r.headline,
                 "features": r.features}
                for r in self.ranked_items
            ],
            "intent": {"category": self.intent_echo.category,
                       "risk": self.intent_echo.risk.value,
                       "horizon": self.intent_echo.horizon.value},
            "generated_at": self.generated_at,
        }


@dataclass
class FeedbackEvent:
    user: str
    recommendation: str  # ranked item id (news id)
    outcome: float       # y in [0,1]
    features: list[float]

    def __post_init__(self):
        if not 0.0 <= self.outcome <= 1.0:
            raise ValueError("outcome must be in [0,1]")
        if len(self.features) != N_FEATURES:
            raise DimensionMismatch(
                f"expected {N_FEATURES} features, got {len(self.features)}"
            )
        for v in self.features:
            if not 0.0 <= v <= 1.0:
                raise ValueError("feature components must be in [0,1]")

    def to_dict(self) -> dict:
        return {"schema_version": FEEDBACK_SCHEMA_VERSION, "user": self.user,
                "recommendation": self.recommendation, "outcome": self.outcome,
                "features": self.features}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackEvent":
        return cls(user=d["user"], recommendation=d["recommendation"],
                   outcome=float(d["outcome"]),
                   features=[float(x) for x in d["features"]])


@dataclass
class PolicyWeights:
    theta: list[float] = field(default_factory=lambda: [0.0] * N_FEATURES)
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        for v in self.theta:
            if not math.isfinite(v):
                raise ValueError("theta components must be finite")


def parse_intent(request: dict, default_risk: str = "Medium",
                 default_horizon: str = "Medium") -> Intent:
    """Canonicalize a structured request into an Intent; category aliases
    resolve through the gazetteer table."""
    cats = gazetteer()["categories"]
    canonical = set(cats.values())
    raw_cat = str(request.get("category", "")).strip()
    if not raw_cat:
        raise UnknownCategory("category required")
    if raw_cat in canonical:
        cat = raw_cat
    else:
        key = raw_cat.lower()
        if key not in cats:
            raise UnknownCategory(raw_cat)
        cat = cats[key]
    risk = Risk(str(request.get("risk") or default_risk).capitalize())
    horizon = Horizon(str(request.get("horizon") or default_horizon).capitalize())
    return Intent(category=cat, risk=risk, horizon=horizon)


def plan_queries(intent: Intent) -> list[str]:
    """Deterministic template expansion: category keyword x horizon window."""
    window_phrase, _ = HORIZON_WINDOWS[intent.horizon.value]
    gaz = gazetteer()
    keywords = [intent.category]
    keywords += gaz["category_entities"].get(intent.category, [])
    return [
        f"{kw} news {window_phrase} risk:{intent.risk.value.lower()}"
        for kw in keywords
    ]


def score_candidate(theta: Sequence[float], phi: Sequence[float]) -> float:
    """Logistic of theta . phi."""
    if len(theta) != len(phi):
        raise DimensionMismatch(f"{len(theta)} vs {len(phi)}")
    z = float(np.dot(theta, phi))
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def candidate_features(
    item: NewsItem, intent: Intent, graph: KnowledgeGraph, t0: int,
    max_degree: int = 1,
) -> list[float]:
    """phi = (relevance, recency, credibility, sentiment_match, degree_norm),
    all in [0,1]."""
    query = " ".join(plan_queries(intent))
    relevance = jaccard(item.headline + " " + item.body, query)
    recency = recency_weight(t0 - item.time)
    credibility = source_credibility(item.source)
    sentiment_match = item.sentiment_score if item.sentiment_score is not None else 0.5
    degree = graph.doc_degree(item.item_id) if item.item_id in graph.doc_nodes else 0
    degree_norm = degree / max(max_degree, 1)
    return [min(max(v, 0.0), 1.0) for v in
            (relevance, recency, credibility, sentiment_match, degree_norm)]


def _stub_summary(items: list[tuple[NewsItem, RankedItem]], intent: Intent) -> str:
    if not items:
        return (f"No candidate news matched the {intent.category} "
                f"{intent.horizon.value.lower()}-horizon window.")
    lines = [f"Top picks for {intent.category} "
             f"({intent.risk.value} risk, {intent.horizon.value} horizon):"]
    for item, ranked in items:
        first_sentence = item.headline.rstrip(".") + "."
        path_note = (" Evidence: " + " -> ".join(ranked.evidence_path)
                     if ranked.evidence_path else " (no graph path)")
        lines.append(f"- {first_sentence}{path_note}")
    return "\n".join(lines)


def recommend(
    items: Sequence[NewsItem],
    intent: Intent,
    graph: KnowledgeGraph,
    theta: Sequence[float],
    top_k: int = 5,
    t0: int = 0,
    provider: Optional[Callable] = None,
    max_path_hops: int = 2,
) -> Recommendation:
    """Rank candidates by the learned logistic score (recency as the
    tie-break) and attach a graph evidence path to an intent-relevant
    entity for each pick."""
    target_ents = {e.lower() for e in
                   gazetteer()["category_entities"].get(intent.category, [])}
    max_deg = max((graph.doc_degree(d) for d in graph.doc_nodes), default=1) or 1
    scored = []
    for item in items:
        phi = candidate_features(item, intent, graph, t0, max_deg)
        s = score_candidate(theta, phi)
        scored.append((item, phi, s))
    scored.sort(key=lambda x: (-x[2], -x[0].time, x[0].item_id))
    picks = scored[:top_k]
    ranked = []
    for item, phi, s in picks:
        path = evidence_path(graph, item.item_id, target_ents, max_hops=max_path_hops)
        truncated = False
        if not path:
            # deeper connection may exist; flag rather than search unboundedly
            truncated = bool(target_ents) and item.item_id in graph.doc_nodes
        ranked.append(RankedItem(news_id=item.item_id, score=s,
                                 evidence_path=path, path_truncated=truncated,
                                 headline=item.headline, features=list(phi)))
    if provider is not None:
        summary = provider(picks, intent)
    else:
        summary = _stub_summary([(i, r) for (i, _, _), r in zip(picks, ranked)],
                                intent)
    return Recommendation(summary=summary, ranked_items=ranked,
                          intent_echo=intent, generated_at=t0)


def update_policy(theta: Sequence[float], event: FeedbackEvent,
                  eta: float = DEFAULT_ETA) -> list[float]:
    """One log-loss gradient step: theta' = theta - eta * (p - y) * phi."""
    phi = event.features
    p = score_candidate(theta, phi)
    g = p - event.outcome
    return [t - eta * g * f for t, f in zip(theta, phi)]


class FeedbackLog:
    """Append-only JSONL event log; replay retrains theta from scratch."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageUnavailable(str(e)) from e
        self._lock = threading.Lock()

    def record(self, event: FeedbackEvent) -> int:
        with self._lock:
            n = self._count()
            try:
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
            except OSError as e:
                raise StorageUnavailable(str(e)) from e
            return n + 1

    def _count(self) -> int:
        if not self.path.exists():
            return 0
        with self.path.open("r", encoding="utf-8") as f:
            return sum(1 for line in f if line.strip())

    def events(self) -> list[FeedbackEvent]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    out.append(FeedbackEvent.from_dict(json.loads(line)))
        return out

    def replay(self, theta0: Optional[Sequence[float]] = None,
               eta: float = DEFAULT_ETA) -> list[float]:
        theta = list(theta0) if theta0 is not None else [0.0] * N_FEATURES
        for event in self.events():
            theta = update_policy(theta, event, eta)
        return theta
