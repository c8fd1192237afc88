"""Four-agent report pipeline: specialist partial reports, signal scoring
and validation, integration, prompt construction, retrieval augmentation,
and TTL-cached agent execution.
"""

from __future__ import annotations

import json
import math
import re
import threading
import time as _time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable, Optional, Sequence

from . import indicators
from .errors import (
    ComponentOutOfRange,
    InsufficientHistory,
    MissingInput,
    MissingPartial,
)
from .market_data import CandleSeries
from .news_graph import NewsItem, Sentiment

DEFAULT_SCORE_WEIGHTS = (0.5, 0.3, 0.2)
DEFAULT_THRESHOLD = 0.4
DEFAULT_TOP_K = 10
RECENCY_LAMBDA = 0.05  # per hour


class Agent(str, Enum):
    A1 = "A1"  # technical analysis
    A2 = "A2"  # market dynamics
    A3 = "A3"  # trading recommendation
    A4 = "A4"  # semantic analysis


class Stance(str, Enum):
    BULLISH = "Bullish"
    BEARISH = "Bearish"
    NEUTRAL = "Neutral"


@dataclass
class Signal:
    source: str
    snippet: str
    time: int
    url: str
    relevance: float
    recency: float
    credibility: float
    score: float = 0.0

    def to_dict(self) -> dict:
        return {
            "source": self.source, "snippet": self.snippet, "time": self.time,
            "url": self.url, "relevance": self.relevance,
            "recency": self.recency, "credibility": self.credibility,
            "score": self.score,
        }


@dataclass
class PartialReport:
    agent: Agent
    sections: list[tuple[str, str]]
    signals_used: list[Signal] = field(default_factory=list)
    produced_at: int = 0
    stance: Stance = Stance.NEUTRAL
    confidence: float = 0.0
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.sections:
            raise ValueError("sections must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0,1]")

    def section(self, heading: str) -> Optional[str]:
        for h, b in self.sections:
            if h == heading:
                return b
        return None


@dataclass
class RawReport:
    sections: list[tuple[str, str]]
    provenance: dict[str, list[str]]  # heading -> contributing agents/signals
    stance: Stance
    confidence: float
    conflicts: list[str] = field(default_factory=list)
    symbol: str = ""
    horizon: str = ""


@dataclass
class EnhancedReport:
    sections: list[tuple[str, str]]
    provenance: dict[str, list[str]]
    enhancement_sources: list[Signal]
    stance: Stance
    confidence: float
    symbol: str = ""
    horizon: str = ""


@dataclass
class Prompt:
    """Eight named context slots plus the temporal scope. Slots may be
    empty strings but are always present."""
    asset: str
    horizon: str
    key_indicators: str
    sentiment_summary: str
    top_entities: str
    risk_notes: str
    date_range: str
    confidence_threshold: str
    temporal_scope: str = ""

    def slots(self) -> dict[str, str]:
        return {
            "c1_asset": self.asset,
            "c2_horizon": self.horizon,
            "c3_key_indicators": self.key_indicators,
            "c4_sentiment_summary": self.sentiment_summary,
            "c5_top_entities": self.top_entities,
            "c6_risk_notes": self.risk_notes,
            "c7_date_range": self.date_range,
            "c8_confidence_threshold": self.confidence_threshold,
        }


# -- signal scoring ------------------------------------------------------------

def score_signal(
    relevance: float, recency: float, credibility: float,
    weights: tuple[float, float, float] = DEFAULT_SCORE_WEIGHTS,
) -> float:
    """Weighted sum of the three quality components."""
    for name, v in (("relevance", relevance), ("recency", recency),
                    ("credibility", credibility)):
        if not 0.0 <= v <= 1.0:
            raise ComponentOutOfRange(f"{name}={v} outside [0,1]")
    a1, a2, a3 = weights
    return a1 * relevance + a2 * recency + a3 * credibility


def validate_signals(
    candidates: Sequence[Signal],
    weights: tuple[float, float, float] = DEFAULT_SCORE_WEIGHTS,
    top_k: int = DEFAULT_TOP_K,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[Signal]:
    """Score, sort descending (ties: recency then source id), keep the
    top_k at or above the threshold."""
    scored = []
    for s in candidates:
        s.score = score_signal(s.relevance, s.recency, s.credibility, weights)
        scored.append(s)
    scored.sort(key=lambda s: (-s.score, -s.recency, s.source))
    return [s for s in scored if s.score >= threshold][:top_k]


_token_re = re.compile(r"[a-z0-9]+")


def token_set(text: str) -> set[str]:
    return set(_token_re.findall(text.lower()))


def jaccard(a: str, b: str) -> float:
    sa, sb = token_set(a), token_set(b)
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def recency_weight(age_seconds: float, lam: float = RECENCY_LAMBDA) -> float:
    return math.exp(-lam * max(age_seconds, 0.0) / 3600.0)


_credibility_cache: Optional[dict] = None


def source_credibility(source: str) -> float:
    global _credibility_cache
    if _credibility_cache is None:
        ref = resources.files("mlion.data") / "source_credibility.json"
        _credibility_cache = json.loads(ref.read_text(encoding="utf-8"))
    table = _credibility_cache
    return float(table["sources"].get(source.lower(), table["default"]))


# -- agents ---------------------------------------------------------------------

def run_technical_agent(
    series: CandleSeries,
    rsi_period: int = 14,
    lookback: int = 20,
    now: int = 0,
) -> PartialReport:
    """A1: indicator bundle summarized into sections with a rule-based
    stance: Bullish when trend is positive and RSI not overbought, Bearish
    when trend negative and RSI not oversold, else Neutral."""
    try:
        bundle = indicators.compute_bundle(series, rsi_period=rsi_period,
                                           lookback=lookback)
    except InsufficientHistory:
        raise
    last_rsi = bundle.rsi[-1]
    macd_line, signal_line, hist = bundle.macd
    mid, upper, lower = bundle.bollinger
    ts = bundle.trend_strength
    if abs(ts) < 1e-9:  # flat within numeric noise
        ts = 0.0
    if ts > 0 and last_rsi < 70:
        stance, conf = Stance.BULLISH, min(1.0, abs(ts) * 100)
    elif ts < 0 and last_rsi > 30:
        stance, conf = Stance.BEARISH, min(1.0, abs(ts) * 100)
    else:
        stance, conf = Stance.NEUTRAL, 0.0
    sections = [
        ("Momentum", f"RSI({rsi_period}) at {last_rsi:.2f}."),
        ("Moving Averages",
         f"MACD {macd_line[-1]:.4f}, signal {signal_line[-1]:.4f}, "
         f"histogram {hist[-1]:.4f}."),
        ("Volatility Bands",
         f"Bollinger mid {mid[-1]:.4f}, upper {upper[-1]:.4f}, "
         f"lower {lower[-1]:.4f}."),
        ("Support and Resistance",
         f"Support {bundle.support:.4f}, resistance {bundle.resistance:.4f}."),
        ("Trend",
         f"Normalized trend strength {ts:.6f}; "
         f"volume trend {bundle.volume_trend:.4f}."),
    ]
    return PartialReport(agent=Agent.A1, sections=sections, produced_at=now,
                         stance=stance, confidence=conf)


_REGULATION_WORDS = {"regulation", "regulatory", "sec", "cftc", "ban", "bans",
                     "lawsuit", "compliance", "ruling", "legislation"}


def run_market_agent(
    news: Sequence[NewsItem],
    flows: Sequence[Signal] = (),
    social: Sequence[Signal] = (),
    now: int = 0,
) -> PartialReport:
    """A2: aggregates news sentiment tallies, flow summaries, and
    regulation mentions; stance is the majority sentiment with
    confidence = margin / total."""
    n_bull = sum(1 for n in news if n.sentiment == Sentiment.BULLISH)
    n_bear = sum(1 for n in news if n.sentiment == Sentiment.BEARISH)
    total = n_bull + n_bear
    if total == 0:
        stance, conf = Stance.NEUTRAL, 0.0
    elif n_bull > n_bear:
        stance, conf = Stance.BULLISH, (n_bull - n_bear) / total
    elif n_bear > n_bull:
        stance, conf = Stance.BEARISH, (n_bear - n_bull) / total
    else:
        stance, conf = Stance.NEUTRAL, 0.0

    reg_items = [n for n in news
                 if token_set(n.headline + " " + n.body) & _REGULATION_WORDS]
    sections = [
        ("News Sentiment",
         f"{n_bull} bullish vs {n_bear} bearish items "
         f"({len(news)} total)."),
    ]
    if flows:
        sections.append(("Funding Flows",
                         "; ".join(s.snippet for s in flows)))
    if reg_items:
        sections.append(("Regulation",
                         " | ".join(n.headline for n in reg_items)))
    if social:
        sections.append(("Social Signals",
                         "; ".join(s.snippet for s in social)))
    if len(sections) == 1:
        sections.append(("Market Context", "No flow or regulation signals."))
    return PartialReport(agent=Agent.A2, sections=sections, produced_at=now,
                         stance=stance, confidence=conf,
                         signals_used=list(flows) + list(social))


HORIZON_LABELS = (
    ("Short Term (1-4 weeks)", "short"),
    ("Medium Term (1-6 months)", "medium"),
    ("Long Term (6+ months)", "long"),
)


def run_recommendation_agent(
    r1: Optional[PartialReport],
    r2: Optional[PartialReport],
    context: str = "",
    now: int = 0,
) -> PartialReport:
    """A3: one recommendation per horizon with entry/exit levels from A1's
    support/resistance and a confidence-weighted stance vote over A1/A2."""
    if r1 is None or r2 is None:
        raise MissingInput("recommendation agent needs both A1 and A2 reports")

    votes = {Stance.BULLISH: 0.0, Stance.BEARISH: 0.0}
    for r in (r1, r2):
        if r.stance in votes:
            votes[r.stance] += r.confidence
    flags = []
    if votes[Stance.BULLISH] > votes[Stance.BEARISH]:
        stance = Stance.BULLISH
        conf = votes[Stance.BULLISH] - votes[Stance.BEARISH]
    elif votes[Stance.BEARISH] > votes[Stance.BULLISH]:
        stance = Stance.BEARISH
        conf = votes[Stance.BEARISH] - votes[Stance.BULLISH]
    else:
        stance, conf = Stance.NEUTRAL, 0.0
        if votes[Stance.BULLISH] > 0:
            flags.append("conflict")

    sr_text = r1.section("Support and Resistance") or ""
    m = re.findall(r"[-+]?\d+\.\d+", sr_text)
    support = float(m[0]) if m else 0.0
    resistance = float(m[1]) if len(m) > 1 else 0.0

    action = {Stance.BULLISH: "accumulate", Stance.BEARISH: "reduce exposure",
              Stance.NEUTRAL: "hold"}[stance]
    sections = []
    for label, _key in HORIZON_LABELS:
        body = (f"Stance {stance.value}: {action}. "
                f"Entry near support {support:.4f}, "
                f"exit near resistance {resistance:.4f}.")
        sections.append((label, body))
    sections.append(("Risk Notes",
                     f"Vote margin {conf:.4f}; context: {context or 'none'}."))
    return PartialReport(agent=Agent.A3, sections=sections, produced_at=now,
                         stance=stance, confidence=min(conf, 1.0), flags=flags)


def _dedupe_sentences(text: str, seen: set[str]) -> str:
    parts = re.split(r"(?<=[.!?])\s+", text)
    kept = []
    for p in parts:
        key = p.strip().lower()
        if not key:
            continue
        if key in seen:
            continue
        seen.add(key)
        kept.append(p.strip())
    return " ".join(kept)


def run_semantic_agent(
    r1: PartialReport,
    r2: PartialReport,
    r3: PartialReport,
    provider: Optional[Callable[[list[PartialReport]], list[tuple[str, str]]]] = None,
    now: int = 0,
) -> PartialReport:
    """A4: narrative refinement. The stub normalizes section-wise: dedupes
    repeated sentences across inputs and enforces a stable heading order.
    A provider failure degrades to flagged pass-through."""
    inputs = [r1, r2, r3]
    for r in inputs:
        if r is None:
            raise MissingInput("semantic agent needs A1, A2, A3")
    flags = []
    if provider is not None:
        try:
            sections = provider(inputs)
        except Exception:
            sections = [s for r in inputs for s in r.sections]
            flags.append("provider_unavailable")
    else:
        seen: set[str] = set()
        sections = []
        for r in inputs:
            for heading, body in r.sections:
                deduped = _dedupe_sentences(body, seen)
                if deduped:
                    sections.append((heading, deduped))
    if not sections:
        sections = [("Narrative", "No content.")]
    # never introduce a stance absent from inputs
    stances = {r.stance for r in inputs}
    best = max(inputs, key=lambda r: r.confidence)
    stance = best.stance if best.stance in stances else Stance.NEUTRAL
    return PartialReport(agent=Agent.A4, sections=sections, produced_at=now,
                         stance=stance, confidence=best.confidence, flags=flags)


# -- integration / prompt / augmentation ----------------------------------------

_AGENT_ORDER = (Agent.A1, Agent.A2, Agent.A3, Agent.A4)


def integrate(
    r1: PartialReport, r2: PartialReport, r3: PartialReport, r4: PartialReport,
    symbol: str = "", horizon: str = "",
) -> RawReport:
    """Assemble the four partials in fixed order; conflicting stances are
    resolved by the highest-confidence agent and recorded."""
    partials = {Agent.A1: r1, Agent.A2: r2, Agent.A3: r3, Agent.A4: r4}
    for agent, r in partials.items():
        if r is None:
            raise MissingPartial(agent.value)

    sections: list[tuple[str, str]] = []
    provenance: dict[str, list[str]] = {}
    for agent in _AGENT_ORDER:
        for heading, body in partials[agent].sections:
            key = heading
            if key in provenance:
                # same heading from two agents: keep both bodies, merge provenance
                idx = next(i for i, (h, _) in enumerate(sections) if h == key)
                h, existing = sections[idx]
                if body not in existing:
                    sections[idx] = (h, existing + "\n" + body)
                provenance[key].append(agent.value)
            else:
                sections.append((heading, body))
                provenance[key] = [agent.value]

    conflicts = []
    directional = [r for r in partials.values() if r.stance != Stance.NEUTRAL]
    stances = {r.stance for r in directional}
    if len(stances) > 1:
        winner = max(directional, key=lambda r: (r.confidence, r.agent.value))
        losers = [r for r in directional if r.stance != winner.stance]
        for loser in losers:
            conflicts.append(
                f"{loser.agent.value} {loser.stance.value} ({loser.confidence:.2f}) "
                f"overridden by {winner.agent.value} {winner.stance.value} "
                f"({winner.confidence:.2f})"
            )
        stance, conf = winner.stance, winner.confidence
    elif directional:
        best = max(directional, key=lambda r: r.confidence)
        stance, conf = best.stance, best.confidence
    else:
        stance, conf = Stance.NEUTRAL, 0.0
    return RawReport(sections=sections, provenance=provenance, stance=stance,
                     confidence=conf, conflicts=conflicts,
                     symbol=symbol, horizon=horizon)


def build_prompt(raw: RawReport, gamma: float, t: str) -> Prompt:
    """Extract the eight context slots from the raw report. Deterministic;
    missing material yields empty slots, never absent ones."""
    def find(*headings: str) -> str:
        for h, b in raw.sections:
            if h in headings:
                return b
        return ""

    indicator_bits = [b for h, b in raw.sections
                      if h in ("Momentum", "Moving Averages", "Volatility Bands",
                               "Support and Resistance", "Trend")]
    return Prompt(
        asset=raw.symbol,
        horizon=raw.horizon,
        key_indicators=" ".join(indicator_bits),
        sentiment_summary=find("News Sentiment"),
        top_entities=find("Regulation", "Social Signals"),
        risk_notes=find("Risk Notes"),
        date_range=t,
        confidence_threshold=str(gamma),
        temporal_scope=t,
    )


ENHANCEMENT_MARK = "**[+]**"


def augment(raw: RawReport, retrieved: Sequence[Signal]) -> EnhancedReport:
    """Append each validated signal to its best-matching section (max
    token overlap with the section body); headings and pre-existing text
    are never altered, additions are marked and carry provenance."""
    sections = [(h, b) for h, b in raw.sections]
    provenance = {k: list(v) for k, v in raw.provenance.items()}
    used: list[Signal] = []
    for sig in retrieved:
        best_idx, best_overlap = 0, -1.0
        for i, (h, b) in enumerate(sections):
            ov = jaccard(sig.snippet, b)
            if ov > best_overlap:
                best_idx, best_overlap = i, ov
        h, b = sections[best_idx]
        addition = f"\n{ENHANCEMENT_MARK} {sig.snippet} (source: {sig.source})"
        sections[best_idx] = (h, b + addition)
        provenance.setdefault(h, []).append(f"signal:{sig.source}")
        used.append(sig)
    return EnhancedReport(sections=sections, provenance=provenance,
                          enhancement_sources=used, stance=raw.stance,
                          confidence=raw.confidence, symbol=raw.symbol,
                          horizon=raw.horizon)


# -- TTL cache -------------------------------------------------------------------

TTL_TECHNICAL = 30 * 60       # A1
TTL_MARKET = 6 * 3600         # A2
TTL_DYNAMIC_BASE = 3600.0     # A3 base
TTL_DYNAMIC_FLOOR = 5 * 60
TTL_DYNAMIC_CAP = 3600


def dynamic_ttl(queries_per_hour: float) -> float:
    """A3 freshness bound shrinks with interaction frequency."""
    if queries_per_hour <= 0:
        return TTL_DYNAMIC_CAP
    return min(max(TTL_DYNAMIC_BASE / queries_per_hour, TTL_DYNAMIC_FLOOR),
               TTL_DYNAMIC_CAP)


@dataclass
class CacheEntry:
    value: PartialReport
    cached_at: float
    ttl: float


class AgentCache:
    """Per-agent TTL cache. A4 is never cached. Concurrent misses on one
    key coalesce into a single computation via per-key locks."""

    def __init__(self, clock: Callable[[], float] = _time.time,
                 queries_per_hour: float = 1.0):
        self.clock = clock
        self.queries_per_hour = queries_per_hour
        self._entries: dict[tuple, CacheEntry] = {}
        self._key_locks: dict[tuple, threading.Lock] = {}
        self._lock = threading.Lock()
        self.computations = 0

    def ttl_for(self, agent: Agent) -> Optional[float]:
        if agent == Agent.A1:
            return TTL_TECHNICAL
        if agent == Agent.A2:
            return TTL_MARKET
        if agent == Agent.A3:
            return dynamic_ttl(self.queries_per_hour)
        return None  # A4: never cached

    def cached_run(
        self,
        agent: Agent,
        key_inputs: tuple,
        compute: Callable[[], PartialReport],
    ) -> PartialReport:
        ttl = self.ttl_for(agent)
        if ttl is None:
            with self._lock:
                self.computations += 1
            return compute()
        key = (agent.value,) + tuple(key_inputs)
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            now = self.clock()
            entry = self._entries.get(key)
            if entry is not None and now - entry.cached_at < entry.ttl:
                return entry.value
            with self._lock:
                self.computations += 1
            value = compute()
            self._entries[key] = CacheEntry(value=value, cached_at=now, ttl=ttl)
            return value


# -- full pipeline ----------------------------------------------------------------

class ManualClock:
    """Injectable test clock."""

    def __init__(self, t: float = 0.0):
        self.t = float(t)

    def __call__(self) -> float:
        return self.t

    def advance(self, seconds: float) -> None:
        self.t += seconds


def run_pipeline(
    series: CandleSeries,
    news: Sequence[NewsItem],
    retrieved: Sequence[Signal] = (),
    flows: Sequence[Signal] = (),
    social: Sequence[Signal] = (),
    cache: Optional[AgentCache] = None,
    gamma: float = 0.5,
    horizon: str = "short",
    now: int = 0,
    weights: tuple[float, float, float] = DEFAULT_SCORE_WEIGHTS,
    top_k: int = DEFAULT_TOP_K,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[RawReport, EnhancedReport, Prompt]:
    """End-to-end: A1/A2 -> A3 -> A4 -> integrate -> prompt -> augment."""
    symbol = series.symbol
    key = (symbol, horizon, len(series))
    if cache is None:
        cache = AgentCache()
    r1 = cache.cached_run(Agent.A1, key, lambda: run_technical_agent(series, now=now))
    r2 = cache.cached_run(Agent.A2, key,
                          lambda: run_market_agent(news, flows, social, now=now))
    r3 = cache.cached_run(Agent.A3, key,
                          lambda: run_recommendation_agent(r1, r2, now=now))
    r4 = cache.cached_run(Agent.A4, key,
                          lambda: run_semantic_agent(r1, r2, r3, now=now))
    raw = integrate(r1, r2, r3, r4, symbol=symbol, horizon=horizon)
    prompt = build_prompt(raw, gamma, t=horizon)
    validated = validate_signals(list(retrieved), weights, top_k, threshold)
    enhanced = augment(raw, validated)
    return raw, enhanced, prompt
