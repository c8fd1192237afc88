"""News structuring, sentiment, entity extraction, and the doc-entity
knowledge graph with multi-hop expansion.

The sentiment and NER providers are deterministic lexicon/gazetteer stubs
shipped as versioned data files; real providers plug in over the same
callables.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Optional, Sequence

from .errors import MissingField, UnannotatedItem, UnknownSeed

GRAPH_SCHEMA_VERSION = 1


class Sentiment(str, Enum):
    BULLISH = "Bullish"
    BEARISH = "Bearish"


class EntityKind(str, Enum):
    ORG = "ORG"
    PER = "PER"
    EVT = "EVT"
    CRYPTO = "CRYPTO"


@dataclass(frozen=True)
class Entity:
    surface: str
    kind: EntityKind
    canonical_id: str


@dataclass
class NewsItem:
    headline: str
    body: str
    time: int
    source: str
    url: str = ""
    item_id: str = ""
    tokens_mentioned: frozenset[str] = frozenset()
    sentiment: Optional[Sentiment] = None
    sentiment_score: Optional[float] = None
    entities: Optional[list[Entity]] = None

    def __post_init__(self):
        if (self.sentiment is None) != (self.sentiment_score is None):
            raise ValueError("sentiment and sentiment_score must be set together")
        if not self.item_id:
            digest = hashlib.sha1(self.headline.encode("utf-8")).hexdigest()[:8]
            self.item_id = f"{self.source}:{self.time}:{digest}"

    def to_dict(self) -> dict:
        return {
            "id": self.item_id,
            "headline": self.headline,
            "body": self.body,
            "time": self.time,
            "source": self.source,
            "url": self.url,
            "tokens_mentioned": sorted(self.tokens_mentioned),
            "sentiment": self.sentiment.value if self.sentiment else None,
            "sentiment_score": self.sentiment_score,
        }


def _load_data(name: str) -> dict:
    ref = resources.files("mlion.data") / name
    return json.loads(ref.read_text(encoding="utf-8"))


_gazetteer_cache: Optional[dict] = None
_lexicon_cache: Optional[dict] = None


def gazetteer() -> dict:
    global _gazetteer_cache
    if _gazetteer_cache is None:
        _gazetteer_cache = _load_data("gazetteer.json")
    return _gazetteer_cache


def sentiment_lexicon() -> dict:
    global _lexicon_cache
    if _lexicon_cache is None:
        _lexicon_cache = _load_data("sentiment_lexicon.json")
    return _lexicon_cache


_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9'\-]*")


def _tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def parse_news(record: dict) -> NewsItem:
    """Normalize a raw JSON/RSS item; fills tokens_mentioned via the
    crypto gazetteer (aliases canonicalized to tickers)."""
    if not record.get("headline"):
        raise MissingField("headline")
    if record.get("time") in (None, ""):
        raise MissingField("time")
    headline = str(record["headline"])
    body = str(record.get("body", ""))
    aliases = gazetteer()["crypto_aliases"]
    text_tokens = {t.lower() for t in _tokens(headline + " " + body)}
    mentioned = {ticker for alias, ticker in aliases.items() if alias in text_tokens}
    return NewsItem(
        headline=headline,
        body=body,
        time=int(record["time"]),
        source=str(record.get("source", "unknown")),
        url=str(record.get("url", "")),
        item_id=str(record.get("id", "")),
        tokens_mentioned=frozenset(mentioned),
    )


def filter_recent(items: Iterable[NewsItem], t0: int, delta: int) -> list[NewsItem]:
    """Keep items with time in the closed interval [t0 - delta, t0]."""
    return [n for n in items if t0 - delta <= n.time <= t0]


def lexicon_sentiment_score(text: str) -> float:
    """(bull hits - bear hits + N) / (2N) where N = total hits; 0.5 if none."""
    lex = sentiment_lexicon()
    bull = set(lex["bullish"])
    bear = set(lex["bearish"])
    toks = [t.lower() for t in _tokens(text)]
    n_bull = sum(1 for t in toks if t in bull)
    n_bear = sum(1 for t in toks if t in bear)
    n = n_bull + n_bear
    if n == 0:
        return 0.5
    return (n_bull - n_bear + n) / (2.0 * n)


def classify_sentiment(
    item: NewsItem, tau: float = 0.5, provider=None
) -> tuple[Sentiment, float]:
    """Bullish iff score > tau strictly, Bearish otherwise."""
    scorer = provider if provider is not None else lexicon_sentiment_score
    score = float(scorer(item.headline + " " + item.body))
    label = Sentiment.BULLISH if score > tau else Sentiment.BEARISH
    return label, score


# event verb -> nominal used when synthesizing EVT entities
_EVENT_VERBS = {
    "approve": "approval", "approves": "approval", "approved": "approval",
    "ban": "ban", "bans": "ban", "banned": "ban",
    "hack": "hack", "hacked": "hack",
    "launch": "launch", "launches": "launch", "launched": "launch",
    "upgrade": "upgrade", "upgrades": "upgrade", "upgraded": "upgrade",
    "sue": "lawsuit", "sues": "lawsuit", "sued": "lawsuit",
    "halving": "halving",
    "delist": "delisting", "delists": "delisting", "delisted": "delisting",
}


def extract_entities(item: NewsItem, provider=None) -> list[Entity]:
    """Gazetteer-backed CRYPTO/ORG extraction plus heuristics for EVT
    (event verb adjacent to an acronym) and PER (consecutive capitalized
    words). Deduplicated by canonical id, order of first appearance."""
    if provider is not None:
        return provider(item)
    gaz = gazetteer()
    crypto_aliases = gaz["crypto_aliases"]
    orgs = {o.lower(): o for o in gaz["organizations"]}
    text = item.headline + ". " + item.body
    toks = _tokens(text)

    seen: dict[str, Entity] = {}

    def add(surface: str, kind: EntityKind, canonical: str):
        key = f"{kind.value}:{canonical.lower()}"
        if key not in seen:
            seen[key] = Entity(surface=surface, kind=kind, canonical_id=canonical.lower())

    for i, tok in enumerate(toks):
        low = tok.lower()
        if low in orgs:
            add(tok, EntityKind.ORG, orgs[low])
        elif low in crypto_aliases:
            add(tok, EntityKind.CRYPTO, crypto_aliases[low])
        elif low in _EVENT_VERBS:
            nominal = _EVENT_VERBS[low]
            subject = None
            # prefer the following acronym, else the preceding one
            for j in (i + 1, i - 1):
                if 0 <= j < len(toks):
                    cand = toks[j]
                    if cand.isupper() and len(cand) >= 2 and \
                            cand.lower() not in crypto_aliases and cand.lower() not in orgs:
                        subject = cand
                        break
            name = f"{subject} {nominal}" if subject else nominal
            add(name, EntityKind.EVT, name)

    # PER heuristic: runs of >=2 capitalized words, none matching gazetteers
    i = 0
    while i < len(toks):
        if toks[i][0].isupper() and not toks[i].isupper() and \
                toks[i].lower() not in crypto_aliases and toks[i].lower() not in orgs:
            j = i + 1
            while j < len(toks) and toks[j][0].isupper() and not toks[j].isupper() and \
                    toks[j].lower() not in crypto_aliases and toks[j].lower() not in orgs:
                j += 1
            if j - i >= 2:
                name = " ".join(toks[i:j])
                add(name, EntityKind.PER, name)
            i = j
        else:
            i += 1
    return list(seen.values())


@dataclass
class KnowledgeGraph:
    doc_nodes: set[str] = field(default_factory=set)
    ent_nodes: set[str] = field(default_factory=set)
    mention_edges: set[tuple[str, str]] = field(default_factory=set)  # (doc, ent)
    cooccurrence: Counter = field(default_factory=Counter)  # frozenset({e1,e2}) -> weight
    entities: dict[str, Entity] = field(default_factory=dict)

    def doc_entities(self, doc_id: str) -> set[str]:
        return {e for d, e in self.mention_edges if d == doc_id}

    def entity_docs(self, ent_id: str) -> set[str]:
        return {d for d, e in self.mention_edges if e == ent_id}

    def doc_degree(self, doc_id: str) -> int:
        return len(self.doc_entities(doc_id))

    def to_snapshot(self) -> dict:
        return {
            "schema_version": GRAPH_SCHEMA_VERSION,
            "nodes": sorted([f"doc:{d}" for d in self.doc_nodes]
                            + [f"ent:{e}" for e in self.ent_nodes]),
            "edges": sorted([[d, e] for d, e in self.mention_edges]),
            "weights": sorted(
                [[*sorted(pair), w] for pair, w in self.cooccurrence.items()]
            ),
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> "KnowledgeGraph":
        g = cls()
        for node in doc["nodes"]:
            kind, _, name = node.partition(":")
            (g.doc_nodes if kind == "doc" else g.ent_nodes).add(name)
        for d, e in doc["edges"]:
            g.mention_edges.add((d, e))
        for e1, e2, w in doc["weights"]:
            g.cooccurrence[frozenset((e1, e2))] = w
        return g


def build_graph(items: Sequence[NewsItem]) -> KnowledgeGraph:
    """Doc-entity mention edges plus entity co-occurrence weighted by the
    number of shared documents. Items must already carry entities."""
    g = KnowledgeGraph()
    for item in items:
        if item.entities is None:
            raise UnannotatedItem(f"item {item.item_id} has no entities")
        g.doc_nodes.add(item.item_id)
        ent_ids = sorted({e.canonical_id for e in item.entities})
        for e in item.entities:
            g.ent_nodes.add(e.canonical_id)
            g.entities.setdefault(e.canonical_id, e)
            g.mention_edges.add((item.item_id, e.canonical_id))
        for i in range(len(ent_ids)):
            for j in range(i + 1, len(ent_ids)):
                g.cooccurrence[frozenset((ent_ids[i], ent_ids[j]))] += 1
    return g


@dataclass
class Subgraph:
    ent_nodes: set[str]
    doc_nodes: set[str]
    mention_edges: set[tuple[str, str]]


def expand(graph: KnowledgeGraph, seeds: Iterable[str], depth: int) -> Subgraph:
    """BFS closure over alternating entity->doc->entity hops, up to `depth`
    entity hops. depth=0 returns only the seed entities."""
    seeds = set(seeds)
    for s in seeds:
        if s not in graph.ent_nodes:
            raise UnknownSeed(s)
    if depth < 0:
        raise ValueError("depth must be >= 0")
    ents = set(seeds)
    docs: set[str] = set()
    edges: set[tuple[str, str]] = set()
    frontier = set(seeds)
    for _ in range(depth):
        next_frontier: set[str] = set()
        for ent in frontier:
            for doc in graph.entity_docs(ent):
                docs.add(doc)
                edges.add((doc, ent))
                for nxt in graph.doc_entities(doc):
                    edges.add((doc, nxt))
                    if nxt not in ents:
                        next_frontier.add(nxt)
        ents |= next_frontier
        frontier = next_frontier
        if not frontier:
            break
    return Subgraph(ent_nodes=ents, doc_nodes=docs, mention_edges=edges)


def evidence_path(
    graph: KnowledgeGraph, doc_id: str, target_ents: set[str], max_hops: int = 2
) -> list[str]:
    """Shortest doc->...->entity node path reaching any target entity,
    limited to max_hops entity hops; empty list when unreachable."""
    if doc_id not in graph.doc_nodes or not target_ents:
        return []
    from collections import deque as _dq
    start_ents = graph.doc_entities(doc_id)
    for e in sorted(start_ents):
        if e in target_ents:
            return [doc_id, e]
    queue = _dq([(e, [doc_id, e], 0) for e in sorted(start_ents)])
    visited = set(start_ents)
    while queue:
        ent, path, hops = queue.popleft()
        if hops >= max_hops:
            continue
        for doc in sorted(graph.entity_docs(ent)):
            for nxt in sorted(graph.doc_entities(doc)):
                if nxt in visited:
                    continue
                visited.add(nxt)
                new_path = path + [doc, nxt]
                if nxt in target_ents:
                    return new_path
                queue.append((nxt, new_path, hops + 1))
    return []


def annotate(items: Sequence[NewsItem], tau: float = 0.5,
             sentiment_provider=None, ner_provider=None) -> list[NewsItem]:
    """Fill sentiment and entities in place; returns the same list."""
    for item in items:
        label, score = classify_sentiment(item, tau, sentiment_provider)
        item.sentiment = label
        item.sentiment_score = score
        item.entities = extract_entities(item, ner_provider)
    return list(items)
