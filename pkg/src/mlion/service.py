"""HTTP API over the engine. Every response is producible via direct
library calls; the service adds routing and persistence wiring only.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import forecast as fc
from . import news_graph as ng
from . import recommend as rec
from . import report as rp
from .config import ApiConfig
from .errors import MlionError
from .market_data import (
    CandleSeries,
    PredictionStore,
    Resolution,
    ingest_candles,
    window,
)


class Engine:
    """Shared state behind the API: candle series, stores, fusion states,
    the annotated news corpus with its graph, and the feedback policy."""

    def __init__(self, config: ApiConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.series: dict[tuple[str, str], CandleSeries] = {}
        self.store = PredictionStore(self.data_dir / "predictions")
        self.feedback = rec.FeedbackLog(self.data_dir / "feedback.jsonl")
        self.theta = self.feedback.replay(eta=config.eta)
        self._theta_lock = threading.Lock()
        self.news: list[ng.NewsItem] = []
        self.graph: Optional[ng.KnowledgeGraph] = None
        self.cache = rp.AgentCache(queries_per_hour=config.queries_per_hour)
        if config.llm_provider_url:
            llm = fc.HTTPForecastProvider(
                config.llm_provider_url, fc.Source.LLM,
                timeout=config.provider_timeout, retries=config.provider_retries)
        else:
            llm = fc.StubLLMProvider(seed=config.seed)
        self.orchestrator = fc.Orchestrator(
            llm_provider=llm,
            ml_provider=fc.MLTrackProvider(),
            store=self.store,
            horizons={
                Resolution.ONE_DAY: config.horizon_1d,
                Resolution.ONE_HOUR: config.horizon_1h,
                Resolution.FIVE_MIN: config.horizon_5m,
            },
        )
        self._load_fixtures()

    def _load_fixtures(self) -> None:
        klines = self.data_dir / "klines"
        if klines.is_dir():
            for path in sorted(klines.glob("*.csv")):
                stem = path.stem  # {symbol}_{resolution}
                symbol, _, res_code = stem.rpartition("_")
                if not symbol:
                    continue
                try:
                    resolution = Resolution.from_code(res_code)
                except ValueError:
                    continue
                series = ingest_candles(path.read_bytes(), "CSV", symbol,
                                        resolution, allow_gaps=True)
                self.series[(symbol, res_code)] = series
        news_path = self.data_dir / "news.jsonl"
        if news_path.exists():
            import json
            items = []
            for line in news_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    items.append(ng.parse_news(json.loads(line)))
            self.news = ng.annotate(items, tau=self.config.sentiment_tau)
            self.graph = ng.build_graph(self.news)

    def get_series(self, symbol: str, resolution: str) -> CandleSeries:
        key = (symbol, resolution)
        if key not in self.series:
            raise KeyError(symbol)
        return self.series[key]

    def update_theta(self, event: rec.FeedbackEvent) -> list[float]:
        with self._theta_lock:
            self.feedback.record(event)
            self.theta = rec.update_policy(self.theta, event, self.config.eta)
            return list(self.theta)


class ForecastRequest(BaseModel):
    symbol: str
    resolution: str = "1d"
    gamma: float = 0.5


class FeedbackRequest(BaseModel):
    user: str
    recommendation: str
    outcome: float
    features: list[float]


class ChatRequest(BaseModel):
    session_id: str
    message: str


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message})


def create_app(config: ApiConfig) -> FastAPI:
    engine = Engine(config)
    app = FastAPI(title="mlion", version="0.1.0")
    app.state.engine = engine

    @app.exception_handler(MlionError)
    async def _mlion_error(request: Request, exc: MlionError):
        return _error(400, type(exc).__name__.upper(), str(exc))

    @app.get("/api/coins")
    def get_coins():
        return {"coins": sorted({sym for sym, _ in engine.series})}

    @app.get("/api/klines")
    def get_klines(symbol: str, resolution: str = "1d",
                   start: Optional[int] = None, end: Optional[int] = None):
        try:
            series = engine.get_series(symbol, resolution)
        except KeyError:
            return _error(404, "UNKNOWN_SYMBOL", f"no data for {symbol}@{resolution}")
        candles = [c for c in series.candles
                   if (start is None or c.t >= start)
                   and (end is None or c.t <= end)]
        return {"symbol": symbol, "resolution": resolution,
                "candles": [c.to_dict() for c in candles]}

    @app.get("/api/predictions")
    def get_predictions(symbol: str, resolution: str = "1d"):
        res = Resolution.from_code(resolution)
        records = engine.store.load_predictions(symbol, res)
        return {"predictions": [r.to_dict() for r in records]}

    @app.post("/api/forecast")
    def post_forecast(req: ForecastRequest):
        try:
            daily = engine.get_series(req.symbol, "1d")
            hourly = engine.get_series(req.symbol, "1h")
        except KeyError:
            return _error(404, "UNKNOWN_SYMBOL", f"no data for {req.symbol}")
        res = Resolution.from_code(req.resolution)
        t0 = max(daily.end, hourly.end)
        inputs = fc.build_input(daily, hourly, engine.news, req.gamma, t0)
        result = engine.orchestrator.run_forecast(req.symbol, res, inputs,
                                                  news=engine.news)
        return {
            "symbol": req.symbol,
            "resolution": req.resolution,
            "alpha": result.alpha,
            "degraded": result.degraded,
            "fused": [c.to_dict() for c in result.fused.steps],
            "ml": [c.to_dict() for c in result.ml.steps] if result.ml else None,
            "llm": [c.to_dict() for c in result.llm.steps] if result.llm else None,
            "summary": result.summary,
            "record_ids": result.record_ids,
            "issued_at": t0,
        }

    @app.get("/api/report")
    def get_report(symbol: str, horizon: str = "short"):
        try:
            daily = engine.get_series(symbol, "1d")
        except KeyError:
            return _error(404, "UNKNOWN_SYMBOL", f"no data for {symbol}")
        raw, enhanced, prompt = rp.run_pipeline(
            daily, engine.news, cache=engine.cache, horizon=horizon,
            weights=config.score_weights, top_k=config.score_top_k,
            threshold=config.score_threshold,
        )
        return {
            "symbol": symbol,
            "horizon": horizon,
            "raw": {"sections": [[h, b] for h, b in raw.sections],
                    "stance": raw.stance.value,
                    "confidence": raw.confidence,
                    "conflicts": raw.conflicts,
                    "provenance": raw.provenance},
            "enhanced": {"sections": [[h, b] for h, b in enhanced.sections],
                         "enhancement_sources":
                             [s.to_dict() for s in enhanced.enhancement_sources],
                         "provenance": enhanced.provenance},
            "prompt": prompt.slots(),
        }

    @app.get("/api/recommendations")
    def get_recommendations(category: str = Query(...),
                            risk: str = "Medium", horizon: str = "Medium",
                            user: str = "anonymous", top_k: int = 5):
        intent = rec.parse_intent(
            {"category": category, "risk": risk, "horizon": horizon})
        if engine.graph is None or not engine.news:
            return {"summary": "no news corpus loaded", "ranked_items": [],
                    "intent": {"category": intent.category,
                               "risk": intent.risk.value,
                               "horizon": intent.horizon.value},
                    "generated_at": 0, "theta": list(engine.theta)}
        t0 = max(n.time for n in engine.news)
        items = ng.filter_recent(engine.news, t0, intent.window_seconds)
        result = rec.recommend(items, intent, engine.graph, engine.theta,
                               top_k=top_k, t0=t0)
        payload = result.to_dict()
        payload["theta"] = list(engine.theta)
        return payload

    @app.post("/api/feedback")
    def post_feedback(req: FeedbackRequest):
        event = rec.FeedbackEvent(user=req.user,
                                  recommendation=req.recommendation,
                                  outcome=req.outcome, features=req.features)
        theta = engine.update_theta(event)
        return {"status": "ok", "theta": theta}

    @app.post("/api/chat")
    def post_chat(req: ChatRequest):
        text = req.message.lower()
        if "recommend" in text or "invest" in text:
            words = set(rp.token_set(req.message))
            cats = ng.gazetteer()["categories"]
            category = next((cats[w] for w in sorted(words) if w in cats), "Layer1")
            resp = get_recommendations(category=category)
            return {"session_id": req.session_id, "route": "recommendation",
                    "payload": resp}
        symbols = sorted({sym for sym, _ in engine.series})
        mentioned = next(
            (s for s in symbols if s.lower() in text.split() or s.lower() in text),
            symbols[0] if symbols else None)
        if mentioned is None:
            return _error(404, "UNKNOWN_SYMBOL", "no symbols ingested")
        resp = get_report(symbol=mentioned)
        return {"session_id": req.session_id, "route": "report",
                "payload": resp}

    return app
