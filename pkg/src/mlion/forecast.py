"""Dual-track forecast orchestration: input assembly, fusion, metrics,
rolling-accuracy weight adaptation, and text summaries.

The two tracks run through a common provider interface; a deterministic
persistence stub stands in for the language-model track so the full loop
is testable offline.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from . import ml_forecast
from .errors import (
    AlphaOutOfRange,
    HorizonMismatch,
    InsufficientHistory,
    LengthMismatch,
    MissingTemplate,
    NonPositiveActual,
    ProviderUnavailable,
)
from .market_data import (
    Candle,
    CandleSeries,
    PredictionRecord,
    PredictionStore,
    Resolution,
    Source,
    window,
)
from .news_graph import NewsItem

DEFAULT_HORIZONS = {
    Resolution.ONE_DAY: 2,
    Resolution.ONE_HOUR: 12,
    Resolution.FIVE_MIN: 24,
}

ACCURACY_MEAN_FLOOR = 1e-6


@dataclass
class ForecastInput:
    x_14d: CandleSeries
    x_48h: CandleSeries
    news_hist: list[NewsItem]
    news_realtime: list[NewsItem]
    gamma: float
    t0: int

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0,1]")
        if self.x_14d.end > self.t0 or self.x_48h.end > self.t0:
            raise ValueError("input series extend past t0")


@dataclass
class ForecastSeries:
    steps: list[Candle]
    horizon: int
    track: Source

    def __post_init__(self):
        if len(self.steps) != self.horizon:
            raise ValueError("steps length must equal horizon")

    @property
    def closes(self) -> list[float]:
        return [c.c for c in self.steps]


class ForecastProvider(Protocol):
    def forecast(self, inputs: ForecastInput, horizon: int,
                 resolution: Resolution) -> ForecastSeries: ...


@dataclass
class FusionState:
    alpha: float = 0.5
    W: int = 20
    delta: float = 0.55
    step_down: float = 0.05
    llm_window: deque = field(default_factory=deque)
    ml_window: deque = field(default_factory=deque)
    overall_window: deque = field(default_factory=deque)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise AlphaOutOfRange(f"alpha {self.alpha} outside [0,1]")
        for name in ("llm_window", "ml_window", "overall_window"):
            dq = getattr(self, name)
            setattr(self, name, deque(dq, maxlen=self.W))


def build_input(
    daily: CandleSeries,
    hourly: CandleSeries,
    news: Sequence[NewsItem],
    gamma: float,
    t0: int,
    realtime_cutoff: int = 86400,
) -> ForecastInput:
    """Cut the 14-day and 48-hour windows and partition news around t0.

    News older than realtime_cutoff seconds before t0 counts as historical.
    """
    x_14d = window(daily, min(t0, daily.end), 14 * 86400)
    x_48h = window(hourly, min(t0, hourly.end), 48 * 3600)
    hist, realtime = [], []
    for item in news:
        if item.time > t0:
            continue
        (hist if item.time < t0 - realtime_cutoff else realtime).append(item)
    return ForecastInput(x_14d=x_14d, x_48h=x_48h, news_hist=hist,
                         news_realtime=realtime, gamma=gamma, t0=t0)


def fuse(y_llm: ForecastSeries, y_ml: ForecastSeries, alpha: float) -> ForecastSeries:
    """Convex combination of the two tracks, field by field."""
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha {alpha} outside [0,1]")
    if y_llm.horizon != y_ml.horizon:
        raise HorizonMismatch(f"{y_llm.horizon} vs {y_ml.horizon}")
    steps = []
    for a, b in zip(y_llm.steps, y_ml.steps):
        if a.t != b.t:
            raise HorizonMismatch(f"timestamps misaligned: {a.t} vs {b.t}")
        if alpha == 1.0:
            steps.append(a)
        elif alpha == 0.0:
            steps.append(b)
        else:
            mix = lambda u, v: alpha * u + (1.0 - alpha) * v
            steps.append(Candle(t=a.t, o=mix(a.o, b.o), h=mix(a.h, b.h),
                                l=mix(a.l, b.l), c=mix(a.c, b.c), v=mix(a.v, b.v)))
    return ForecastSeries(steps=steps, horizon=y_llm.horizon, track=Source.FUSED)


def accuracy(pred_close: float, actual_close: float) -> float:
    """1 - |predicted - actual| / actual; may go negative for >100% error."""
    if actual_close <= 0:
        raise NonPositiveActual(f"actual close {actual_close} must be > 0")
    return 1.0 - abs(pred_close - actual_close) / actual_close


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def win_rate(
    pred_closes: Sequence[float],
    actual_closes: Sequence[float],
    anchor: float,
) -> float:
    """Fraction of steps whose predicted price direction matches reality.

    The anchor close is the shared predecessor for the first step. A zero
    change only matches another zero change.
    """
    if len(pred_closes) != len(actual_closes) or len(pred_closes) == 0:
        raise LengthMismatch(
            f"lengths {len(pred_closes)} vs {len(actual_closes)}"
        )
    hits = 0
    prev_p, prev_a = anchor, anchor
    for p, a in zip(pred_closes, actual_closes):
        if _sign(p - prev_p) == _sign(a - prev_a):
            hits += 1
        prev_p, prev_a = p, a
    return hits / len(pred_closes)


def update_fusion(
    state: FusionState,
    a_llm: float,
    a_ml: float,
    a_overall: Optional[float] = None,
) -> FusionState:
    """Push per-track accuracies and recompute the fusion weight.

    alpha becomes the LLM share of the clamped rolling means; if the
    overall rolling mean drops below delta, alpha is stepped down further.
    """
    state.llm_window.append(a_llm)
    state.ml_window.append(a_ml)
    state.overall_window.append(
        a_overall if a_overall is not None else (a_llm + a_ml) / 2.0
    )
    mean_llm = min(max(float(np.mean(state.llm_window)), ACCURACY_MEAN_FLOOR), 1.0)
    mean_ml = min(max(float(np.mean(state.ml_window)), ACCURACY_MEAN_FLOOR), 1.0)
    alpha = mean_llm / (mean_llm + mean_ml)
    if float(np.mean(state.overall_window)) < state.delta:
        alpha = max(0.0, alpha - state.step_down)
    state.alpha = min(1.0, max(0.0, alpha))
    return state


# -- text summary ------------------------------------------------------------

_TEMPLATE_DIR = "templates"


def _load_template(name: str, template_dir: Optional[Path] = None) -> str:
    if template_dir is not None:
        path = Path(template_dir) / f"{name}.txt"
        if not path.exists():
            raise MissingTemplate(name)
        return path.read_text(encoding="utf-8")
    ref = resources.files("mlion.data") / _TEMPLATE_DIR / f"{name}.txt"
    if not ref.is_file():
        raise MissingTemplate(name)
    return ref.read_text(encoding="utf-8")


def render_summary(
    final: ForecastSeries,
    omega: float,
    acc: float,
    news: Sequence[NewsItem],
    anchor_close: Optional[float] = None,
    template: str = "forecast_summary",
    template_dir: Optional[Path] = None,
) -> str:
    """Deterministic template fill: direction word, 4-decimal metrics,
    top-3 news headlines by recency. Identical inputs give identical text."""
    text = _load_template(template, template_dir)
    closes = final.closes
    start = anchor_close if anchor_close is not None else closes[0]
    net = closes[-1] - start
    direction = "upward" if net > 0 else "downward" if net < 0 else "sideways"
    top_news = sorted(news, key=lambda n: (-n.time, n.headline))[:3]
    if top_news:
        news_block = "Recent headlines:\n" + "\n".join(
            f"- {n.headline}" for n in top_news
        )
    else:
        news_block = ""
    out = text.format(
        direction=direction,
        horizon=final.horizon,
        last_close=f"{closes[-1]:.4f}",
        win_rate=f"{omega:.4f}",
        accuracy=f"{acc:.4f}",
        news_block=news_block,
    )
    # drop any blank tail left by an empty news section
    return out.rstrip() + "\n"


# -- providers ---------------------------------------------------------------

class StubLLMProvider:
    """Persistence baseline: repeats the last candle, decaying volume 10%
    per step. Deterministic; the seed only namespaces the instance."""

    def __init__(self, seed: int = 0, volume_decay: float = 0.9):
        self.seed = seed
        self.volume_decay = volume_decay

    def forecast(self, inputs: ForecastInput, horizon: int,
                 resolution: Resolution) -> ForecastSeries:
        last = inputs.x_48h.candles[-1] if resolution != Resolution.ONE_DAY \
            else inputs.x_14d.candles[-1]
        step = resolution.step
        steps = []
        vol = last.v
        for i in range(1, horizon + 1):
            vol *= self.volume_decay
            steps.append(Candle(t=last.t + i * step, o=last.c, h=last.c,
                                l=last.c, c=last.c, v=vol))
        return ForecastSeries(steps=steps, horizon=horizon, track=Source.LLM)


class MLTrackProvider:
    """Fits per-component ridge models on the input windows and rolls the
    forecast forward one step at a time, clamping OHLC consistency."""

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def forecast(self, inputs: ForecastInput, horizon: int,
                 resolution: Resolution) -> ForecastSeries:
        series = inputs.x_48h if resolution != Resolution.ONE_DAY else inputs.x_14d
        candles = series.candles
        if len(candles) < 4:
            raise InsufficientHistory(4, len(candles))
        X = np.vstack([ml_forecast.engineer_features(c) for c in candles[:-1]])
        models = {}
        for j, attr in enumerate(("o", "h", "l", "c", "v")):
            y = np.array([getattr(c, attr) for c in candles[1:]])
            models[attr] = ml_forecast.RegressionModel(
                ml_forecast.RidgeConfig(alpha=self.alpha)
            ).fit(X, y)
        step = resolution.step
        cur = candles[-1]
        out = []
        for i in range(1, horizon + 1):
            feats = ml_forecast.engineer_features(cur)
            o, h, l, c, v = (models[a].predict_one(feats) for a in ("o", "h", "l", "c", "v"))
            o = max(o, 1e-9)
            c = max(c, 1e-9)
            o, h, l, c, v = ml_forecast.clamp_ohlcv(o, h, l, c, v)
            l = max(l, 1e-9)
            cur = Candle(t=candles[-1].t + i * step, o=o, h=h, l=l, c=c, v=v)
            out.append(cur)
        return ForecastSeries(steps=out, horizon=horizon, track=Source.ML)


class HTTPForecastProvider:
    """Remote track speaking the JSON provider contract."""

    def __init__(self, url: str, track: Source, timeout: float = 10.0, retries: int = 1):
        self.url = url
        self.track = track
        self.timeout = timeout
        self.retries = retries

    def forecast(self, inputs: ForecastInput, horizon: int,
                 resolution: Resolution) -> ForecastSeries:
        import urllib.error
        import urllib.request

        body = json.dumps({
            "symbol": inputs.x_14d.symbol,
            "resolution": resolution.code,
            "horizon": horizon,
            "candles_14d": [c.to_dict() for c in inputs.x_14d.candles],
            "candles_48h": [c.to_dict() for c in inputs.x_48h.candles],
            "news": [n.to_dict() for n in inputs.news_hist + inputs.news_realtime],
            "gamma": inputs.gamma,
            "t0": inputs.t0,
        }).encode("utf-8")
        last_err = None
        for _ in range(self.retries + 1):
            req = urllib.request.Request(
                self.url, data=body, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                steps = [Candle.from_dict(s) for s in payload["steps"]]
                return ForecastSeries(steps=steps, horizon=horizon, track=self.track)
            except (urllib.error.URLError, OSError, KeyError, ValueError) as e:
                last_err = e
        raise ProviderUnavailable(self.track.value, str(last_err))


# -- orchestration -------------------------------------------------------------

@dataclass
class ForecastResult:
    fused: ForecastSeries
    llm: Optional[ForecastSeries]
    ml: Optional[ForecastSeries]
    alpha: float
    degraded: bool
    summary: str
    record_ids: list[int] = field(default_factory=list)


class Orchestrator:
    """Runs both tracks, fuses, persists per-track records, renders text.

    FusionState mutation is serialized per (symbol, resolution) key.
    """

    def __init__(
        self,
        llm_provider,
        ml_provider,
        store: Optional[PredictionStore] = None,
        horizons: Optional[dict] = None,
        template_dir: Optional[Path] = None,
    ):
        self.llm_provider = llm_provider
        self.ml_provider = ml_provider
        self.store = store
        self.horizons = dict(DEFAULT_HORIZONS)
        if horizons:
            self.horizons.update(horizons)
        self.template_dir = template_dir
        self._states: dict[tuple[str, str], FusionState] = {}
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def state_for(self, symbol: str, resolution: Resolution) -> FusionState:
        key = (symbol, resolution.code)
        with self._registry_lock:
            if key not in self._states:
                self._states[key] = FusionState()
                self._locks[key] = threading.Lock()
            return self._states[key]

    def run_forecast(
        self,
        symbol: str,
        resolution: Resolution,
        inputs: ForecastInput,
        news: Sequence[NewsItem] = (),
        state: Optional[FusionState] = None,
    ) -> ForecastResult:
        key = (symbol, resolution.code)
        if state is None:
            state = self.state_for(symbol, resolution)
        with self._registry_lock:
            lock = self._locks.setdefault(key, threading.Lock())
        horizon = self.horizons[resolution]

        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_llm = pool.submit(self.llm_provider.forecast, inputs, horizon, resolution)
            fut_ml = pool.submit(self.ml_provider.forecast, inputs, horizon, resolution)
            y_llm, llm_err = _collect(fut_llm)
            y_ml, ml_err = _collect(fut_ml)

        if llm_err and ml_err:
            raise ProviderUnavailable("both", f"LLM: {llm_err}; ML: {ml_err}")

        with lock:
            degraded = False
            if llm_err:
                alpha, fused, degraded = 0.0, _as_fused(y_ml), True
            elif ml_err:
                alpha, fused, degraded = 1.0, _as_fused(y_llm), True
            else:
                alpha = state.alpha
                fused = fuse(y_llm, y_ml, alpha)

        record_ids = []
        if self.store is not None:
            for fs in (y_ml, y_llm, fused):
                if fs is None:
                    continue
                rec = PredictionRecord(
                    symbol=symbol, resolution=resolution, issued_at=inputs.t0,
                    horizon_steps=horizon, predicted=fs.steps, source=fs.track,
                )
                record_ids.append(self.store.store_prediction(rec))

        anchor = inputs.x_48h.candles[-1].c if resolution != Resolution.ONE_DAY \
            else inputs.x_14d.candles[-1].c
        summary = render_summary(
            fused, omega=win_rate(fused.closes, fused.closes, anchor),
            acc=1.0, news=news, anchor_close=anchor,
            template_dir=self.template_dir,
        )
        return ForecastResult(fused=fused, llm=y_llm, ml=y_ml, alpha=alpha,
                              degraded=degraded, summary=summary,
                              record_ids=record_ids)

    def evaluate(
        self,
        symbol: str,
        resolution: Resolution,
        fused: ForecastSeries,
        llm: Optional[ForecastSeries],
        ml: Optional[ForecastSeries],
        actual_closes: Sequence[float],
        anchor: float,
    ) -> dict:
        """Score each track against realized closes and adapt the weight."""
        state = self.state_for(symbol, resolution)
        metrics = {}
        a_llm = a_ml = None
        if llm is not None:
            a_llm = accuracy(llm.closes[-1], actual_closes[-1])
            metrics["llm_accuracy"] = a_llm
        if ml is not None:
            a_ml = accuracy(ml.closes[-1], actual_closes[-1])
            metrics["ml_accuracy"] = a_ml
        a_fused = accuracy(fused.closes[-1], actual_closes[-1])
        metrics["fused_accuracy"] = a_fused
        metrics["win_rate"] = win_rate(fused.closes, actual_closes, anchor)
        if a_llm is not None and a_ml is not None:
            key = (symbol, resolution.code)
            with self._registry_lock:
                lock = self._locks.setdefault(key, threading.Lock())
            with lock:
                update_fusion(state, a_llm, a_ml, a_fused)
        metrics["alpha"] = state.alpha
        return metrics


def _collect(future):
    try:
        return future.result(), None
    except Exception as e:  # degrade to single-track rather than abort
        return None, e


def _as_fused(fs: ForecastSeries) -> ForecastSeries:
    return ForecastSeries(steps=list(fs.steps), horizon=fs.horizon, track=Source.FUSED)


def input_digest(inputs: ForecastInput) -> str:
    """Stable content hash, usable as a cache key component."""
    h = hashlib.sha256()
    for c in inputs.x_14d.candles + inputs.x_48h.candles:
        h.update(json.dumps(c.to_dict(), sort_keys=True).encode())
    h.update(f"{inputs.gamma}:{inputs.t0}".encode())
    return h.hexdigest()[:16]
