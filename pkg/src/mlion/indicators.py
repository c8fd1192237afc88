"""Technical indicators feeding the technical analysis agent.

All functions are pure; RSI uses Wilder smoothing, MACD standard EMA
recurrences, Bollinger population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistory
from .market_data import CandleSeries


@dataclass
class IndicatorBundle:
    rsi: list[float]
    macd: tuple[list[float], list[float], list[float]]
    bollinger: tuple[list[float], list[float], list[float]]
    support: float
    resistance: float
    trend_strength: float
    volume_trend: float  # rolling volume mean delta, an interpretation


def rsi(series: CandleSeries, period: int = 14) -> list[float]:
    """Wilder RSI over closes; first value emitted at index `period`.

    Zero average loss maps to 100, zero average gain to 0, a fully flat
    window to 50.
    """
    closes = series.closes
    if len(closes) <= period:
        raise InsufficientHistory(period + 1, len(closes))
    deltas = np.diff(closes)
    gains = np.clip(deltas, 0.0, None)
    losses = np.clip(-deltas, 0.0, None)
    avg_gain = float(np.mean(gains[:period]))
    avg_loss = float(np.mean(losses[:period]))
    out = [_rsi_value(avg_gain, avg_loss)]
    for i in range(period, len(deltas)):
        avg_gain = (avg_gain * (period - 1) + gains[i]) / period
        avg_loss = (avg_loss * (period - 1) + losses[i]) / period
        out.append(_rsi_value(avg_gain, avg_loss))
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    if avg_gain == 0.0:
        return 0.0
    rs = avg_gain / avg_loss
    return 100.0 - 100.0 / (1.0 + rs)


def _ema(values: list[float] | np.ndarray, span: int) -> np.ndarray:
    k = 2.0 / (span + 1.0)
    out = np.empty(len(values))
    out[0] = values[0]
    for i in range(1, len(values)):
        out[i] = values[i] * k + out[i - 1] * (1.0 - k)
    return out


def macd(
    series: CandleSeries, fast: int = 12, slow: int = 26, signal: int = 9
) -> tuple[list[float], list[float], list[float]]:
    """(macd_line, signal_line, histogram) over the close sequence."""
    closes = series.closes
    if len(closes) <= slow + signal:
        raise InsufficientHistory(slow + signal + 1, len(closes))
    macd_line = _ema(closes, fast) - _ema(closes, slow)
    signal_line = _ema(macd_line, signal)
    hist = macd_line - signal_line
    return list(macd_line), list(signal_line), list(hist)


def bollinger(
    series: CandleSeries, period: int = 20, k: float = 2.0
) -> tuple[list[float], list[float], list[float]]:
    """Rolling mean +/- k population standard deviations of the close."""
    closes = np.asarray(series.closes)
    if len(closes) < period:
        raise InsufficientHistory(period, len(closes))
    mid, upper, lower = [], [], []
    for i in range(period - 1, len(closes)):
        win = closes[i - period + 1 : i + 1]
        m = float(np.mean(win))
        s = float(np.std(win))  # population std
        mid.append(m)
        upper.append(m + k * s)
        lower.append(m - k * s)
    return mid, upper, lower


def support_resistance(series: CandleSeries, lookback: int) -> tuple[float, float]:
    """(min low, max high) over the trailing lookback window."""
    if len(series) < lookback or lookback <= 0:
        raise InsufficientHistory(lookback, len(series))
    win = series.candles[-lookback:]
    return min(c.l for c in win), max(c.h for c in win)


def trend_strength(series: CandleSeries, lookback: int) -> float:
    """Least-squares slope of close vs index, normalized by the mean close."""
    if len(series) < lookback or lookback <= 0:
        raise InsufficientHistory(lookback, len(series))
    closes = np.asarray(series.closes[-lookback:])
    if len(closes) < 2:
        return 0.0
    x = np.arange(len(closes), dtype=float)
    slope = float(np.polyfit(x, closes, 1)[0])
    mean = float(np.mean(closes))
    return slope / mean if mean != 0 else 0.0


def volume_trend(series: CandleSeries, lookback: int) -> float:
    """Delta between the recent-half and earlier-half mean volume."""
    if len(series) < lookback or lookback < 2:
        raise InsufficientHistory(max(lookback, 2), len(series))
    vols = np.asarray([c.v for c in series.candles[-lookback:]])
    half = len(vols) // 2
    return float(np.mean(vols[half:]) - np.mean(vols[:half]))


def compute_bundle(
    series: CandleSeries,
    rsi_period: int = 14,
    boll_period: int = 20,
    lookback: int = 20,
) -> IndicatorBundle:
    sup, res = support_resistance(series, min(lookback, len(series)))
    return IndicatorBundle(
        rsi=rsi(series, rsi_period),
        macd=macd(series),
        bollinger=bollinger(series, boll_period),
        support=sup,
        resistance=res,
        trend_strength=trend_strength(series, min(lookback, len(series))),
        volume_trend=volume_trend(series, min(lookback, len(series))),
    )
