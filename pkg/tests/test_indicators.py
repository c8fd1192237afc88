import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlion import indicators
from mlion.errors import InsufficientHistory
from mlion.market_data import Candle, CandleSeries, Resolution


def series_from_closes(closes, symbol="X"):
    candles = []
    for i, c in enumerate(closes):
        o = closes[i - 1] if i > 0 else c
        candles.append(Candle(
            t=1700000000 + i * 86400,
            o=o, h=max(o, c) * 1.001, l=min(o, c) * 0.999, c=c, v=100 + i,
        ))
    return CandleSeries(symbol=symbol, resolution=Resolution.ONE_DAY,
                        candles=candles)


def wilder_rsi_oracle(closes, period):
    # naive spreadsheet-style recurrence, kept independent of the library
    deltas = [closes[i + 1] - closes[i] for i in range(len(closes) - 1)]
    gains = [max(d, 0.0) for d in deltas]
    losses = [max(-d, 0.0) for d in deltas]
    ag = sum(gains[:period]) / period
    al = sum(losses[:period]) / period
    out = []

    def val(ag, al):
        if ag == 0 and al == 0:
            return 50.0
        if al == 0:
            return 100.0
        if ag == 0:
            return 0.0
        return 100.0 - 100.0 / (1.0 + ag / al)

    out.append(val(ag, al))
    for i in range(period, len(deltas)):
        ag = (ag * (period - 1) + gains[i]) / period
        al = (al * (period - 1) + losses[i]) / period
        out.append(val(ag, al))
    return out


class TestRSI:
    def test_strictly_increasing_is_100(self):
        s = series_from_closes([100 + i for i in range(20)])
        assert all(v == 100.0 for v in indicators.rsi(s, 14))

    def test_strictly_decreasing_is_0(self):
        s = series_from_closes([100 - i for i in range(20)])
        assert all(v == 0.0 for v in indicators.rsi(s, 14))

    def test_15_close_fixture_matches_oracle(self):
        closes = [44.34, 44.09, 44.15, 43.61, 44.33, 44.83, 45.10, 45.42,
                  45.84, 46.08, 45.89, 46.03, 45.61, 46.28, 46.28]
        s = series_from_closes(closes)
        got = indicators.rsi(s, 14)
        expected = wilder_rsi_oracle(closes, 14)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_insufficient_history(self):
        with pytest.raises(InsufficientHistory):
            indicators.rsi(series_from_closes([1, 2, 3]), 14)

    @given(st.lists(st.floats(min_value=1.0, max_value=1000.0), min_size=16,
                    max_size=64))
    @settings(max_examples=50, deadline=None)
    def test_rsi_bounded(self, closes):
        s = series_from_closes(closes)
        for v in indicators.rsi(s, 14):
            assert 0.0 <= v <= 100.0


def ema_oracle(values, span):
    k = 2.0 / (span + 1.0)
    out = [values[0]]
    for v in values[1:]:
        out.append(v * k + out[-1] * (1 - k))
    return out


class TestMACD:
    def test_constant_series_all_zero(self):
        s = series_from_closes([50.0] * 40)
        m, sig, hist = indicators.macd(s)
        assert all(abs(v) < 1e-12 for v in m + sig + hist)

    def test_fixture_matches_ema_oracle(self):
        closes = [100 + 3 * math.sin(i / 3) + 0.2 * i for i in range(40)]
        s = series_from_closes(closes)
        m, sig, hist = indicators.macd(s)
        fast = ema_oracle(closes, 12)
        slow = ema_oracle(closes, 26)
        m_exp = [a - b for a, b in zip(fast, slow)]
        sig_exp = ema_oracle(m_exp, 9)
        assert m == pytest.approx(m_exp, abs=1e-10)
        assert sig == pytest.approx(sig_exp, abs=1e-10)

    @given(st.lists(st.floats(min_value=1.0, max_value=1000.0), min_size=36,
                    max_size=64))
    @settings(max_examples=30, deadline=None)
    def test_histogram_identity(self, closes):
        s = series_from_closes(closes)
        m, sig, hist = indicators.macd(s)
        for a, b, h in zip(m, sig, hist):
            assert h == pytest.approx(a - b, abs=1e-9)


class TestBollinger:
    def test_constant_closes_bands_collapse(self):
        s = series_from_closes([42.0] * 25)
        mid, upper, lower = indicators.bollinger(s)
        assert mid == upper == lower

    def test_k_zero(self):
        s = series_from_closes([10 + i * 0.5 for i in range(25)])
        mid, upper, lower = indicators.bollinger(s, k=0)
        assert mid == upper == lower

    def test_fixture_matches_rolling_oracle(self):
        closes = [20 + math.cos(i / 2) * 2 + 0.1 * i for i in range(25)]
        s = series_from_closes(closes)
        mid, upper, lower = indicators.bollinger(s, period=20, k=2)
        for idx, i in enumerate(range(19, 25)):
            win = closes[i - 19 : i + 1]
            m = sum(win) / 20
            var = sum((x - m) ** 2 for x in win) / 20
            sd = math.sqrt(var)
            assert mid[idx] == pytest.approx(m, abs=1e-10)
            assert upper[idx] == pytest.approx(m + 2 * sd, abs=1e-10)
            assert lower[idx] == pytest.approx(m - 2 * sd, abs=1e-10)

    @given(st.lists(st.floats(min_value=1.0, max_value=1000.0), min_size=20,
                    max_size=64))
    @settings(max_examples=30, deadline=None)
    def test_band_ordering(self, closes):
        s = series_from_closes(closes)
        mid, upper, lower = indicators.bollinger(s)
        for m, u, lo in zip(mid, upper, lower):
            assert lo <= m + 1e-12 and m <= u + 1e-12


class TestSupportResistance:
    def test_min_max(self):
        candles = [
            Candle(t=1700000000 + i * 86400, o=2 + i, h=4 + i, l=1 + i,
                   c=3 + i, v=1)
            for i in range(3)
        ]
        s = CandleSeries("X", Resolution.ONE_DAY, candles)
        assert indicators.support_resistance(s, 3) == (1, 6)

    def test_single_candle(self):
        c = Candle(t=1700000000, o=5, h=7, l=4, c=6, v=1)
        s = CandleSeries("X", Resolution.ONE_DAY, [c])
        assert indicators.support_resistance(s, 1) == (4, 7)

    def test_30_candle_fixture(self):
        s = series_from_closes([100 + 10 * math.sin(i) for i in range(30)])
        sup, res = indicators.support_resistance(s, 30)
        assert sup == min(c.l for c in s.candles)
        assert res == max(c.h for c in s.candles)


class TestTrendStrength:
    def test_constant_is_zero(self):
        s = series_from_closes([77.0] * 10)
        assert indicators.trend_strength(s, 10) == pytest.approx(0.0, abs=1e-12)

    def test_linear_ramp_closed_form(self):
        # closes 100..110: slope 1, mean 105
        s = series_from_closes([100.0 + i for i in range(11)])
        got = indicators.trend_strength(s, 11)
        assert got == pytest.approx(1.0 / 105.0, abs=1e-12)

    def test_antisymmetric_under_reversal(self):
        closes = [100 + 2 * i + math.sin(i) for i in range(15)]
        fwd = indicators.trend_strength(series_from_closes(closes), 15)
        rev = indicators.trend_strength(series_from_closes(closes[::-1]), 15)
        assert fwd == pytest.approx(-rev, abs=1e-10)


class TestNaiveRecomputation:
    def test_all_indicators_match_naive_oracle(self):
        rng = np.random.default_rng(7)
        closes = list(100 + np.cumsum(rng.normal(0, 1, 64)))
        s = series_from_closes(closes)

        assert indicators.rsi(s, 14) == pytest.approx(
            wilder_rsi_oracle(closes, 14), abs=1e-10)

        m, sig, hist = indicators.macd(s)
        fast, slow = ema_oracle(closes, 12), ema_oracle(closes, 26)
        m_exp = [a - b for a, b in zip(fast, slow)]
        assert m == pytest.approx(m_exp, abs=1e-9)

        mid, _, _ = indicators.bollinger(s)
        for idx, i in enumerate(range(19, len(closes))):
            assert mid[idx] == pytest.approx(
                sum(closes[i - 19 : i + 1]) / 20, abs=1e-9)
