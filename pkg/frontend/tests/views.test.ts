import { describe, expect, it } from "vitest";

import {
  ENHANCEMENT_MARK,
  buildChartView,
  buildRecommendationView,
  buildReportView,
  renderChart,
  renderReport,
  rsiGauge,
} from "../src/views.js";
import type {
  KlinesResponse,
  PredictionRecord,
  ReportResponse,
  Track,
} from "../src/types.js";

const T0 = 1700000000;
const DAY = 86400;

function candle(t: number, c: number) {
  return { t, o: c, h: c * 1.01, l: c * 0.99, c, v: 100 };
}

function record(source: Track, closes: number[]): PredictionRecord {
  return {
    schema_version: 1,
    symbol: "BTC",
    resolution: "1d",
    issued_at: T0,
    horizon_steps: closes.length,
    predicted: closes.map((c, i) => candle(T0 + (i + 1) * DAY, c)),
    source,
    record_id: 1,
  };
}

const klines: KlinesResponse = {
  symbol: "BTC",
  resolution: "1d",
  candles: [candle(T0 - DAY, 99), candle(T0, 100)],
};

const predictions = [
  record("ML", [101, 102]),
  record("LLM", [103, 104]),
  record("Fused", [102, 103]),
];

const forecastMeta = { alpha: 0.5, degraded: false, issued_at: T0 };

describe("chart view", () => {
  it("puts one overlay point per forecast step beyond the last candle", () => {
    const view = buildChartView(klines, predictions, forecastMeta, "Fused", T0);
    expect(view.overlay).toHaveLength(2);
    expect(view.overlay.every((p) => p.t > T0)).toBe(true);
  });

  it("displays alpha to two decimals", () => {
    const view = buildChartView(klines, predictions, { ...forecastMeta, alpha: 0.4375 }, "Fused", T0);
    expect(view.alphaDisplay).toBe("0.44");
  });

  it("ML toggle shows exactly the ML record closes", () => {
    const view = buildChartView(klines, predictions, forecastMeta, "ML", T0);
    expect(view.overlay.map((p) => p.close)).toEqual([101, 102]);
  });

  it("flags stale data after the configured age", () => {
    const fresh = buildChartView(klines, predictions, forecastMeta, "Fused", T0 + 60, 900);
    const stale = buildChartView(klines, predictions, forecastMeta, "Fused", T0 + 901, 900);
    expect(fresh.stale).toBe(false);
    expect(stale.stale).toBe(true);
  });

  it("renders candles and forecast points as distinct elements", () => {
    const html = renderChart(buildChartView(klines, predictions, forecastMeta, "Fused", T0));
    expect(html.match(/class="candle/g)).toHaveLength(2);
    expect(html.match(/class="forecast-point"/g)).toHaveLength(2);
  });
});

describe("rsi gauge", () => {
  it("uses standard 30/70 bands", () => {
    expect(rsiGauge(10)).toBe("oversold");
    expect(rsiGauge(30)).toBe("neutral");
    expect(rsiGauge(50)).toBe("neutral");
    expect(rsiGauge(70)).toBe("neutral");
    expect(rsiGauge(85)).toBe("overbought");
  });
});

function reportPayload(withAdditions: boolean): ReportResponse {
  const rawSections: [string, string][] = [
    ["Technical Picture", "RSI at 55, trend mildly positive."],
    ["Risk Notes", "Liquidity thin over the weekend."],
  ];
  const sources = withAdditions
    ? [
        {
          source: "reuters",
          snippet: "Exchange reserves fall sharply",
          time: T0,
          url: "",
          relevance: 0.9,
          recency: 0.9,
          credibility: 0.95,
          score: 0.91,
        },
        {
          source: "blog",
          snippet: "Weekend volumes at yearly lows",
          time: T0,
          url: "",
          relevance: 0.7,
          recency: 0.8,
          credibility: 0.4,
          score: 0.67,
        },
      ]
    : [];
  const enhancedSections: [string, string][] = withAdditions
    ? [
        [
          "Technical Picture",
          `RSI at 55, trend mildly positive.\n${ENHANCEMENT_MARK} Exchange reserves fall sharply (source: reuters)`,
        ],
        [
          "Risk Notes",
          `Liquidity thin over the weekend.\n${ENHANCEMENT_MARK} Weekend volumes at yearly lows (source: blog)`,
        ],
      ]
    : rawSections;
  return {
    symbol: "BTC",
    horizon: "short",
    raw: {
      sections: rawSections,
      stance: "Neutral",
      confidence: 0.5,
      conflicts: [],
      provenance: {},
    },
    enhanced: {
      sections: enhancedSections,
      enhancement_sources: sources,
      provenance: {},
    },
    prompt: {},
  };
}

describe("report view", () => {
  it("marks exactly the enhancement_sources additions", () => {
    const view = buildReportView(reportPayload(true));
    expect(view.markers).toHaveLength(2);
    expect(view.markers.map((m) => m.source)).toEqual(["reuters", "blog"]);
    expect(view.markers.map((m) => m.text)).toEqual([
      "Exchange reserves fall sharply",
      "Weekend volumes at yearly lows",
    ]);
  });

  it("produces zero markers for an unaugmented report", () => {
    const view = buildReportView(reportPayload(false));
    expect(view.markers).toHaveLength(0);
    for (const s of view.sections) {
      expect(s.enhancedBody).toBe(s.rawBody);
    }
  });

  it("preserves section headings between raw and enhanced", () => {
    const view = buildReportView(reportPayload(true));
    expect(view.sections.map((s) => s.heading)).toEqual([
      "Technical Picture",
      "Risk Notes",
    ]);
  });

  it("rejects payloads whose markers disagree with enhancement_sources", () => {
    const bad = reportPayload(true);
    bad.enhanced.enhancement_sources = bad.enhanced.enhancement_sources.slice(0, 1);
    expect(() => buildReportView(bad)).toThrow(/marker count/);
  });

  it("renders each addition as a mark element", () => {
    const html = renderReport(buildReportView(reportPayload(true)));
    expect(html.match(/<mark class="enhancement"/g)).toHaveLength(2);
    expect(html).toContain("Exchange reserves fall sharply");
  });
});

describe("recommendation view", () => {
  it("ranks items in payload order with fixed-precision scores", () => {
    const view = buildRecommendationView(
      {
        summary: "two items",
        ranked_items: [
          {
            news_id: "a",
            score: 0.73,
            evidence_path: ["a", "BTC"],
            path_truncated: false,
            headline: "first",
            features: [1, 0, 0, 0, 0],
          },
          {
            news_id: "b",
            score: 0.41,
            evidence_path: [],
            path_truncated: false,
            headline: "second",
            features: [0, 1, 0, 0, 0],
          },
        ],
        intent: { category: "Layer2", risk: "Medium", horizon: "Medium" },
        generated_at: T0,
        theta: [0, 0, 0, 0, 0],
      },
      T0,
    );
    expect(view.items.map((i) => i.rank)).toEqual([1, 2]);
    expect(view.items[0]!.scoreDisplay).toBe("0.7300");
    expect(view.stale).toBe(false);
  });
});
