import type {
  Candle,
  ForecastResponse,
  KlinesResponse,
  PredictionRecord,
  RankedItemDto,
  RecommendationsResponse,
  ReportResponse,
  Track,
} from "./types.js";

/** Marker the service prepends to each retrieved snippet it appends to a
 * report section. The view surfaces these, and only these, as additions. */
export const ENHANCEMENT_MARK = "**[+]**";

const DEFAULT_STALE_AFTER_SECONDS = 15 * 60;

export interface OverlayPoint {
  t: number;
  close: number;
}

export interface ChartView {
  symbol: string;
  resolution: string;
  candles: Candle[];
  track: Track;
  overlay: OverlayPoint[];
  alphaDisplay: string;
  degraded: boolean;
  generatedAt: number;
  stale: boolean;
  error?: string;
}

function trackRecord(records: PredictionRecord[], track: Track): PredictionRecord | undefined {
  return records.find((r) => r.source === track);
}

/** Candlestick view with the selected track's forecast overlaid beyond the
 * last candle. Overlay closes come straight from the persisted prediction
 * records; nothing is recomputed client-side. */
export function buildChartView(
  klines: KlinesResponse,
  predictions: PredictionRecord[],
  forecast: Pick<ForecastResponse, "alpha" | "degraded" | "issued_at">,
  track: Track = "Fused",
  nowSeconds: number = Math.floor(Date.now() / 1000),
  staleAfterSeconds: number = DEFAULT_STALE_AFTER_SECONDS,
): ChartView {
  const record = trackRecord(predictions, track);
  const lastT = klines.candles.length > 0 ? klines.candles[klines.candles.length - 1]!.t : 0;
  const overlay = (record?.predicted ?? [])
    .filter((c) => c.t > lastT)
    .map((c) => ({ t: c.t, close: c.c }));
  return {
    symbol: klines.symbol,
    resolution: klines.resolution,
    candles: klines.candles,
    track,
    overlay,
    alphaDisplay: forecast.alpha.toFixed(2),
    degraded: forecast.degraded,
    generatedAt: forecast.issued_at,
    stale: nowSeconds - forecast.issued_at > staleAfterSeconds,
  };
}

export type GaugeBand = "oversold" | "neutral" | "overbought";

/** Standard 30/70 RSI bands. */
export function rsiGauge(rsi: number): GaugeBand {
  if (rsi < 30) return "oversold";
  if (rsi > 70) return "overbought";
  return "neutral";
}

export interface EnhancementMarker {
  heading: string;
  text: string;
  source: string;
}

export interface ReportSectionView {
  heading: string;
  rawBody: string;
  enhancedBody: string;
  additions: EnhancementMarker[];
  provenance: string[];
}

export interface ReportView {
  symbol: string;
  horizon: string;
  stance: string;
  confidence: number;
  conflicts: string[];
  sections: ReportSectionView[];
  markers: EnhancementMarker[];
  error?: string;
}

const markerLine = new RegExp(
  `^${ENHANCEMENT_MARK.replace(/[.*+?^${}()|[\]\\]/g, "\\$&")} (.*) \\(source: (.*)\\)$`,
);

function parseAdditions(heading: string, enhancedBody: string): EnhancementMarker[] {
  const additions: EnhancementMarker[] = [];
  for (const line of enhancedBody.split("\n")) {
    const m = markerLine.exec(line);
    if (m) additions.push({ heading, text: m[1]!, source: m[2]! });
  }
  return additions;
}

/** Raw and enhanced report side by side. Every marker corresponds to one
 * enhancement_sources entry; the builder throws if the server payload
 * violates that invariant rather than rendering misleading emphasis. */
export function buildReportView(report: ReportResponse): ReportView {
  const rawByHeading = new Map(report.raw.sections.map(([h, b]) => [h, b]));
  const sections: ReportSectionView[] = report.enhanced.sections.map(([heading, body]) => ({
    heading,
    rawBody: rawByHeading.get(heading) ?? "",
    enhancedBody: body,
    additions: parseAdditions(heading, body),
    provenance: report.enhanced.provenance[heading] ?? [],
  }));
  const markers = sections.flatMap((s) => s.additions);
  if (markers.length !== report.enhanced.enhancement_sources.length) {
    throw new Error(
      `marker count ${markers.length} does not match ` +
        `${report.enhanced.enhancement_sources.length} enhancement sources`,
    );
  }
  for (const [i, src] of report.enhanced.enhancement_sources.entries()) {
    const marker = markers[i]!;
    if (marker.text !== src.snippet || marker.source !== src.source) {
      throw new Error(`marker ${i} does not match its enhancement source`);
    }
  }
  return {
    symbol: report.symbol,
    horizon: report.horizon,
    stance: report.raw.stance,
    confidence: report.raw.confidence,
    conflicts: report.raw.conflicts,
    sections,
    markers,
  };
}

export interface RecommendationItemView {
  rank: number;
  newsId: string;
  headline: string;
  scoreDisplay: string;
  evidencePath: string[];
  pathTruncated: boolean;
  features: number[];
}

export interface RecommendationView {
  summary: string;
  intent: { category: string; risk: string; horizon: string };
  items: RecommendationItemView[];
  generatedAt: number;
  stale: boolean;
  error?: string;
}

export function buildRecommendationView(
  resp: RecommendationsResponse,
  nowSeconds: number = Math.floor(Date.now() / 1000),
  staleAfterSeconds: number = DEFAULT_STALE_AFTER_SECONDS,
): RecommendationView {
  return {
    summary: resp.summary,
    intent: resp.intent,
    items: resp.ranked_items.map((item: RankedItemDto, i: number) => ({
      rank: i + 1,
      newsId: item.news_id,
      headline: item.headline,
      scoreDisplay: item.score.toFixed(4),
      evidencePath: item.evidence_path,
      pathTruncated: item.path_truncated,
      features: item.features,
    })),
    generatedAt: resp.generated_at,
    stale: nowSeconds - resp.generated_at > staleAfterSeconds,
  };
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderChart(view: ChartView): string {
  const parts = [
    `<section class="chart" data-symbol="${escapeHtml(view.symbol)}" data-track="${view.track}">`,
    `<header>alpha=${view.alphaDisplay}${view.degraded ? ' <span class="degraded">degraded</span>' : ""}` +
      `${view.stale ? ' <span class="stale">stale</span>' : ""}</header>`,
  ];
  if (view.error) parts.push(`<div class="error-banner">${escapeHtml(view.error)}</div>`);
  for (const c of view.candles) {
    parts.push(
      `<i class="candle${c.filled ? " filled" : ""}" data-t="${c.t}" data-o="${c.o}" ` +
        `data-h="${c.h}" data-l="${c.l}" data-c="${c.c}" data-v="${c.v}"></i>`,
    );
  }
  for (const p of view.overlay) {
    parts.push(`<i class="forecast-point" data-t="${p.t}" data-close="${p.close}"></i>`);
  }
  parts.push("</section>");
  return parts.join("\n");
}

export function renderReport(view: ReportView): string {
  const parts = [
    `<section class="report" data-stance="${escapeHtml(view.stance)}">`,
  ];
  if (view.error) parts.push(`<div class="error-banner">${escapeHtml(view.error)}</div>`);
  for (const s of view.sections) {
    parts.push(`<article><h3>${escapeHtml(s.heading)}</h3>`);
    parts.push(`<div class="raw">${escapeHtml(s.rawBody)}</div>`);
    let enhancedHtml = escapeHtml(s.enhancedBody);
    for (const add of s.additions) {
      const plain = escapeHtml(`${ENHANCEMENT_MARK} ${add.text} (source: ${add.source})`);
      enhancedHtml = enhancedHtml.replace(
        plain,
        `<mark class="enhancement" title="${escapeHtml(add.source)}">` +
          `${escapeHtml(add.text)}</mark>`,
      );
    }
    parts.push(`<div class="enhanced">${enhancedHtml}</div></article>`);
  }
  parts.push("</section>");
  return parts.join("\n");
}

export function renderRecommendations(view: RecommendationView): string {
  const parts = [`<section class="recommendations">`];
  if (view.error) parts.push(`<div class="error-banner">${escapeHtml(view.error)}</div>`);
  parts.push(`<p>${escapeHtml(view.summary)}</p><ol>`);
  for (const item of view.items) {
    parts.push(
      `<li data-news-id="${escapeHtml(item.newsId)}" data-score="${item.scoreDisplay}">` +
        `${escapeHtml(item.headline)}` +
        `<span class="evidence">${escapeHtml(item.evidencePath.join(" -> "))}</span></li>`,
    );
  }
  parts.push("</ol></section>");
  return parts.join("\n");
}
