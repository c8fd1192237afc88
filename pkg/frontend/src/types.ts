/** JSON payload shapes of the analytics HTTP API. The dashboard displays
 * these numbers as-is; it never recomputes metrics client-side. */

export interface Candle {
  t: number;
  o: number;
  h: number;
  l: number;
  c: number;
  v: number;
  filled?: boolean;
}

export interface KlinesResponse {
  symbol: string;
  resolution: string;
  candles: Candle[];
}

export interface CoinsResponse {
  coins: string[];
}

export type Track = "ML" | "LLM" | "Fused";

export interface PredictionRecord {
  schema_version: number;
  symbol: string;
  resolution: string;
  issued_at: number;
  horizon_steps: number;
  predicted: Candle[];
  source: Track;
  record_id: number | null;
}

export interface PredictionsResponse {
  predictions: PredictionRecord[];
}

export interface ForecastResponse {
  symbol: string;
  resolution: string;
  alpha: number;
  degraded: boolean;
  fused: Candle[];
  ml: Candle[] | null;
  llm: Candle[] | null;
  summary: string;
  record_ids: number[];
  issued_at: number;
}

export interface SignalDto {
  source: string;
  snippet: string;
  time: number;
  url: string;
  relevance: number;
  recency: number;
  credibility: number;
  score: number;
}

export type Section = [heading: string, body: string];

export interface ReportResponse {
  symbol: string;
  horizon: string;
  raw: {
    sections: Section[];
    stance: string;
    confidence: number;
    conflicts: string[];
    provenance: Record<string, string[]>;
  };
  enhanced: {
    sections: Section[];
    enhancement_sources: SignalDto[];
    provenance: Record<string, string[]>;
  };
  prompt: Record<string, string>;
}

export interface RankedItemDto {
  news_id: string;
  score: number;
  evidence_path: string[];
  path_truncated: boolean;
  headline: string;
  features: number[];
}

export interface RecommendationsResponse {
  summary: string;
  ranked_items: RankedItemDto[];
  intent: { category: string; risk: string; horizon: string };
  generated_at: number;
  theta: number[];
}

export interface FeedbackRequest {
  user: string;
  recommendation: string;
  outcome: number;
  features: number[];
}

export interface FeedbackResponse {
  status: string;
  theta: number[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
