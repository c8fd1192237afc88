"""Batch workflows over the engine: ingest, forecast, evaluate, report,
recommend, feedback-replay, and serve."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import forecast as fc
from . import ml_forecast as ml
from . import news_graph as ng
from . import recommend as rec
from . import report as rp
from .config import load_config
from .errors import MlionError
from .market_data import PredictionStore, Resolution, ingest_candles


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; MLION_* env vars and flags override.")
@click.option("--data-dir", default=None, help="Override the data directory.")
@click.option("--seed", type=int, default=None, help="Deterministic seed.")
@click.pass_context
def main(ctx, config_path, data_dir, seed):
    """Market analytics engine: forecasting, reports, recommendations."""
    overrides = {}
    if data_dir is not None:
        overrides["data_dir"] = data_dir
    if seed is not None:
        overrides["seed"] = seed
    try:
        ctx.obj = load_config(config_path, overrides)
    except MlionError as e:
        raise click.ClickException(str(e))


@main.command()
@click.option("--symbol", required=True)
@click.option("--resolution", type=click.Choice(["1d", "1h", "5m"]), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv")
@click.option("--allow-gaps", is_flag=True, default=False)
@click.argument("source", type=click.Path(exists=True))
@click.pass_obj
def ingest(cfg, symbol, resolution, fmt, allow_gaps, source):
    """Validate a candle file and copy it into the data directory."""
    res = Resolution.from_code(resolution)
    raw = Path(source).read_bytes()
    try:
        series = ingest_candles(raw, fmt.upper(), symbol, res, allow_gaps=allow_gaps)
    except MlionError as e:
        raise click.ClickException(str(e))
    out_dir = Path(cfg.data_dir) / "klines"
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"{symbol}_{resolution}.csv"
    with out.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "o", "h", "l", "c", "v"])
        for c in series.candles:
            w.writerow([c.t, c.o, c.h, c.l, c.c, c.v])
    click.echo(f"ingested {len(series)} candles for {symbol}@{resolution} -> {out}")


def _load_series(cfg, symbol, resolution):
    path = Path(cfg.data_dir) / "klines" / f"{symbol}_{resolution}.csv"
    if not path.exists():
        raise click.ClickException(f"no ingested data at {path}; run `ingest` first")
    return ingest_candles(path.read_bytes(), "CSV", symbol,
                          Resolution.from_code(resolution), allow_gaps=True)


def _load_news(cfg):
    path = Path(cfg.data_dir) / "news.jsonl"
    if not path.exists():
        return []
    items = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            items.append(ng.parse_news(json.loads(line)))
    return ng.annotate(items, tau=cfg.sentiment_tau)


def _build_orchestrator(cfg):
    store = PredictionStore(Path(cfg.data_dir) / "predictions")
    return fc.Orchestrator(
        llm_provider=fc.StubLLMProvider(seed=cfg.seed),
        ml_provider=fc.MLTrackProvider(),
        store=store,
        horizons={Resolution.ONE_DAY: cfg.horizon_1d,
                  Resolution.ONE_HOUR: cfg.horizon_1h,
                  Resolution.FIVE_MIN: cfg.horizon_5m},
    )


@main.command()
@click.option("--symbol", required=True)
@click.option("--resolution", type=click.Choice(["1d", "1h", "5m"]), default="1d")
@click.option("--gamma", type=float, default=0.5)
@click.pass_obj
def forecast(cfg, symbol, resolution, gamma):
    """Run both tracks, fuse, persist records, and print the summary."""
    daily = _load_series(cfg, symbol, "1d")
    hourly = _load_series(cfg, symbol, "1h")
    news = _load_news(cfg)
    t0 = max(daily.end, hourly.end)
    inputs = fc.build_input(daily, hourly, news, gamma, t0)
    orch = _build_orchestrator(cfg)
    result = orch.run_forecast(symbol, Resolution.from_code(resolution),
                               inputs, news=news)
    click.echo(json.dumps({
        "symbol": symbol, "resolution": resolution, "alpha": result.alpha,
        "degraded": result.degraded, "record_ids": result.record_ids,
        "fused": [c.to_dict() for c in result.fused.steps],
    }, sort_keys=True))
    click.echo(result.summary)


@main.command()
@click.option("--fixtures", "fixtures_dir", type=click.Path(exists=True),
              required=True, help="Directory of {token}_{resolution}.csv files.")
@click.option("--resolution", default="1d")
@click.option("--alphas", default="0.01,0.1,1.0",
              help="Ridge strength grid to search.")
@click.option("--folds", type=int, default=5)
@click.option("--horizon", type=int, default=1,
              help="Backtest target offset in steps.")
@click.option("--csv-out", "csv_out", type=click.Path(), default=None)
@click.pass_obj
def evaluate(cfg, fixtures_dir, resolution, alphas, folds, horizon, csv_out):
    """Per-token ridge backtest report: token, alpha, cv_score, test_mse."""
    grid = [float(a) for a in alphas.split(",")]
    rows = []
    for path in sorted(Path(fixtures_dir).glob(f"*_{resolution}.csv")):
        token = path.stem.rsplit("_", 1)[0]
        series = ingest_candles(path.read_bytes(), "CSV", token,
                                Resolution.from_code(resolution), allow_gaps=True)
        dataset = [
            (ml.engineer_features(series.candles[i]), series.candles[i + horizon].c)
            for i in range(len(series) - horizon)
        ]
        best = None
        for alpha in grid:
            try:
                report = ml.cross_validate(dataset, folds, ml.RidgeConfig(alpha=alpha))
            except MlionError:
                continue
            if best is None or report.cv_score > best[1].cv_score:
                best = (alpha, report)
        if best is None:
            continue
        alpha, report = best
        band = ("excellent" if report.test_mse < 1e-4 else
                "good" if report.test_mse < 1e-2 else
                "medium" if report.test_mse < 1.0 else "unstable")
        rows.append((token, alpha, report.cv_score, report.test_mse, band))

    header = ["token", "alpha", "cv_score", "test_mse"]
    lines = [",".join(header)]
    for token, alpha, cv_score, test_mse, band in rows:
        lines.append(f"{token},{alpha},{cv_score:.6g},{test_mse:.6g}")
    csv_text = "\n".join(lines) + "\n"
    if csv_out:
        Path(csv_out).write_text(csv_text, encoding="utf-8")
    click.echo(csv_text, nl=False)
    click.echo("")
    for token, alpha, cv_score, test_mse, band in rows:
        click.echo(f"{token:8s} alpha={alpha:<6g} cv={cv_score:<12.6g} "
                   f"mse={test_mse:<12.6g} [{band}]")


@main.command()
@click.option("--symbol", required=True)
@click.option("--horizon", type=click.Choice(["short", "medium", "long"]),
              default="short")
@click.pass_obj
def report(cfg, symbol, horizon):
    """Generate the raw and enhanced report for a symbol."""
    daily = _load_series(cfg, symbol, "1d")
    news = _load_news(cfg)
    raw, enhanced, prompt = rp.run_pipeline(
        daily, news, horizon=horizon, weights=cfg.score_weights,
        top_k=cfg.score_top_k, threshold=cfg.score_threshold)
    doc = {
        "symbol": symbol, "horizon": horizon,
        "stance": raw.stance.value, "confidence": raw.confidence,
        "raw_sections": [[h, b] for h, b in raw.sections],
        "enhanced_sections": [[h, b] for h, b in enhanced.sections],
        "enhancement_sources": [s.to_dict() for s in enhanced.enhancement_sources],
        "prompt": prompt.slots(),
    }
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


@main.command()
@click.option("--category", required=True)
@click.option("--risk", default="Medium")
@click.option("--horizon", default="Medium")
@click.option("--top-k", type=int, default=5)
@click.pass_obj
def recommend(cfg, category, risk, horizon, top_k):
    """Rank recent news for an intent using the learned policy."""
    news = _load_news(cfg)
    if not news:
        raise click.ClickException("no news corpus at data_dir/news.jsonl")
    intent = rec.parse_intent({"category": category, "risk": risk,
                               "horizon": horizon})
    graph = ng.build_graph(news)
    log = rec.FeedbackLog(Path(cfg.data_dir) / "feedback.jsonl")
    theta = log.replay(eta=cfg.eta)
    t0 = max(n.time for n in news)
    items = ng.filter_recent(news, t0, intent.window_seconds)
    result = rec.recommend(items, intent, graph, theta, top_k=top_k, t0=t0)
    click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))


@main.command("feedback-replay")
@click.pass_obj
def feedback_replay(cfg):
    """Recompute theta by replaying the feedback log from zero."""
    log = rec.FeedbackLog(Path(cfg.data_dir) / "feedback.jsonl")
    theta = log.replay(eta=cfg.eta)
    click.echo(json.dumps({"theta": theta, "events": len(log.events())}))


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_obj
def serve(cfg, host, port):
    """Run the HTTP API."""
    import uvicorn

    from .service import create_app

    app = create_app(cfg)
    uvicorn.run(app, host=host or cfg.bind_host, port=port or cfg.bind_port,
                log_level="warning")


if __name__ == "__main__":
    main()
