"""OHLCV candle ingestion, windowing, and prediction persistence.

Candle series live on a uniform timestamp grid per resolution; prediction
records are archived to resolution-specific JSONL tables.
"""

from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Optional

from .errors import (
    InsufficientHistory,
    MalformedRow,
    NonMonotonicTimestamps,
    OHLCInvariantViolated,
    StorageUnavailable,
)

SCHEMA_VERSION = 1


class Resolution(Enum):
    ONE_DAY = ("1d", 86400)
    ONE_HOUR = ("1h", 3600)
    FIVE_MIN = ("5m", 300)

    def __init__(self, code: str, step: int):
        self.code = code
        self.step = step

    @classmethod
    def from_code(cls, code: str) -> "Resolution":
        for r in cls:
            if r.code == code:
                return r
        raise ValueError(f"unknown resolution {code!r}")


@dataclass(frozen=True)
class Candle:
    t: int  # UTC epoch seconds
    o: float
    h: float
    l: float
    c: float
    v: float
    filled: bool = False  # True when gap-filled at ingest

    def validate(self) -> None:
        if self.o <= 0 or self.h <= 0 or self.l <= 0 or self.c <= 0:
            raise OHLCInvariantViolated(self.t, "non-positive price")
        if self.v < 0:
            raise OHLCInvariantViolated(self.t, "negative volume")
        if self.l > min(self.o, self.c):
            raise OHLCInvariantViolated(self.t, "low above open/close")
        if self.h < max(self.o, self.c):
            raise OHLCInvariantViolated(self.t, "high below open/close")

    def to_dict(self) -> dict:
        d = {"t": self.t, "o": self.o, "h": self.h, "l": self.l, "c": self.c, "v": self.v}
        if self.filled:
            d["filled"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Candle":
        return cls(
            t=int(d["t"]), o=float(d["o"]), h=float(d["h"]),
            l=float(d["l"]), c=float(d["c"]), v=float(d["v"]),
            filled=bool(d.get("filled", False)),
        )


@dataclass
class CandleSeries:
    symbol: str
    resolution: Resolution
    candles: list[Candle] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        step = self.resolution.step
        prev = None
        for candle in self.candles:
            candle.validate()
            if prev is not None:
                if candle.t <= prev:
                    raise NonMonotonicTimestamps(
                        f"{self.symbol}: t={candle.t} after t={prev}"
                    )
                if candle.t - prev != step:
                    raise NonMonotonicTimestamps(
                        f"{self.symbol}: gap of {candle.t - prev}s, expected {step}s"
                    )
            prev = candle.t

    def __len__(self) -> int:
        return len(self.candles)

    @property
    def closes(self) -> list[float]:
        return [c.c for c in self.candles]

    @property
    def start(self) -> int:
        return self.candles[0].t

    @property
    def end(self) -> int:
        return self.candles[-1].t


class Source(str, Enum):
    ML = "ML"
    LLM = "LLM"
    FUSED = "Fused"


@dataclass
class PredictionRecord:
    symbol: str
    resolution: Resolution
    issued_at: int
    horizon_steps: int
    predicted: list[Candle]
    source: Source
    record_id: Optional[int] = None

    def __post_init__(self):
        if self.horizon_steps <= 0:
            raise ValueError("horizon_steps must be positive")
        if len(self.predicted) != self.horizon_steps:
            raise ValueError(
                f"predicted length {len(self.predicted)} != horizon {self.horizon_steps}"
            )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "symbol": self.symbol,
            "resolution": self.resolution.code,
            "issued_at": self.issued_at,
            "horizon_steps": self.horizon_steps,
            "predicted": [c.to_dict() for c in self.predicted],
            "source": self.source.value,
            "record_id": self.record_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        return cls(
            symbol=d["symbol"],
            resolution=Resolution.from_code(d["resolution"]),
            issued_at=int(d["issued_at"]),
            horizon_steps=int(d["horizon_steps"]),
            predicted=[Candle.from_dict(c) for c in d["predicted"]],
            source=Source(d["source"]),
            record_id=d.get("record_id"),
        )


CSV_COLUMNS = ("t", "o", "h", "l", "c", "v")


def _parse_csv_rows(text: str) -> Iterable[tuple[int, dict]]:
    lines = text.splitlines()
    if not lines:
        return
    start = 0
    first = next(csv.reader([lines[0]]))
    # header detection: first field not numeric
    try:
        float(first[0])
    except (ValueError, IndexError):
        start = 1
    for i, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        row = next(csv.reader([line]))
        if len(row) < 6:
            raise MalformedRow(i, f"expected 6 columns, got {len(row)}")
        yield i, dict(zip(CSV_COLUMNS, row))


def _parse_jsonl_rows(text: str) -> Iterable[tuple[int, dict]]:
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRow(i, str(e)) from e
        yield i, obj


def ingest_candles(
    source: IO[bytes] | bytes | str,
    fmt: str,
    symbol: str,
    resolution: Resolution,
    allow_gaps: bool = False,
) -> CandleSeries:
    """Parse and validate a CSV or JSONL candle stream into a CandleSeries.

    Rows must carry columns t,o,h,l,c,v. Duplicate or out-of-order
    timestamps are rejected; grid gaps are an error unless allow_gaps is
    set, in which case missing candles are forward-filled from the prior
    close with zero volume and marked.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    fmt = fmt.upper()
    if fmt == "CSV":
        rows = _parse_csv_rows(text)
    elif fmt == "JSONL":
        rows = _parse_jsonl_rows(text)
    else:
        raise ValueError(f"unknown format {fmt!r}")

    candles: list[Candle] = []
    for line_no, row in rows:
        try:
            candle = Candle(
                t=int(float(row["t"])), o=float(row["o"]), h=float(row["h"]),
                l=float(row["l"]), c=float(row["c"]), v=float(row["v"]),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise MalformedRow(line_no, str(e)) from e
        candle.validate()
        candles.append(candle)

    candles.sort(key=lambda c: c.t)
    step = resolution.step
    out: list[Candle] = []
    for candle in candles:
        if out:
            prev = out[-1]
            if candle.t == prev.t:
                raise NonMonotonicTimestamps(f"duplicate timestamp {candle.t}")
            gap = candle.t - prev.t
            if gap != step:
                if gap % step != 0 or not allow_gaps:
                    raise NonMonotonicTimestamps(
                        f"gap of {gap}s between {prev.t} and {candle.t}"
                    )
                t = prev.t + step
                while t < candle.t:
                    out.append(Candle(t=t, o=prev.c, h=prev.c, l=prev.c,
                                      c=prev.c, v=0.0, filled=True))
                    t += step
        out.append(candle)
    return CandleSeries(symbol=symbol, resolution=resolution, candles=out)


def window(series: CandleSeries, ending_at: int, span: int) -> CandleSeries:
    """Return the sub-series covering (ending_at - span, ending_at].

    span must be a positive multiple of the resolution step and ending_at
    must sit on the series grid.
    """
    step = series.resolution.step
    if span <= 0 or span % step != 0:
        raise ValueError(f"span {span} not a positive multiple of step {step}")
    needed = span // step
    if not series.candles:
        raise InsufficientHistory(needed, 0)
    if (ending_at - series.start) % step != 0:
        raise ValueError(f"ending_at {ending_at} off the series grid")
    idx_end = (ending_at - series.start) // step + 1
    idx_start = idx_end - needed
    if idx_start < 0 or idx_end > len(series.candles):
        available = max(0, min(idx_end, len(series.candles)) - max(idx_start, 0))
        raise InsufficientHistory(needed, available)
    return CandleSeries(
        symbol=series.symbol,
        resolution=series.resolution,
        candles=series.candles[idx_start:idx_end],
    )


class PredictionStore:
    """Append-only JSONL persistence, one table file per resolution.

    Single-writer per table (guarded by a lock); reads scan the file, so
    concurrent readers always see a consistent prefix.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageUnavailable(str(e)) from e
        self._lock = threading.Lock()

    def _table_path(self, resolution: Resolution) -> Path:
        return self.root / f"predictions_{resolution.code}.jsonl"

    def store_prediction(self, record: PredictionRecord) -> int:
        path = self._table_path(record.resolution)
        with self._lock:
            next_id = self._count(path) + 1
            rec = replace(record, record_id=next_id)
            try:
                with path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            except OSError as e:
                raise StorageUnavailable(str(e)) from e
        return next_id

    def _count(self, path: Path) -> int:
        if not path.exists():
            return 0
        with path.open("r", encoding="utf-8") as f:
            return sum(1 for line in f if line.strip())

    def load_predictions(
        self,
        symbol: str,
        resolution: Resolution,
        time_range: Optional[tuple[int, int]] = None,
    ) -> list[PredictionRecord]:
        path = self._table_path(resolution)
        if not path.exists():
            return []
        out = []
        with path.open("r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = PredictionRecord.from_dict(json.loads(line))
                if rec.symbol != symbol:
                    continue
                if time_range is not None:
                    lo, hi = time_range
                    if not (lo <= rec.issued_at <= hi):
                        continue
                out.append(rec)
        return out
