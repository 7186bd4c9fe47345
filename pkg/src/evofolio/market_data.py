"""Daily stock data ingest, economic predictor computation, splits, and scaling.

The seven model inputs per day are: return, volume change, bid-ask spread,
illiquidity, turnover, and the two market index returns.  The forecast target
for a row is the next row's return.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

FEATURE_COLUMNS = (
    "return",
    "volume_change",
    "bid_ask_spread",
    "illiquidity",
    "turn_over",
    "dji_return",
    "spx_return",
)
N_FEATURES = len(FEATURE_COLUMNS)

STOCK_CSV_HEADER = ["date", "close", "bid", "ask", "volume", "shares_outstanding"]
INDEX_CSV_HEADER = ["date", "dji_return", "spx_return"]


@dataclass(frozen=True)
class StockBar:
    date: date
    close: float
    bid: float
    ask: float
    volume: float
    shares_outstanding: float


@dataclass(frozen=True)
class IndexBar:
    date: date
    dji_return: float
    spx_return: float


@dataclass(frozen=True)
class FeatureRow:
    date: date
    ret: float
    volume_change: float
    bid_ask_spread: float
    illiquidity: float
    turn_over: float
    dji_return: float
    spx_return: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.ret,
                self.volume_change,
                self.bid_ask_spread,
                self.illiquidity,
                self.turn_over,
                self.dji_return,
                self.spx_return,
            ]
        )


def _check_bar(bar: StockBar, line_no: int) -> None:
    if bar.close <= 0:
        raise ValueError(f"line {line_no}: close must be > 0")
    if bar.volume < 0:
        raise ValueError(f"line {line_no}: volume must be >= 0")
    if bar.shares_outstanding <= 0:
        raise ValueError(f"line {line_no}: shares_outstanding must be > 0")
    if bar.ask < bar.bid:
        raise ValueError(f"line {line_no}: ask < bid (rejected row)")


def load_stock_csv(path: str | Path) -> list[StockBar]:
    """Load one ticker's daily bars; output is sorted by date.

    Rows violating the bar invariants (in particular ask < bid) are rejected
    with an error naming the offending line.  Duplicate dates are an error.
    """
    path = Path(path)
    bars: list[StockBar] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STOCK_CSV_HEADER:
            raise ValueError(
                f"{path}: bad header {header!r}; expected {STOCK_CSV_HEADER!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(STOCK_CSV_HEADER):
                raise ValueError(f"line {line_no}: expected {len(STOCK_CSV_HEADER)} fields")
            try:
                bar = StockBar(
                    date=date.fromisoformat(row[0]),
                    close=float(row[1]),
                    bid=float(row[2]),
                    ask=float(row[3]),
                    volume=float(row[4]),
                    shares_outstanding=float(row[5]),
                )
            except ValueError as exc:
                raise ValueError(f"line {line_no}: malformed row ({exc})") from exc
            _check_bar(bar, line_no)
            bars.append(bar)
    bars.sort(key=lambda b: b.date)
    for prev, cur in zip(bars, bars[1:]):
        if cur.date == prev.date:
            raise ValueError(f"duplicate date {cur.date.isoformat()}")
    return bars


def load_index_csv(path: str | Path) -> list[IndexBar]:
    path = Path(path)
    bars: list[IndexBar] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != INDEX_CSV_HEADER:
            raise ValueError(
                f"{path}: bad header {header!r}; expected {INDEX_CSV_HEADER!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                bar = IndexBar(
                    date=date.fromisoformat(row[0]),
                    dji_return=float(row[1]),
                    spx_return=float(row[2]),
                )
            except ValueError as exc:
                raise ValueError(f"line {line_no}: malformed row ({exc})") from exc
            if not (math.isfinite(bar.dji_return) and math.isfinite(bar.spx_return)):
                raise ValueError(f"line {line_no}: non-finite index return")
            bars.append(bar)
    bars.sort(key=lambda b: b.date)
    for prev, cur in zip(bars, bars[1:]):
        if cur.date == prev.date:
            raise ValueError(f"duplicate date {cur.date.isoformat()}")
    return bars


def compute_predictors(bars: list[StockBar], index: list[IndexBar]) -> list[FeatureRow]:
    """Compute the seven daily predictors; n bars yield n-1 rows.

    Degenerate denominators follow "no trading, no impact" semantics: a zero
    previous volume gives volume_change 0, a zero current volume gives
    illiquidity 0.  Illiquidity keeps the signed return in the numerator.
    """
    if len(bars) < 2:
        raise ValueError("need at least 2 bars to compute predictors")
    by_date = {b.date: b for b in index}
    rows: list[FeatureRow] = []
    for prev, cur in zip(bars, bars[1:]):
        idx = by_date.get(cur.date)
        if idx is None:
            raise ValueError(f"missing index data for date {cur.date.isoformat()}")
        ret = (cur.close - prev.close) / prev.close
        volume_change = 0.0 if prev.volume == 0 else (cur.volume - prev.volume) / prev.volume
        spread = (cur.ask - cur.bid) / cur.close
        illiquidity = 0.0 if cur.volume == 0 else ret / (cur.volume * cur.close)
        turn_over = cur.volume / cur.shares_outstanding
        row = FeatureRow(
            date=cur.date,
            ret=ret,
            volume_change=volume_change,
            bid_ask_spread=spread,
            illiquidity=illiquidity,
            turn_over=turn_over,
            dji_return=idx.dji_return,
            spx_return=idx.spx_return,
        )
        values = row.as_array()
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite predictor on {cur.date.isoformat()}")
        rows.append(row)
    return rows


@dataclass
class Normalizer:
    """Per-feature min/max affine map fitted on the training split.

    Constant features (hi == lo) map to 0.5 everywhere and invert back to
    their constant value.
    """

    lo: np.ndarray
    hi: np.ndarray

    def transform(self, features: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        out = np.empty_like(features, dtype=np.float64)
        for j in range(features.shape[1]):
            if span[j] == 0.0:
                out[:, j] = 0.5
            else:
                out[:, j] = (features[:, j] - self.lo[j]) / span[j]
        return out

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        out = np.empty_like(scaled, dtype=np.float64)
        for j in range(scaled.shape[1]):
            if span[j] == 0.0:
                out[:, j] = self.lo[j]
            else:
                out[:, j] = scaled[:, j] * span[j] + self.lo[j]
        return out


SPLIT_NAMES = ("train", "valid", "test")


@dataclass
class StockDataset:
    """One ticker's feature rows, next-step targets, and year-based splits.

    ``targets[t]`` is the return of row ``t + 1``; the final row has no
    target.  Targets stay unnormalized.  ``model_inputs`` are the features
    after min-max scaling when a normalizer has been fitted.
    """

    ticker: str
    rows: list[FeatureRow]
    features: np.ndarray
    targets: np.ndarray
    train_range: tuple[int, int]
    valid_range: tuple[int, int]
    test_range: tuple[int, int]
    normalizer: Normalizer | None = None
    _inputs: np.ndarray | None = field(default=None, repr=False)

    def model_inputs(self) -> np.ndarray:
        if self.normalizer is None:
            return self.features
        if self._inputs is None:
            self._inputs = self.normalizer.transform(self.features)
        return self._inputs

    def _range(self, split: str) -> tuple[int, int]:
        if split == "train":
            return self.train_range
        if split == "valid":
            return self.valid_range
        if split == "test":
            return self.test_range
        raise ValueError(f"unknown split {split!r}")

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        """(inputs, targets) for a split; targets clip at the last dataset row."""
        a, b = self._range(split)
        X = self.model_inputs()[a:b]
        y = self.targets[a:min(b, len(self.targets))]
        return X, y

    def split_dates(self, split: str) -> list[date]:
        a, b = self._range(split)
        return [r.date for r in self.rows[a:b]]


def split_by_year(rows: list[FeatureRow], ticker: str, test_year: int) -> StockDataset:
    """Build a dataset with test = test_year, valid = test_year - 1, train = earlier.

    Rows dated after the test year are dropped; an empty split is an error
    naming the split.
    """
    kept = [r for r in rows if r.date.year <= test_year]
    train_end = 0
    valid_end = 0
    for i, r in enumerate(kept):
        if r.date.year <= test_year - 2:
            train_end = i + 1
        if r.date.year <= test_year - 1:
            valid_end = i + 1
    n = len(kept)
    if train_end == 0:
        raise ValueError("train split empty")
    if valid_end == train_end:
        raise ValueError("valid split empty")
    if n == valid_end:
        raise ValueError("test split empty")

    features = np.array([r.as_array() for r in kept], dtype=np.float64)
    targets = features[1:, 0].copy()
    return StockDataset(
        ticker=ticker,
        rows=kept,
        features=features,
        targets=targets,
        train_range=(0, train_end),
        valid_range=(train_end, valid_end),
        test_range=(valid_end, n),
    )


def normalize(dataset: StockDataset) -> StockDataset:
    """Fit per-feature min/max on the train split and return a scaled dataset."""
    a, b = dataset.train_range
    if b <= a:
        raise ValueError("train split empty")
    train = dataset.features[a:b]
    normalizer = Normalizer(lo=train.min(axis=0), hi=train.max(axis=0))
    return StockDataset(
        ticker=dataset.ticker,
        rows=dataset.rows,
        features=dataset.features,
        targets=dataset.targets,
        train_range=dataset.train_range,
        valid_range=dataset.valid_range,
        test_range=dataset.test_range,
        normalizer=normalizer,
    )


def load_dataset(stock_csv: str | Path, index_csv: str | Path, ticker: str,
                 test_year: int) -> StockDataset:
    """Full ingest pipeline: bars -> predictors -> year splits -> normalization."""
    bars = load_stock_csv(stock_csv)
    index = load_index_csv(index_csv)
    rows = compute_predictors(bars, index)
    return normalize(split_by_year(rows, ticker, test_year))
