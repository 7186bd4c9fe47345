"""Synthetic daily stock and index fixtures in the package's CSV formats.

CRSP data cannot be redistributed, so demos and tests run on generated
universes: geometric random-walk closes, spreads proportional to price, and
lognormal volumes on a weekday calendar.
"""

from __future__ import annotations

import os
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .market_data import IndexBar, StockBar


def weekday_calendar(start_year: int, end_year: int) -> list[date]:
    days = []
    day = date(start_year, 1, 1)
    stop = date(end_year, 12, 31)
    while day <= stop:
        if day.weekday() < 5:
            days.append(day)
        day += timedelta(days=1)
    return days


def random_walk_bars(ticker: str, calendar: list[date],
                     rng: np.random.Generator) -> list[StockBar]:
    close = float(rng.uniform(20.0, 200.0))
    shares_outstanding = float(rng.uniform(1e8, 1e9))
    bars = []
    for day in calendar:
        close *= float(np.exp(rng.normal(0.0002, 0.012)))
        half_spread = close * float(rng.uniform(0.0002, 0.0015))
        volume = float(np.exp(rng.normal(15.0, 0.5)))
        bars.append(
            StockBar(
                date=day,
                close=round(close, 4),
                bid=round(close - half_spread, 4),
                ask=round(close + half_spread, 4),
                volume=round(volume, 0),
                shares_outstanding=shares_outstanding,
            )
        )
    return bars


def index_bars(calendar: list[date], rng: np.random.Generator) -> list[IndexBar]:
    return [
        IndexBar(
            date=day,
            dji_return=float(rng.normal(0.0003, 0.009)),
            spx_return=float(rng.normal(0.0003, 0.011)),
        )
        for day in calendar
    ]


def write_stock_csv(path: str | Path, bars: list[StockBar]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["date,close,bid,ask,volume,shares_outstanding"]
    for b in bars:
        lines.append(
            f"{b.date.isoformat()},{b.close!r},{b.bid!r},{b.ask!r},"
            f"{b.volume!r},{b.shares_outstanding!r}"
        )
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def write_index_csv(path: str | Path, bars: list[IndexBar]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["date,dji_return,spx_return"]
    for b in bars:
        lines.append(f"{b.date.isoformat()},{b.dji_return!r},{b.spx_return!r}")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def make_universe(data_dir: str | Path, tickers: list[str], start_year: int,
                  end_year: int, seed: int = 0) -> None:
    """Write one stock CSV per ticker plus index.csv into data_dir."""
    data_dir = Path(data_dir)
    calendar = weekday_calendar(start_year, end_year)
    rng = np.random.default_rng(seed)
    write_index_csv(data_dir / "index.csv", index_bars(calendar, rng))
    for ticker in tickers:
        write_stock_csv(data_dir / f"{ticker}.csv", random_walk_bars(ticker, calendar, rng))
