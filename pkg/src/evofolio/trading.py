"""Deterministic portfolio backtester: long-only and daily long-short strategies,
transaction-cost models, buy-and-hold benchmark, and the long/short grid sweep.

All trades move fractional shares; the ledger's trade log replays to the exact
final cash and positions.  Decisions use strict comparisons, so a predicted
return of exactly zero triggers neither buying nor selling.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

COST_MODELS = ("none", "half_spread", "bid_ask")


@dataclass(frozen=True)
class Quote:
    close: float
    bid: float
    ask: float


class PriceBook:
    """Per-ticker, per-day close/bid/ask quotes."""

    def __init__(self, quotes: dict[str, dict[date, Quote]]):
        self._quotes = quotes

    @classmethod
    def from_bars(cls, bars_by_ticker: dict[str, list]) -> "PriceBook":
        quotes: dict[str, dict[date, Quote]] = {}
        for ticker, bars in bars_by_ticker.items():
            quotes[ticker] = {
                b.date: Quote(close=b.close, bid=b.bid, ask=b.ask) for b in bars
            }
        return cls(quotes)

    def quote(self, ticker: str, day: date) -> Quote:
        try:
            return self._quotes[ticker][day]
        except KeyError:
            raise ValueError(f"missing quote for {ticker} on {day.isoformat()}") from None

    def has(self, ticker: str, day: date) -> bool:
        return day in self._quotes.get(ticker, {})

    def tickers(self) -> list[str]:
        return sorted(self._quotes)

    def days(self, ticker: str) -> list[date]:
        return sorted(self._quotes[ticker])


class PredictionPanel:
    """Date-by-ticker matrix of predicted and realized returns.

    The prediction stored at day t is the signal used for trading on day t
    (produced from information through day t-1); the realized value is the
    return that actually occurred on day t.
    """

    def __init__(self, days: list[date], tickers: list[str],
                 predicted: dict[date, dict[str, float]],
                 realized: dict[date, dict[str, float]]):
        self.days = sorted(days)
        self.tickers = sorted(tickers)
        expected = set(self.tickers)
        for day in self.days:
            for table, label in ((predicted, "predicted"), (realized, "realized")):
                got = set(table.get(day, {}))
                if got != expected:
                    raise ValueError(
                        f"panel day {day.isoformat()}: {label} tickers {sorted(got)} "
                        f"!= {self.tickers}"
                    )
                for ticker, value in table[day].items():
                    if not np.isfinite(value):
                        raise ValueError(
                            f"non-finite {label} return for {ticker} on {day.isoformat()}"
                        )
        self.predicted = predicted
        self.realized = realized

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["date,ticker,predicted_return,actual_return"]
        for day in self.days:
            for ticker in self.tickers:
                lines.append(
                    f"{day.isoformat()},{ticker},"
                    f"{self.predicted[day][ticker]!r},{self.realized[day][ticker]!r}"
                )
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def from_csv(cls, path: str | Path) -> "PredictionPanel":
        predicted: dict[date, dict[str, float]] = {}
        realized: dict[date, dict[str, float]] = {}
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["date", "ticker", "predicted_return", "actual_return"]:
                raise ValueError(f"{path}: bad panel header {header!r}")
            for row in reader:
                if not row:
                    continue
                day = date.fromisoformat(row[0])
                predicted.setdefault(day, {})[row[1]] = float(row[2])
                realized.setdefault(day, {})[row[1]] = float(row[3])
        days = sorted(predicted)
        tickers = sorted(predicted[days[0]]) if days else []
        return cls(days, tickers, predicted, realized)


@dataclass(frozen=True)
class Trade:
    day: date
    ticker: str
    side: str  # "buy" | "sell"
    shares: float
    price: float


@dataclass
class Ledger:
    """Cash, signed share positions, and the trade log that reproduces them."""

    cash: float
    positions: dict[str, float] = field(default_factory=dict)
    trades: list[Trade] = field(default_factory=list)

    def buy(self, ticker: str, day: date, shares: float, price: float) -> None:
        self.cash -= shares * price
        self.positions[ticker] = self.positions.get(ticker, 0.0) + shares
        if self.positions[ticker] == 0.0:
            del self.positions[ticker]
        self.trades.append(Trade(day, ticker, "buy", shares, price))

    def sell(self, ticker: str, day: date, shares: float, price: float) -> None:
        self.cash += shares * price
        self.positions[ticker] = self.positions.get(ticker, 0.0) - shares
        if self.positions[ticker] == 0.0:
            del self.positions[ticker]
        self.trades.append(Trade(day, ticker, "sell", shares, price))

    def position(self, ticker: str) -> float:
        return self.positions.get(ticker, 0.0)

    def equity(self, book: PriceBook, day: date) -> float:
        value = self.cash
        for ticker, shares in self.positions.items():
            value += shares * book.quote(ticker, day).close
        return value

    @classmethod
    def replay(cls, initial_cash: float, trades: list[Trade]) -> "Ledger":
        ledger = cls(cash=initial_cash)
        for t in trades:
            if t.side == "buy":
                ledger.buy(t.ticker, t.day, t.shares, t.price)
            elif t.side == "sell":
                ledger.sell(t.ticker, t.day, t.shares, t.price)
            else:
                raise ValueError(f"unknown trade side {t.side!r}")
        return ledger


@dataclass
class ReturnReport:
    initial_capital: float
    final_cash: float
    trade_count: int
    equity_curve: list[tuple[date, float]]
    trades: list[Trade] = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return (self.final_cash - self.initial_capital) / self.initial_capital


def execution_price(book: PriceBook, ticker: str, day: date, side: str,
                    cost: str) -> float:
    """Execution price under the chosen transaction-cost model.

    "none" trades at the close; "half_spread" pays close +/- (ask-bid)/2;
    "bid_ask" buys at the ask and sells at the bid.
    """
    if side not in ("buy", "sell"):
        raise ValueError(f"unknown side {side!r}")
    if cost not in COST_MODELS:
        raise ValueError(f"unknown cost model {cost!r}; expected one of {COST_MODELS}")
    q = book.quote(ticker, day)
    if cost == "none":
        return q.close
    if cost == "half_spread":
        half = (q.ask - q.bid) / 2.0
        return q.close + half if side == "buy" else q.close - half
    return q.ask if side == "buy" else q.bid


def _check_alignment(panel: PredictionPanel, book: PriceBook) -> None:
    missing = [
        (ticker, day)
        for day in panel.days
        for ticker in panel.tickers
        if not book.has(ticker, day)
    ]
    if missing:
        pairs = ", ".join(f"{t}@{d.isoformat()}" for t, d in missing[:20])
        raise ValueError(f"panel/book misaligned; missing quotes: {pairs}")


def long_only_backtest(panel: PredictionPanel, book: PriceBook, cost: str,
                       capital: float) -> ReturnReport:
    """Buy every positively predicted stock with an equal cash quota each day.

    Per day: holdings with a negative prediction are sold first, then the
    whole cash balance is split equally over all positively predicted tickers
    (re-buying ones already held).  All holdings are liquidated after the
    final day at that day's sell prices.
    """
    if capital <= 0:
        raise ValueError("capital must be positive")
    _check_alignment(panel, book)
    ledger = Ledger(cash=capital)
    curve: list[tuple[date, float]] = []
    for day in panel.days:
        preds = panel.predicted[day]
        for ticker in sorted(ledger.positions):
            if preds[ticker] < 0.0:
                shares = ledger.position(ticker)
                if shares > 0.0:
                    price = execution_price(book, ticker, day, "sell", cost)
                    ledger.sell(ticker, day, shares, price)
        invest = [t for t in panel.tickers if preds[t] > 0.0]
        if invest and ledger.cash > 0.0:
            quota = ledger.cash / len(invest)
            for ticker in invest:
                price = execution_price(book, ticker, day, "buy", cost)
                ledger.buy(ticker, day, quota / price, price)
        curve.append((day, ledger.equity(book, day)))
    last_day = panel.days[-1]
    for ticker in sorted(ledger.positions):
        shares = ledger.position(ticker)
        if shares > 0.0:
            price = execution_price(book, ticker, last_day, "sell", cost)
            ledger.sell(ticker, last_day, shares, price)
    report = ReturnReport(
        initial_capital=capital,
        final_cash=ledger.cash,
        trade_count=len(ledger.trades),
        equity_curve=curve,
        trades=ledger.trades,
    )
    _check_replay(report)
    return report


def long_short_backtest(panel: PredictionPanel, book: PriceBook, cost: str,
                        capital: float, n_long: int, n_short: int) -> ReturnReport:
    """Daily long-short: long the top n_long predictions, short the bottom n_short.

    Trading happens only on days where the n_long-th best prediction is
    strictly positive and the n_short-th worst strictly negative.  On a trade
    day all positions are liquidated first; the post-liquidation cash sets
    both quotas, so short proceeds exactly offset the long outlay.
    """
    if capital <= 0:
        raise ValueError("capital must be positive")
    if n_long < 1 or n_short < 1:
        raise ValueError("n_long and n_short must be >= 1")
    if n_long + n_short > len(panel.tickers):
        raise ValueError(
            f"n_long + n_short = {n_long + n_short} exceeds "
            f"ticker count {len(panel.tickers)}"
        )
    _check_alignment(panel, book)
    ledger = Ledger(cash=capital)
    curve: list[tuple[date, float]] = []

    def liquidate(day: date) -> None:
        for ticker in sorted(ledger.positions):
            shares = ledger.position(ticker)
            if shares > 0.0:
                ledger.sell(ticker, day, shares,
                            execution_price(book, ticker, day, "sell", cost))
        for ticker in sorted(ledger.positions):
            shares = ledger.position(ticker)
            if shares < 0.0:
                ledger.buy(ticker, day, -shares,
                           execution_price(book, ticker, day, "buy", cost))

    for day in panel.days:
        preds = panel.predicted[day]
        ranked = sorted(panel.tickers, key=lambda t: (-preds[t], t))
        if preds[ranked[n_long - 1]] > 0.0 and preds[ranked[-n_short]] < 0.0:
            liquidate(day)
            if ledger.cash <= 0.0:
                # equity wiped out by short losses; nothing left to allocate
                curve.append((day, ledger.equity(book, day)))
                continue
            quota_long = ledger.cash / n_long
            quota_short = ledger.cash / n_short
            for ticker in ranked[:n_long]:
                price = execution_price(book, ticker, day, "buy", cost)
                ledger.buy(ticker, day, quota_long / price, price)
            for ticker in ranked[-n_short:]:
                price = execution_price(book, ticker, day, "sell", cost)
                ledger.sell(ticker, day, quota_short / price, price)
        curve.append((day, ledger.equity(book, day)))
    liquidate(panel.days[-1])
    report = ReturnReport(
        initial_capital=capital,
        final_cash=ledger.cash,
        trade_count=len(ledger.trades),
        equity_curve=curve,
        trades=ledger.trades,
    )
    _check_replay(report)
    return report


def buy_and_hold(book: PriceBook, tickers: list[str], capital: float,
                 cost: str = "none", days: list[date] | None = None) -> ReturnReport:
    """Equal-weight basket bought on the first day and liquidated on the last."""
    if capital <= 0:
        raise ValueError("capital must be positive")
    if not tickers:
        raise ValueError("need at least one ticker")
    tickers = sorted(tickers)
    if days is None:
        days = book.days(tickers[0])
    if not days:
        raise ValueError("no trading days")
    first, last = days[0], days[-1]
    ledger = Ledger(cash=capital)
    quota = capital / len(tickers)
    for ticker in tickers:
        price = execution_price(book, ticker, first, "buy", cost)
        ledger.buy(ticker, first, quota / price, price)
    curve = [(day, ledger.equity(book, day)) for day in days]
    for ticker in tickers:
        shares = ledger.position(ticker)
        price = execution_price(book, ticker, last, "sell", cost)
        ledger.sell(ticker, last, shares, price)
    report = ReturnReport(
        initial_capital=capital,
        final_cash=ledger.cash,
        trade_count=len(ledger.trades),
        equity_curve=curve,
        trades=ledger.trades,
    )
    _check_replay(report)
    return report


def sweep_grid(panel: PredictionPanel, book: PriceBook, cost: str, capital: float,
               max_long: int = 15, max_short: int = 15) -> np.ndarray:
    """Matrix of long-short returns; cell (L, S) uses n_long=L+1, n_short=S+1."""
    grid = np.empty((max_long, max_short), dtype=np.float64)
    for L in range(1, max_long + 1):
        for S in range(1, max_short + 1):
            try:
                report = long_short_backtest(panel, book, cost, capital, L, S)
            except ValueError as exc:
                raise ValueError(f"grid cell (long_{L}, short_{S}): {exc}") from exc
            grid[L - 1, S - 1] = report.total_return
    return grid


def write_grid_csv(grid: np.ndarray, path: str | Path) -> None:
    """Grid CSV with long_1..long_N row labels and short_1..short_M columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_long, n_short = grid.shape
    lines = ["," + ",".join(f"short_{s}" for s in range(1, n_short + 1))]
    for L in range(n_long):
        cells = ",".join(repr(float(v)) for v in grid[L])
        lines.append(f"long_{L + 1},{cells}")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def read_grid_csv(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_short = len(header) - 1
        rows = [list(map(float, row[1:])) for row in reader if row]
    grid = np.array(rows, dtype=np.float64)
    if grid.shape[1] != n_short:
        raise ValueError("grid csv is ragged")
    return grid


def write_report(report: ReturnReport, path: str | Path) -> None:
    """Structured text record: header key/value lines then the equity curve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"initial_capital,{report.initial_capital!r}",
        f"final_cash,{report.final_cash!r}",
        f"return,{report.total_return!r}",
        f"trade_count,{report.trade_count}",
        "equity_curve",
        "date,equity",
    ]
    for day, equity in report.equity_curve:
        lines.append(f"{day.isoformat()},{equity!r}")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def read_report(path: str | Path) -> ReturnReport:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i] != "equity_curve":
        key, value = lines[i].split(",", 1)
        header[key] = value
        i += 1
    curve: list[tuple[date, float]] = []
    for line in lines[i + 2:]:
        if not line:
            continue
        day, equity = line.split(",", 1)
        curve.append((date.fromisoformat(day), float(equity)))
    return ReturnReport(
        initial_capital=float(header["initial_capital"]),
        final_cash=float(header["final_cash"]),
        trade_count=int(header["trade_count"]),
        equity_curve=curve,
    )


def _check_replay(report: ReturnReport) -> None:
    # the trade log is the single source of truth: replaying it must land on
    # the reported cash exactly (same float operations in the same order)
    replayed = Ledger.replay(report.initial_capital, report.trades)
    if replayed.cash != report.final_cash:
        raise AssertionError(
            f"ledger replay mismatch: {replayed.cash!r} != {report.final_cash!r}"
        )
    if replayed.positions:
        raise AssertionError(f"ledger replay left open positions {replayed.positions}")
