"""Report rendering: matplotlib figures plus a delimited summary table.

The report command scans an output directory for whatever earlier stages
produced (strategy reports, prediction panel, sweep grid, evolution logs) and
renders a figure for each, writing a summary.csv next to the images.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .trading import PredictionPanel, ReturnReport, read_grid_csv, read_report


def plot_equity_curves(reports: dict[str, ReturnReport], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(9, 5))
    for label, report in sorted(reports.items()):
        days = [d for d, _ in report.equity_curve]
        values = [v for _, v in report.equity_curve]
        ax.plot(days, values, label=f"{label} ({report.total_return:+.2%})")
    ax.set_xlabel("date")
    ax.set_ylabel("portfolio value")
    ax.set_title("Equity curves")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_heatmap(grid: np.ndarray, path: Path) -> None:
    n_long, n_short = grid.shape
    fig, ax = plt.subplots(figsize=(8, 7))
    im = ax.imshow(grid * 100.0, cmap="RdYlGn", aspect="auto")
    ax.set_xticks(range(n_short), [f"short_{s + 1}" for s in range(n_short)],
                  rotation=90, fontsize=7)
    ax.set_yticks(range(n_long), [f"long_{l + 1}" for l in range(n_long)], fontsize=7)
    ax.set_title("Daily long-short strategy return (%)")
    fig.colorbar(im, ax=ax, label="return (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_prediction_scatter(panel: PredictionPanel, path: Path) -> None:
    predicted = []
    realized = []
    for day in panel.days:
        for ticker in panel.tickers:
            predicted.append(panel.predicted[day][ticker])
            realized.append(panel.realized[day][ticker])
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(predicted, realized, s=6, alpha=0.4)
    lim = max(1e-9, np.max(np.abs(predicted + realized)))
    ax.axhline(0.0, color="grey", lw=0.7)
    ax.axvline(0.0, color="grey", lw=0.7)
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_xlabel("predicted return")
    ax.set_ylabel("realized return")
    ax.set_title("Predicted vs realized next-day returns")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fitness_traces(traces: dict[str, list[float]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(9, 5))
    for label, best in sorted(traces.items()):
        ax.plot(range(1, len(best) + 1), best, label=label, lw=1.0)
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best validation MSE")
    ax.set_yscale("log")
    ax.set_title("Evolution progress")
    if len(traces) <= 12:
        ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _read_best_trace(path: Path) -> list[float]:
    best = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("evaluation_index,"):
            raise ValueError(f"{path}: not an evolution log")
        for line in fh:
            if line.strip():
                best.append(float(line.rsplit(",", 1)[1]))
    return best


def render_reports(out_dir: str | Path) -> list[Path]:
    """Render every figure the output directory has inputs for.

    Returns the list of files written.  Figures land in out_dir/figures; the
    summary table in out_dir/summary.csv.
    """
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    reports = {
        p.stem.removeprefix("report_"): read_report(p)
        for p in sorted(out_dir.glob("report_*.report"))
    }
    if reports:
        path = fig_dir / "equity_curves.png"
        plot_equity_curves(reports, path)
        written.append(path)
        summary = out_dir / "summary.csv"
        tmp = summary.with_suffix(".csv.tmp")
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "initial_capital", "final_cash",
                             "return", "trade_count"])
            for name, report in sorted(reports.items()):
                writer.writerow([
                    name,
                    repr(report.initial_capital),
                    repr(report.final_cash),
                    repr(report.total_return),
                    report.trade_count,
                ])
        os.replace(tmp, summary)
        written.append(summary)

    sweep_path = out_dir / "sweep.csv"
    if sweep_path.exists():
        grid = read_grid_csv(sweep_path)
        path = fig_dir / "sweep_heatmap.png"
        plot_sweep_heatmap(grid, path)
        written.append(path)

    panel_path = out_dir / "predictions.csv"
    if panel_path.exists():
        panel = PredictionPanel.from_csv(panel_path)
        path = fig_dir / "prediction_scatter.png"
        plot_prediction_scatter(panel, path)
        written.append(path)

    log_dir = out_dir / "logs"
    if log_dir.is_dir():
        traces = {
            p.stem: _read_best_trace(p) for p in sorted(log_dir.glob("*.evolog"))
        }
        if traces:
            path = fig_dir / "evolution_progress.png"
            plot_fitness_traces(traces, path)
            written.append(path)

    return written
