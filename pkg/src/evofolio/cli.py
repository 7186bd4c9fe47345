"""Command-line interface: evolve, baseline, predict, backtest, sweep, report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    RunManifest,
    cmd_backtest,
    cmd_baseline,
    cmd_evolve,
    cmd_predict,
    cmd_sweep,
    load_config,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed override")
    parser.add_argument("--workers", type=int, default=None, help="worker count override")
    parser.add_argument("--out", default=None, help="output directory override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evofolio",
        description="Evolve per-stock return forecasters and backtest portfolio strategies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="evolve forecasters for every configured ticker")
    _add_common(p)

    p = sub.add_parser("baseline", help="train a fixed two-layer memory-cell baseline")
    _add_common(p)
    p.add_argument("--cell", required=True, choices=("lstm", "gru", "mgu"))

    p = sub.add_parser("predict", help="emit the test-year prediction panel")
    _add_common(p)
    p.add_argument("--manifest", default=None, help="manifest path (default: <out>/manifest.json)")

    p = sub.add_parser("backtest", help="run the configured strategy plus buy-and-hold")
    _add_common(p)
    p.add_argument("--panel", default=None, help="panel csv (default: <out>/predictions.csv)")

    p = sub.add_parser("sweep", help="long/short grid sweep")
    _add_common(p)
    p.add_argument("--panel", default=None)

    p = sub.add_parser("report", help="render figures and the summary table")
    _add_common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, workers=args.workers,
                             out_dir=args.out)
        if args.command == "evolve":
            manifest = cmd_evolve(config)
            failed = [t for t, e in manifest.tickers.items() if "error" in e]
            for ticker in failed:
                print(f"warning: {ticker}: {manifest.tickers[ticker]['error']}",
                      file=sys.stderr)
            print(f"wrote {config.out_dir / 'manifest.json'}")
            return 1 if len(failed) == len(manifest.tickers) else 0
        if args.command == "baseline":
            manifest = cmd_baseline(config, args.cell)
            print(f"wrote {config.out_dir / f'manifest_{args.cell}.json'}")
            failed = [t for t, e in manifest.tickers.items() if "error" in e]
            return 1 if len(failed) == len(manifest.tickers) else 0
        if args.command == "predict":
            manifest_path = args.manifest or (config.out_dir / "manifest.json")
            manifest = RunManifest.load(manifest_path)
            cmd_predict(manifest, config)
            print(f"wrote {config.out_dir / 'predictions.csv'}")
            return 0
        if args.command == "backtest":
            panel = Path(args.panel) if args.panel else config.out_dir / "predictions.csv"
            reports = cmd_backtest(panel, config)
            for name, report in sorted(reports.items()):
                print(f"{name}: return {report.total_return:+.4%} "
                      f"({report.trade_count} trades)")
            return 0
        if args.command == "sweep":
            panel = Path(args.panel) if args.panel else config.out_dir / "predictions.csv"
            cmd_sweep(panel, config)
            print(f"wrote {config.out_dir / 'sweep.csv'}")
            return 0
        if args.command == "report":
            from .reporting import render_reports

            written = render_reports(config.out_dir)
            for path in written:
                print(f"wrote {path}")
            return 0
        raise ValueError(f"unknown command {args.command!r}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
