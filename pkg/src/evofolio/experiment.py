"""Experiment orchestration: per-stock evolution, baselines, prediction panels,
backtests, and run manifests, all driven by one INI-style config file.

Per-ticker work is isolated: a failure is recorded in the manifest and the
remaining tickers proceed.  Seeds for repeated runs are derived from the
master seed with a stable hash, so results are reproducible run to run.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import BASELINE_CELLS, build_layered
from .evolution import EvoConfig, evolve, write_evolution_log
from .market_data import StockDataset, load_dataset, load_stock_csv
from .serialize import load_genome, save_genome
from .trading import (
    PredictionPanel,
    PriceBook,
    buy_and_hold,
    long_only_backtest,
    long_short_backtest,
    sweep_grid,
    write_grid_csv,
    write_report,
)
from .training import TrainConfig, bptt_train, evaluate
from .engine import CompiledNetwork

STRATEGIES = ("long_only", "long_short")


@dataclass
class ExperimentConfig:
    data_dir: Path
    tickers: list[str]
    index_file: Path
    test_year: int
    out_dir: Path
    seed: int = 0
    workers: int = 1
    repeats: int = 10
    evo: EvoConfig = field(default_factory=EvoConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline_cells: tuple[str, ...] = ("lstm", "gru", "mgu")
    baseline_epochs: int = 1000
    baseline_learning_rate: float = 0.0001
    strategy: str = "long_only"
    cost_model: str = "none"
    capital: float = 100000.0
    n_long: int = 5
    n_short: int = 5
    max_long: int = 15
    max_short: int = 15
    config_hash: str = ""

    def validate(self) -> None:
        if not self.tickers:
            raise ValueError("config: ticker list is empty")
        if self.repeats < 1:
            raise ValueError("config: repeats must be >= 1")
        for cell in self.baseline_cells:
            if cell not in BASELINE_CELLS:
                raise ValueError(f"config: unsupported baseline cell {cell!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"config: unknown strategy {self.strategy!r}")
        self.evo.validate()
        self.train.validate()
        for ticker in self.tickers:
            path = self.stock_csv(ticker)
            if not path.exists():
                raise ValueError(f"config: missing data file {path}")
        if not self.index_file.exists():
            raise ValueError(f"config: missing index file {self.index_file}")

    def stock_csv(self, ticker: str) -> Path:
        return self.data_dir / f"{ticker}.csv"

    def dataset(self, ticker: str) -> StockDataset:
        return load_dataset(self.stock_csv(ticker), self.index_file, ticker,
                            self.test_year)


def load_config(path: str | Path, seed: int | None = None,
                workers: int | None = None,
                out_dir: str | Path | None = None) -> ExperimentConfig:
    """Parse the INI-style experiment config, applying CLI overrides."""
    path = Path(path)
    parser = configparser.ConfigParser()
    with path.open(encoding="utf-8") as fh:
        parser.read_file(fh)

    data = parser["data"]
    base = path.parent
    data_dir = (base / data.get("data_dir", ".")).resolve()
    evo_section = parser["evolution"] if parser.has_section("evolution") else {}
    train = TrainConfig(
        epochs=int(evo_section.get("epochs", 20)),
        learning_rate=float(evo_section.get("learning_rate", 0.001)),
        adam_beta1=float(evo_section.get("adam_beta1", 0.9)),
        adam_beta2=float(evo_section.get("adam_beta2", 0.999)),
        adam_epsilon=float(evo_section.get("adam_epsilon", 1e-8)),
        clip_low=float(evo_section.get("clip_low", 0.05)),
        clip_high=float(evo_section.get("clip_high", 1.0)),
    )
    evo = EvoConfig(
        n_islands=int(evo_section.get("islands", 10)),
        capacity=int(evo_section.get("capacity", 10)),
        budget=int(evo_section.get("budget", 2000)),
        mutation_rate=float(evo_section.get("mutation_rate", 0.7)),
        crossover_rate=float(evo_section.get("crossover_rate", 0.3)),
        inter_island_fraction=float(evo_section.get("inter_island_fraction", 1.0 / 3.0)),
        time_skip_max=int(evo_section.get("time_skip_max", 10)),
        repopulation_period=int(evo_section.get("repopulation_period", 400)),
    )
    baseline = parser["baseline"] if parser.has_section("baseline") else {}
    strategy = parser["strategy"] if parser.has_section("strategy") else {}
    output = parser["output"] if parser.has_section("output") else {}

    config = ExperimentConfig(
        data_dir=data_dir,
        tickers=[t.strip() for t in data["tickers"].split(",") if t.strip()],
        index_file=(base / data.get("index_file", "index.csv")).resolve(),
        test_year=int(data["test_year"]),
        out_dir=Path(out_dir) if out_dir else (base / output.get("out_dir", "out")).resolve(),
        seed=seed if seed is not None else int(output.get("seed", 0)),
        workers=workers if workers is not None else int(output.get("workers", 1)),
        repeats=int(evo_section.get("repeats", 10)),
        evo=evo,
        train=train,
        baseline_cells=tuple(
            c.strip() for c in baseline.get("cells", "lstm,gru,mgu").split(",") if c.strip()
        ),
        baseline_epochs=int(baseline.get("epochs", 1000)),
        baseline_learning_rate=float(baseline.get("learning_rate", 0.0001)),
        strategy=strategy.get("strategy", "long_only"),
        cost_model=strategy.get("cost_model", "none"),
        capital=float(strategy.get("capital", 100000.0)),
        n_long=int(strategy.get("n_long", 5)),
        n_short=int(strategy.get("n_short", 5)),
        max_long=int(strategy.get("max_long", 15)),
        max_short=int(strategy.get("max_short", 15)),
        config_hash=hashlib.sha256(path.read_bytes()).hexdigest()[:16],
    )
    config.validate()
    return config


def derive_seed(master_seed: int, ticker: str, repeat: int) -> int:
    digest = hashlib.sha256(f"{master_seed}:{ticker}:{repeat}".encode()).hexdigest()
    return int(digest[:16], 16)


@dataclass
class RunManifest:
    command: str
    config_hash: str
    master_seed: int
    tickers: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "tickers": self.tickers,
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            command=data["command"],
            config_hash=data["config_hash"],
            master_seed=data["master_seed"],
            tickers=data["tickers"],
        )


def cmd_evolve(config: ExperimentConfig) -> RunManifest:
    """Evolve per-ticker forecasters, keeping the best-validation repeat."""
    config.validate()
    manifest = RunManifest("evolve", config.config_hash, config.seed)
    genome_dir = config.out_dir / "genomes"
    log_dir = config.out_dir / "logs"
    for ticker in config.tickers:
        try:
            dataset = config.dataset(ticker)
            mses: list[float] = []
            seeds: list[int] = []
            paths: list[str] = []
            for repeat in range(config.repeats):
                run_seed = derive_seed(config.seed, ticker, repeat)
                best, log = evolve(dataset, config.evo, config.train,
                                   workers=config.workers, seed=run_seed)
                path = genome_dir / f"{ticker}_r{repeat}.genome"
                save_genome(best, path)
                write_evolution_log(log, log_dir / f"{ticker}_r{repeat}.evolog")
                mses.append(best.fitness)
                seeds.append(run_seed)
                paths.append(str(path.relative_to(config.out_dir)))
            chosen = min(range(len(mses)), key=lambda i: (mses[i], i))
            manifest.tickers[ticker] = {
                "chosen_genome": paths[chosen],
                "chosen_repeat": chosen,
                "validation_mse": mses,
                "seeds": seeds,
            }
        except Exception as exc:  # per-ticker isolation
            manifest.tickers[ticker] = {"error": f"{type(exc).__name__}: {exc}"}
    manifest.save(config.out_dir / "manifest.json")
    return manifest


def cmd_baseline(config: ExperimentConfig, cell: str) -> RunManifest:
    """Train the fixed two-layer baseline of the given cell kind per ticker."""
    config.validate()
    if cell not in BASELINE_CELLS:
        raise ValueError(f"unsupported baseline cell {cell!r}")
    train = TrainConfig(
        epochs=config.baseline_epochs,
        learning_rate=config.baseline_learning_rate,
        clip_low=config.train.clip_low,
        clip_high=config.train.clip_high,
    )
    manifest = RunManifest(f"baseline:{cell}", config.config_hash, config.seed)
    genome_dir = config.out_dir / "genomes"
    for ticker in config.tickers:
        try:
            dataset = config.dataset(ticker)
            X_train, y_train = dataset.split_arrays("train")
            X_valid, y_valid = dataset.split_arrays("valid")
            mses: list[float] = []
            seeds: list[int] = []
            paths: list[str] = []
            for repeat in range(config.repeats):
                run_seed = derive_seed(config.seed, f"{ticker}:{cell}", repeat)
                rng = np.random.default_rng(run_seed)
                net = build_layered(cell, rng=rng)
                trained, _ = bptt_train(net, X_train, y_train, train)
                trained.fitness = evaluate(trained, X_valid, y_valid)
                path = genome_dir / f"{ticker}_{cell}_r{repeat}.genome"
                save_genome(trained, path)
                mses.append(trained.fitness)
                seeds.append(run_seed)
                paths.append(str(path.relative_to(config.out_dir)))
            chosen = min(range(len(mses)), key=lambda i: (mses[i], i))
            manifest.tickers[ticker] = {
                "chosen_genome": paths[chosen],
                "chosen_repeat": chosen,
                "validation_mse": mses,
                "seeds": seeds,
            }
        except Exception as exc:
            manifest.tickers[ticker] = {"error": f"{type(exc).__name__}: {exc}"}
    manifest.save(config.out_dir / f"manifest_{cell}.json")
    return manifest


def cmd_predict(manifest: RunManifest, config: ExperimentConfig,
                panel_name: str = "predictions.csv") -> PredictionPanel:
    """Emit the test-split prediction panel for every chosen genome.

    The network runs over the ticker's whole feature history so its recurrent
    state is warm when the test year starts; panel rows are the test dates.
    Only dates shared by all tickers enter the panel.
    """
    config.validate()
    predictions: dict[str, dict] = {}
    realized: dict[str, dict] = {}
    per_ticker_dates: list[set] = []
    for ticker in sorted(manifest.tickers):
        entry = manifest.tickers[ticker]
        if "error" in entry:
            continue
        genome_path = config.out_dir / entry["chosen_genome"]
        if not genome_path.exists():
            raise ValueError(f"missing genome file for {ticker}: {genome_path}")
        genome = load_genome(genome_path)
        dataset = config.dataset(ticker)
        net = CompiledNetwork(genome)
        outputs = net.forward(net.initial_weights, dataset.model_inputs())
        start, end = dataset.test_range
        dates = dataset.split_dates("test")
        preds = outputs[start - 1:end - 1]
        actual = dataset.targets[start - 1:end - 1]
        predictions[ticker] = dict(zip(dates, preds))
        realized[ticker] = dict(zip(dates, actual))
        per_ticker_dates.append(set(dates))
    if not predictions:
        raise ValueError("no usable tickers in manifest")
    common = sorted(set.intersection(*per_ticker_dates))
    tickers = sorted(predictions)
    panel = PredictionPanel(
        days=common,
        tickers=tickers,
        predicted={d: {t: float(predictions[t][d]) for t in tickers} for d in common},
        realized={d: {t: float(realized[t][d]) for t in tickers} for d in common},
    )
    panel.to_csv(config.out_dir / panel_name)
    return panel


def _price_book(config: ExperimentConfig, tickers: list[str]) -> PriceBook:
    return PriceBook.from_bars(
        {t: load_stock_csv(config.stock_csv(t)) for t in tickers}
    )


def cmd_backtest(panel_path: str | Path, config: ExperimentConfig) -> dict[str, object]:
    """Run the configured strategy plus the buy-and-hold benchmark."""
    config.validate()
    panel = PredictionPanel.from_csv(panel_path)
    book = _price_book(config, panel.tickers)
    reports = {}
    if config.strategy == "long_only":
        reports["long_only"] = long_only_backtest(panel, book, config.cost_model,
                                                  config.capital)
    else:
        reports["long_short"] = long_short_backtest(
            panel, book, config.cost_model, config.capital,
            config.n_long, config.n_short,
        )
    reports["buy_and_hold"] = buy_and_hold(
        book, panel.tickers, config.capital, config.cost_model, days=panel.days
    )
    for name, report in reports.items():
        write_report(report, config.out_dir / f"report_{name}.report")
    return reports


def cmd_sweep(panel_path: str | Path, config: ExperimentConfig) -> np.ndarray:
    """Long/short grid sweep written as a labeled CSV matrix."""
    config.validate()
    panel = PredictionPanel.from_csv(panel_path)
    book = _price_book(config, panel.tickers)
    grid = sweep_grid(panel, book, config.cost_model, config.capital,
                      config.max_long, config.max_short)
    write_grid_csv(grid, config.out_dir / "sweep.csv")
    return grid
