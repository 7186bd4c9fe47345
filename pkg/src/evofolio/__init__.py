"""Evolved recurrent-network return forecasters with a portfolio trading simulator."""

from .baselines import build_layered
from .engine import CompiledNetwork, forward_pass
from .evolution import (
    EvoConfig,
    Island,
    Population,
    crossover,
    evolve,
    insert,
    mutate,
    repopulate_worst_island,
    seed_genome,
)
from .genome import (
    EdgeGene,
    Genome,
    GenomeError,
    NodeGene,
    RecurrentEdgeGene,
    validate_genome,
)
from .market_data import (
    FeatureRow,
    IndexBar,
    StockBar,
    StockDataset,
    compute_predictors,
    load_dataset,
    load_index_csv,
    load_stock_csv,
    normalize,
    split_by_year,
)
from .serialize import load_genome, save_genome
from .trading import (
    Ledger,
    PredictionPanel,
    PriceBook,
    Quote,
    ReturnReport,
    Trade,
    buy_and_hold,
    execution_price,
    long_only_backtest,
    long_short_backtest,
    sweep_grid,
)
from .training import TrainConfig, bptt_train, evaluate, gradient_rescale

__version__ = "0.1.0"
