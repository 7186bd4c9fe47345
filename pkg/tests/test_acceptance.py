"""Acceptance suite: one test per exit criterion, each printing a pass/fail
line.  Runtime limits are enforced after a one-time kernel warmup so JIT
compilation does not count against them.

Run with:  pytest tests/test_acceptance.py -v -s
"""

import time
from contextlib import contextmanager
from datetime import date

import numpy as np
import pytest

from evofolio.baselines import build_layered
from evofolio.engine import CompiledNetwork, forward_pass, warmup_kernels
from evofolio.evolution import (
    EvoConfig,
    Population,
    crossover,
    evolve,
    mutate,
    seed_genome,
)
from evofolio.experiment import cmd_backtest, cmd_evolve, cmd_predict, load_config
from evofolio.synthetic import make_universe
from evofolio.trading import (
    PredictionPanel,
    PriceBook,
    Quote,
    Trade,
    long_only_backtest,
    long_short_backtest,
    sweep_grid,
    write_grid_csv,
)
from evofolio.training import TrainConfig, bptt_train, evaluate

from conftest import build_random_genome


@pytest.fixture(scope="module", autouse=True)
def warm():
    warmup_kernels()


@contextmanager
def criterion(number: int, name: str, limit_s: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL")
        raise
    elapsed = time.perf_counter() - start
    if limit_s is not None:
        assert elapsed < limit_s, f"criterion {number} took {elapsed:.1f}s > {limit_s}s"
    print(f"ACCEPTANCE {number} ({name}): PASS ({elapsed:.2f}s)")


D = [date(2022, 1, 3), date(2022, 1, 4), date(2022, 1, 5), date(2022, 1, 6),
     date(2022, 1, 7)]


def flat(c):
    return Quote(close=c, bid=c, ask=c)


def panel_from(preds):
    days = sorted(preds)
    tickers = sorted(preds[days[0]])
    realized = {d: {t: 0.0 for t in tickers} for d in days}
    return PredictionPanel(days, tickers, preds, realized)


def ledger_fixtures():
    """Five hand-computed fixtures: (name, run, oracle trades, oracle C1, C0).

    All prices and quotas are binary-exact, so the oracle arithmetic
    (hand-derived share counts times prices) is reproduced bitwise.
    """
    fixtures = []

    # A: long-only, 2 tickers, 2 days; ZZZ never predicted positive
    book_a = PriceBook({
        "AAA": {D[0]: flat(10.0), D[1]: flat(11.0)},
        "ZZZ": {D[0]: flat(50.0), D[1]: flat(49.0)},
    })
    panel_a = panel_from({D[0]: {"AAA": 0.5, "ZZZ": -0.1},
                          D[1]: {"AAA": -0.1, "ZZZ": -0.2}})
    oracle_a = [Trade(D[0], "AAA", "buy", 10.0, 10.0),
                Trade(D[1], "AAA", "sell", 10.0, 11.0)]
    fixtures.append(("A long-only",
                     lambda c=100.0: long_only_backtest(panel_a, book_a, "none", c),
                     oracle_a, 110.0, 100.0))

    # B: long-short 1/1, 2 tickers, 2 days (worked example)
    book_b = PriceBook({
        "A": {D[0]: flat(10.0), D[1]: flat(11.0)},
        "B": {D[0]: flat(20.0), D[1]: flat(18.0)},
    })
    panel_b = panel_from({D[0]: {"A": 0.02, "B": -0.03},
                          D[1]: {"A": 0.01, "B": 0.01}})
    oracle_b = [Trade(D[0], "A", "buy", 10.0, 10.0),
                Trade(D[0], "B", "sell", 5.0, 20.0),
                Trade(D[1], "A", "sell", 10.0, 11.0),
                Trade(D[1], "B", "buy", 5.0, 18.0)]
    fixtures.append(("B long-short",
                     lambda c=100.0: long_short_backtest(panel_b, book_b, "none", c, 1, 1),
                     oracle_b, 120.0, 100.0))

    # C: long-only with half-spread costs, re-buy, and a zero prediction
    book_c = PriceBook({
        "AAA": {D[0]: Quote(7.5, 7.0, 8.0), D[1]: Quote(9.0, 8.5, 9.5),
                D[2]: Quote(9.0, 8.5, 9.5)},
        "BBB": {D[0]: Quote(15.5, 15.0, 16.0), D[1]: Quote(16.5, 16.0, 17.0),
                D[2]: Quote(18.0, 17.5, 18.5)},
    })
    panel_c = panel_from({
        D[0]: {"AAA": 0.02, "BBB": 0.01},
        D[1]: {"AAA": -0.01, "BBB": 0.03},
        D[2]: {"AAA": 0.0, "BBB": -0.02},
    })
    oracle_c = [Trade(D[0], "AAA", "buy", 6.0, 8.0),
                Trade(D[0], "BBB", "buy", 3.0, 16.0),
                Trade(D[1], "AAA", "sell", 6.0, 8.5),
                Trade(D[1], "BBB", "buy", 3.0, 17.0),
                Trade(D[2], "BBB", "sell", 6.0, 17.5)]
    fixtures.append(("C long-only half-spread",
                     lambda c=96.0: long_only_backtest(panel_c, book_c, "half_spread", c),
                     oracle_c, 105.0, 96.0))

    # D: long-short with bid/ask costs, a closed-gate day, and re-shorting
    book_d = PriceBook({
        "A": {D[0]: Quote(9.75, 9.5, 10.0), D[1]: Quote(10.0, 9.75, 10.25),
              D[2]: Quote(10.75, 10.5, 11.0)},
        "B": {D[0]: Quote(15.0, 14.75, 15.25), D[1]: Quote(15.5, 15.25, 15.75),
              D[2]: Quote(21.75, 21.5, 22.0)},
        "C": {D[0]: Quote(20.25, 20.0, 20.5), D[1]: Quote(20.0, 19.75, 20.25),
              D[2]: Quote(17.0, 16.0, 19.0)},
    })
    panel_d = panel_from({
        D[0]: {"A": 0.02, "B": 0.01, "C": -0.03},
        D[1]: {"A": 0.01, "B": 0.02, "C": 0.01},
        D[2]: {"A": -0.01, "B": 0.02, "C": -0.02},
    })
    oracle_d = [Trade(D[0], "A", "buy", 10.0, 10.0),
                Trade(D[0], "C", "sell", 5.0, 20.0),
                Trade(D[2], "A", "sell", 10.0, 10.5),
                Trade(D[2], "C", "buy", 5.0, 19.0),
                Trade(D[2], "B", "buy", 5.0, 22.0),
                Trade(D[2], "C", "sell", 6.875, 16.0),
                Trade(D[2], "B", "sell", 5.0, 21.5),
                Trade(D[2], "C", "buy", 6.875, 19.0)]
    fixtures.append(("D long-short bid-ask",
                     lambda c=100.0: long_short_backtest(panel_d, book_d, "bid_ask", c, 1, 1),
                     oracle_d, 86.875, 100.0))

    # E: long-only that never trades
    book_e = PriceBook({
        "AAA": {d: flat(10.0) for d in D[:3]},
        "BBB": {d: flat(20.0) for d in D[:3]},
    })
    panel_e = panel_from({d: {"AAA": -0.1, "BBB": -0.2} for d in D[:3]})
    fixtures.append(("E no-trade",
                     lambda c=500.0: long_only_backtest(panel_e, book_e, "none", c),
                     [], 500.0, 500.0))
    return fixtures


def test_criterion_1_ledger_oracle_equivalence():
    with criterion(1, "ledger oracle equivalence", limit_s=1.0):
        for name, run, oracle_trades, oracle_c1, c0 in ledger_fixtures():
            report = run()
            assert report.trades == oracle_trades, name
            assert abs(report.final_cash - oracle_c1) <= 1e-12 * abs(oracle_c1), name


def test_criterion_2_gradient_correctness():
    with criterion(2, "gradient correctness", limit_s=30.0):
        rng = np.random.default_rng(20250810)
        step = 1e-5
        seen_cells = set()
        for trial in range(10):
            genome = build_random_genome(
                rng,
                n_hidden=int(rng.integers(4, 13)),
                n_recurrent=int(rng.integers(2, 8)),
            )
            assert len(genome.nodes) <= 20
            seen_cells |= {n.cell for n in genome.hidden_nodes()}
            X = rng.uniform(0.0, 1.0, size=(50, 7))
            y = rng.uniform(-0.1, 0.1, size=50)
            net = CompiledNetwork(genome)
            w = net.initial_weights.copy()
            _, analytic = net.loss_and_gradient(w, X, y)

            def loss(weights):
                preds = net.forward(weights, X)
                resid = preds[: y.shape[0]] - y
                return float(np.mean(resid * resid))

            for j in range(len(w)):
                wp = w.copy()
                wm = w.copy()
                wp[j] += step
                wm[j] -= step
                numeric = (loss(wp) - loss(wm)) / (2.0 * step)
                a = analytic[j]
                if abs(a) < 1e-3:
                    assert abs(a - numeric) < 1e-7, f"trial {trial} weight {j}"
                else:
                    rel = abs(a - numeric) / max(abs(a), abs(numeric))
                    assert rel < 1e-4, f"trial {trial} weight {j}: rel {rel}"
        assert seen_cells == {"simple", "lstm", "gru", "mgu"}


def _behaviorally_identical(parent, child, rng):
    for _ in range(5):
        X = rng.uniform(-1.0, 1.0, size=(20, 7))
        diff = np.max(np.abs(forward_pass(child, X) - forward_pass(parent, X)))
        if diff != 0.0:
            return False
    return True


def test_criterion_3_mutation_soundness():
    with criterion(3, "mutation and crossover soundness", limit_s=30.0):
        pop = Population(EvoConfig(n_islands=2, capacity=5, budget=1), seed=31)
        kinds, probs = pop.config.kind_probabilities()
        rng = np.random.default_rng(99)
        pool = [seed_genome(pop)]
        clones_checked = 0
        for k in range(10_000):
            parent = pool[int(pop.rng.integers(0, len(pool)))]
            kind = kinds[int(pop.rng.choice(len(kinds), p=probs))]
            child = mutate(parent, kind, pop)  # validates every invariant
            if child.lineage[0] == "mutate:clone" and clones_checked < 300:
                assert _behaviorally_identical(parent, child, rng)
                clones_checked += 1
            total_genes = len(child.nodes) + len(child.edges) + len(child.recurrent_edges)
            if total_genes <= 150:
                if len(pool) < 40:
                    pool.append(child)
                else:
                    pool[int(pop.rng.integers(0, len(pool)))] = child
        assert clones_checked >= 100

        for genome in pool:
            genome.fitness = float(pop.rng.random())
        self_checked = 0
        for k in range(2_000):
            if k % 10 == 0:
                parent = pool[int(pop.rng.integers(0, len(pool)))]
                child = crossover(parent, parent, pop)  # validates
                if self_checked < 100:
                    assert _behaviorally_identical(parent, child, rng)
                    self_checked += 1
            else:
                a = pool[int(pop.rng.integers(0, len(pool)))]
                b = pool[int(pop.rng.integers(0, len(pool)))]
                crossover(a, b, pop)  # validates
        assert self_checked >= 100


def test_criterion_4_evolution_progress(ar2_dataset):
    with criterion(4, "evolution progress", limit_s=600.0):
        config = EvoConfig(budget=2000)
        best, log = evolve(ar2_dataset, config, TrainConfig(), workers=1, seed=42)
        seed_fitnesses = [rec.fitness for rec in log if rec.operator == "seed"]
        assert len(seed_fitnesses) == config.n_islands
        baseline = min(seed_fitnesses)
        assert best.fitness <= 0.5 * baseline, (
            f"best {best.fitness} vs trained-seed baseline {baseline}"
        )
        trace = [rec.global_best_fitness for rec in log]
        assert all(a >= b for a, b in zip(trace, trace[1:]))
        print(f"  [criterion 4] seed baseline {baseline:.3e} -> "
              f"best {best.fitness:.3e} (ratio {best.fitness / baseline:.3f})")


def test_criterion_5_cost_monotonicity():
    with criterion(5, "cost monotonicity"):
        rng = np.random.default_rng(55)
        tickers = [f"T{k}" for k in range(4)]
        checked = 0
        for trial in range(12):
            days = D[:4]
            quotes = {}
            for ticker in tickers:
                close = float(rng.uniform(20, 60))
                per_day = {}
                for day in days:
                    close *= float(1.0 + rng.uniform(-0.1, 0.1))
                    half = close * 0.003
                    per_day[day] = Quote(close, close - half, close + half)
                quotes[ticker] = per_day
            book = PriceBook(quotes)
            preds = {d: {t: float(rng.uniform(-0.05, 0.05)) for t in tickers}
                     for d in days}
            panel = panel_from(preds)
            for run in (
                lambda cost: long_only_backtest(panel, book, cost, 1000.0),
                lambda cost: long_short_backtest(panel, book, cost, 1000.0, 1, 1),
            ):
                none = run("none")
                if none.trade_count == 0:
                    continue
                assert run("half_spread").total_return <= none.total_return + 1e-12
                assert run("bid_ask").total_return <= none.total_return + 1e-12
                checked += 1
            # zero-spread variant: all three models agree
            flat_book = PriceBook({
                t: {d: flat(q.close) for d, q in quotes[t].items()} for t in tickers
            })
            runs = [
                long_only_backtest(panel, flat_book, cost, 1000.0).total_return
                for cost in ("none", "half_spread", "bid_ask")
            ]
            assert abs(runs[0] - runs[1]) < 1e-12
            assert abs(runs[0] - runs[2]) < 1e-12
        assert checked >= 10


def test_criterion_6_grid_shape(tmp_path):
    with criterion(6, "grid reproduction of shape"):
        rng = np.random.default_rng(66)
        tickers = [f"S{k:02d}" for k in range(30)]
        days = D[:3]
        quotes = {
            t: {d: flat(float(rng.uniform(20, 80))) for d in days} for t in tickers
        }
        book = PriceBook(quotes)
        preds = {d: {t: float(rng.uniform(-0.05, 0.05)) for t in tickers}
                 for d in days}
        panel = panel_from(preds)
        grid = sweep_grid(panel, book, "none", 1000.0, max_long=15, max_short=15)
        assert grid.shape == (15, 15)
        path = tmp_path / "sweep.csv"
        write_grid_csv(grid, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        expected_header = "," + ",".join(f"short_{s}" for s in range(1, 16))
        assert lines[0] == expected_header
        assert [line.split(",", 1)[0] for line in lines[1:]] == [
            f"long_{l}" for l in range(1, 16)
        ]
        for L in (1, 4, 9, 15):
            for S in (1, 7, 15):
                standalone = long_short_backtest(panel, book, "none", 1000.0, L, S)
                assert abs(grid[L - 1, S - 1] - standalone.total_return) <= 1e-12


def test_criterion_7_return_formula():
    with criterion(7, "return formula"):
        for name, run, _, oracle_c1, c0 in ledger_fixtures():
            report = run()
            assert report.total_return == (report.final_cash - c0) / c0, name
            scaled = run(10.0 * c0)
            assert abs(scaled.total_return - report.total_return) <= 1e-12, name
            assert abs(scaled.final_cash - 10.0 * report.final_cash) \
                <= 1e-12 * abs(report.final_cash) * 10.0, name


def test_criterion_8_baseline_trainability(ar2_dataset):
    with criterion(8, "baseline trainability", limit_s=300.0):
        X_train, y_train = ar2_dataset.split_arrays("train")
        X_valid, y_valid = ar2_dataset.split_arrays("valid")
        genome = build_layered("gru", rng=np.random.default_rng(88))
        config = TrainConfig(epochs=1000, learning_rate=0.0001)
        trained, trace = bptt_train(genome, X_train, y_train, config)
        assert len(trace) == 1000
        mse = evaluate(trained, X_valid, y_valid)
        constant_mean = float(np.mean(y_train))
        floor = float(np.mean((y_valid - constant_mean) ** 2))
        assert mse < floor, f"GRU {mse} not below constant-mean {floor}"
        print(f"  [criterion 8] GRU val MSE {mse:.3e} vs constant-mean {floor:.3e}")


def test_criterion_9_end_to_end_determinism(tmp_path):
    with criterion(9, "end-to-end determinism"):
        make_universe(tmp_path / "data", ["AAA", "BBB"], 1996, 1999, seed=9)
        (tmp_path / "exp.ini").write_text(
            "[data]\n"
            "data_dir = data\n"
            "tickers = AAA,BBB\n"
            "index_file = data/index.csv\n"
            "test_year = 1999\n"
            "\n"
            "[evolution]\n"
            "repeats = 2\n"
            "islands = 2\n"
            "capacity = 3\n"
            "budget = 8\n"
            "epochs = 3\n"
            "\n"
            "[strategy]\n"
            "strategy = long_only\n"
            "cost_model = half_spread\n"
            "capital = 50000\n"
            "\n"
            "[output]\n"
            "seed = 424242\n"
        )
        outputs = []
        for run in ("run1", "run2"):
            config = load_config(tmp_path / "exp.ini", out_dir=tmp_path / run)
            manifest = cmd_evolve(config)
            assert all("error" not in e for e in manifest.tickers.values())
            cmd_predict(manifest, config)
            cmd_backtest(config.out_dir / "predictions.csv", config)
            outputs.append({
                name: (config.out_dir / name).read_bytes()
                for name in ("manifest.json", "predictions.csv",
                             "report_long_only.report", "report_buy_and_hold.report")
            })
        assert outputs[0] == outputs[1]
