"""Shared fixtures: synthetic series, random genome builders, and the naive
reference interpreter used as an independent oracle for the compiled engine."""

from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np
import pytest

from evofolio.genome import (
    EdgeGene,
    Genome,
    RecurrentEdgeGene,
    new_node,
    validate_genome,
)
from evofolio.market_data import FeatureRow, normalize, split_by_year


def ar2_series(n: int, seed: int = 7, noise: float = 0.05) -> np.ndarray:
    """Stationary AR(2) process used as the synthetic base signal."""
    rng = np.random.default_rng(seed)
    r = np.zeros(n + 2)
    for t in range(2, n + 2):
        r[t] = 0.6 * r[t - 1] - 0.3 * r[t - 2] + rng.normal(0.0, noise)
    return r[2:]


def ar2_feature_rows(n: int = 1000, seed: int = 7,
                     rows_per_year: int | None = None) -> list[FeatureRow]:
    """Seven inputs built by lagging/transforming one AR(2) base series.

    With ``rows_per_year`` the calendar is compressed so short series still
    span several calendar years.
    """
    base = ar2_series(n, seed=seed)
    rows = []
    if rows_per_year is not None:
        step = max(1, 360 // rows_per_year)
        dates = [
            date(1996 + i // rows_per_year, 1, 1)
            + timedelta(days=(i % rows_per_year) * step)
            for i in range(n)
        ]
        for t in range(n):
            lag1 = base[t - 1] if t >= 1 else 0.0
            lag2 = base[t - 2] if t >= 2 else 0.0
            rows.append(
                FeatureRow(
                    date=dates[t],
                    ret=float(base[t]),
                    volume_change=float(lag1),
                    bid_ask_spread=float(abs(base[t])),
                    illiquidity=float(lag2),
                    turn_over=float(base[t] ** 2),
                    dji_return=float(0.5 * base[t] + 0.25 * lag1),
                    spx_return=float(np.tanh(base[t])),
                )
            )
        return rows
    day = date(1996, 1, 1)
    i = 0
    while i < n:
        if day.weekday() < 5:
            t = i
            lag1 = base[t - 1] if t >= 1 else 0.0
            lag2 = base[t - 2] if t >= 2 else 0.0
            rows.append(
                FeatureRow(
                    date=day,
                    ret=float(base[t]),
                    volume_change=float(lag1),
                    bid_ask_spread=float(abs(base[t])),
                    illiquidity=float(lag2),
                    turn_over=float(base[t] ** 2),
                    dji_return=float(0.5 * base[t] + 0.25 * lag1),
                    spx_return=float(np.tanh(base[t])),
                )
            )
            i += 1
        day += timedelta(days=1)
    return rows


@pytest.fixture(scope="session")
def ar2_dataset():
    rows = ar2_feature_rows(1000, seed=7)
    return normalize(split_by_year(rows, "SYN", rows[-1].date.year))


def build_random_genome(rng: np.random.Generator, n_hidden: int = 6,
                        cells: tuple[str, ...] = ("simple", "lstm", "gru", "mgu"),
                        n_recurrent: int = 5) -> Genome:
    """Random valid genome: every listed cell kind appears round-robin."""
    genome = Genome()
    for i in range(7):
        genome.nodes[i] = new_node(i, "input", "simple", 0.0)
    genome.nodes[7] = new_node(
        7, "output", "simple", 1.0, weight_fn=lambda: rng.uniform(-0.5, 0.5)
    )
    hidden = []
    nid = 8
    for k in range(n_hidden):
        cell = cells[k % len(cells)]
        depth = float(rng.uniform(0.05, 0.95))
        genome.nodes[nid] = new_node(
            nid, "hidden", cell, depth, weight_fn=lambda: rng.uniform(-0.5, 0.5)
        )
        hidden.append(nid)
        nid += 1
    innovation = 0
    for i in range(7):
        genome.edges[innovation] = EdgeGene(innovation, i, 7, float(rng.uniform(-0.5, 0.5)))
        innovation += 1
    all_ids = list(genome.nodes)
    for h in hidden:
        depth = genome.nodes[h].depth
        sources = [n for n in all_ids if genome.nodes[n].depth < depth]
        targets = [n for n in all_ids if genome.nodes[n].depth > depth]
        genome.edges[innovation] = EdgeGene(
            innovation, int(rng.choice(sources)), h, float(rng.uniform(-0.5, 0.5))
        )
        innovation += 1
        genome.edges[innovation] = EdgeGene(
            innovation, h, int(rng.choice(targets)), float(rng.uniform(-0.5, 0.5))
        )
        innovation += 1
    non_inputs = [n for n in all_ids if genome.nodes[n].kind != "input"]
    for _ in range(n_recurrent):
        genome.recurrent_edges[innovation] = RecurrentEdgeGene(
            innovation,
            int(rng.choice(all_ids)),
            int(rng.choice(non_inputs)),
            float(rng.uniform(-0.5, 0.5)),
            time_skip=int(rng.integers(1, 11)),
        )
        innovation += 1
    validate_genome(genome)
    return genome


def reference_forward(genome: Genome, X: np.ndarray) -> np.ndarray:
    """Straightforward per-timestep interpreter over the genome graph.

    Written independently of the compiled engine: plain dict/list bookkeeping,
    math-module scalar functions, no flattening.
    """
    nodes = sorted(
        (n for n in genome.nodes.values() if n.enabled),
        key=lambda n: (n.depth, n.node_id),
    )
    input_ids = [n.node_id for n in genome.input_nodes()]
    slot = {nid: k for k, nid in enumerate(input_ids)}
    out_id = genome.output_node().node_id

    def effective(e):
        return (
            e.enabled
            and genome.nodes[e.source].enabled
            and genome.nodes[e.target].enabled
        )

    in_ff = {n.node_id: [] for n in nodes}
    in_rec = {n.node_id: [] for n in nodes}
    for e in sorted(genome.edges.values(), key=lambda e: e.innovation):
        if effective(e):
            in_ff[e.target].append(e)
    for e in sorted(genome.recurrent_edges.values(), key=lambda e: e.innovation):
        if effective(e):
            in_rec[e.target].append(e)

    def sigmoid(x):
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        ex = math.exp(x)
        return ex / (1.0 + ex)

    history: dict[int, list[float]] = {n.node_id: [] for n in nodes}
    cell_state: dict[int, list[float]] = {n.node_id: [] for n in nodes}
    T = X.shape[0]
    outputs = []
    for t in range(T):
        for node in nodes:
            nid = node.node_id
            if node.kind == "input":
                history[nid].append(float(X[t, slot[nid]]))
                continue
            s = 0.0
            for e in in_ff[nid]:
                s += e.weight * history[e.source][t]
            for e in in_rec[nid]:
                tt = t - e.time_skip
                if tt >= 0:
                    s += e.weight * history[e.source][tt]
            p = node.params
            h_prev = history[nid][t - 1] if t > 0 else 0.0
            if node.kind == "output":
                a = s + p["bias"]
            elif node.cell == "simple":
                a = math.tanh(s + p["bias"])
            elif node.cell == "lstm":
                c_prev = cell_state[nid][t - 1] if t > 0 else 0.0
                ig = sigmoid(p["wi"] * s + p["ui"] * h_prev + p["bi"])
                fg = sigmoid(p["wf"] * s + p["uf"] * h_prev + p["bf"])
                og = sigmoid(p["wo"] * s + p["uo"] * h_prev + p["bo"])
                gg = math.tanh(p["wg"] * s + p["ug"] * h_prev + p["bg"])
                c = fg * c_prev + ig * gg
                cell_state[nid].append(c)
                a = og * math.tanh(c)
            elif node.cell == "gru":
                zg = sigmoid(p["wz"] * s + p["uz"] * h_prev + p["bz"])
                rg = sigmoid(p["wr"] * s + p["ur"] * h_prev + p["br"])
                hc = math.tanh(p["wh"] * s + p["uh"] * (rg * h_prev) + p["bh"])
                a = (1.0 - zg) * h_prev + zg * hc
            elif node.cell == "mgu":
                fg = sigmoid(p["wf"] * s + p["uf"] * h_prev + p["bf"])
                hc = math.tanh(p["wh"] * s + p["uh"] * (fg * h_prev) + p["bh"])
                a = (1.0 - fg) * h_prev + fg * hc
            else:
                raise AssertionError(f"unknown cell {node.cell}")
            history[nid].append(a)
        outputs.append(history[out_id][t])
    return np.array(outputs)
