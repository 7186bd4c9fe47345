"""Fixed two-layer memory-cell baselines built as genomes."""

from __future__ import annotations

import math

import numpy as np

from .genome import EdgeGene, Genome, RecurrentEdgeGene, new_node

BASELINE_CELLS = ("lstm", "gru", "mgu")


def build_layered(cell: str, n_inputs: int = 7, layer_width: int = 7,
                  layers: int = 2, rng: np.random.Generator | None = None) -> Genome:
    """Build a fully connected layered memory-cell network as a genome.

    ``layers`` hidden layers of ``layer_width`` cells sit at evenly spaced
    depths, fully connected input -> L1 -> ... -> output, with a time-skip-1
    recurrent self edge on every hidden cell.  Edge weights use Xavier uniform
    limits from the actual fan-in/fan-out; gate input weights use fan (2, 1);
    biases start at zero.
    """
    if cell not in BASELINE_CELLS:
        raise ValueError(f"unsupported cell kind {cell!r}; expected one of {BASELINE_CELLS}")
    if layers < 1 or layer_width < 1 or n_inputs < 1:
        raise ValueError("layers, layer_width and n_inputs must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)

    gate_limit = math.sqrt(6.0 / 3.0)

    def gate_weight():
        return rng.uniform(-gate_limit, gate_limit)

    genome = Genome()
    next_node = 0
    input_ids = []
    for _ in range(n_inputs):
        genome.nodes[next_node] = new_node(next_node, "input", "simple", 0.0)
        input_ids.append(next_node)
        next_node += 1

    layer_ids: list[list[int]] = []
    for layer in range(1, layers + 1):
        depth = layer / (layers + 1)
        ids = []
        for _ in range(layer_width):
            node = new_node(next_node, "hidden", cell, depth, weight_fn=gate_weight)
            for key in node.params:
                if key.startswith("b"):
                    node.params[key] = 0.0
            genome.nodes[next_node] = node
            ids.append(next_node)
            next_node += 1
        layer_ids.append(ids)

    out_id = next_node
    out_node = new_node(out_id, "output", "simple", 1.0)
    genome.nodes[out_id] = out_node

    layer_sources = [input_ids] + layer_ids
    layer_targets = layer_ids + [[out_id]]
    innovation = 0
    for sources, targets in zip(layer_sources, layer_targets):
        fan_in = len(sources)
        fan_out = len(targets)
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        for src in sources:
            for tgt in targets:
                genome.edges[innovation] = EdgeGene(
                    innovation, src, tgt, float(rng.uniform(-limit, limit))
                )
                innovation += 1

    self_limit = math.sqrt(6.0 / (n_inputs + layer_width))
    for ids in layer_ids:
        for node_id in ids:
            genome.recurrent_edges[innovation] = RecurrentEdgeGene(
                innovation, node_id, node_id,
                float(rng.uniform(-self_limit, self_limit)), time_skip=1,
            )
            innovation += 1

    genome.lineage = (f"layered:{cell}", ())
    return genome
