"""Graph-encoded recurrent network genomes: node, edge, and recurrent-edge genes."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

NODE_KINDS = ("input", "hidden", "output")
CELL_KINDS = ("simple", "lstm", "gru", "mgu")

N_INPUTS = 7
N_OUTPUTS = 1

# Scalar gate parameters per memory cell: w* multiplies the node's input sum,
# u* multiplies the node's own previous output, b* is the gate bias.
LSTM_PARAM_KEYS = ("wi", "ui", "bi", "wf", "uf", "bf", "wo", "uo", "bo", "wg", "ug", "bg")
GRU_PARAM_KEYS = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")
MGU_PARAM_KEYS = ("wf", "uf", "bf", "wh", "uh", "bh")

MIN_TIME_SKIP = 1
MAX_TIME_SKIP = 10


class GenomeError(ValueError):
    """A genome violated one of its structural invariants."""


def param_keys(kind: str, cell: str) -> tuple[str, ...]:
    """Canonical parameter-key order for a node of the given kind and cell."""
    if kind == "input":
        return ()
    if kind == "output" or cell == "simple":
        return ("bias",)
    if cell == "lstm":
        return LSTM_PARAM_KEYS
    if cell == "gru":
        return GRU_PARAM_KEYS
    if cell == "mgu":
        return MGU_PARAM_KEYS
    raise GenomeError(f"unknown cell kind {cell!r}")


@dataclass
class NodeGene:
    node_id: int
    kind: str
    cell: str
    depth: float
    enabled: bool = True
    params: dict[str, float] = field(default_factory=dict)


@dataclass
class EdgeGene:
    innovation: int
    source: int
    target: int
    weight: float
    enabled: bool = True


@dataclass
class RecurrentEdgeGene:
    innovation: int
    source: int
    target: int
    weight: float
    enabled: bool = True
    time_skip: int = 1


@dataclass
class Genome:
    """A graph-encoded RNN: nodes plus feed-forward and recurrent connections.

    Feed-forward edges must go from shallower to strictly deeper nodes, so the
    same-timestep graph is acyclic by construction.  Recurrent edges carry a
    time skip and may point anywhere.  Fitness is the validation MSE (lower is
    better); ``None`` means not yet evaluated.
    """

    nodes: dict[int, NodeGene] = field(default_factory=dict)
    edges: dict[int, EdgeGene] = field(default_factory=dict)
    recurrent_edges: dict[int, RecurrentEdgeGene] = field(default_factory=dict)
    island_of_origin: int = 0
    fitness: float | None = None
    genome_id: int = -1
    lineage: tuple = ("seed", ())

    def input_nodes(self) -> list[NodeGene]:
        return sorted(
            (n for n in self.nodes.values() if n.kind == "input"),
            key=lambda n: n.node_id,
        )

    def output_node(self) -> NodeGene:
        outs = [n for n in self.nodes.values() if n.kind == "output"]
        if len(outs) != 1:
            raise GenomeError(f"expected exactly 1 output node, found {len(outs)}")
        return outs[0]

    def hidden_nodes(self, enabled_only: bool = False) -> list[NodeGene]:
        return sorted(
            (
                n
                for n in self.nodes.values()
                if n.kind == "hidden" and (n.enabled or not enabled_only)
            ),
            key=lambda n: n.node_id,
        )

    def n_weights(self) -> int:
        """Count of trainable scalars in the enabled part of the genome."""
        total = 0
        for e in self.edges.values():
            if self._edge_effective(e):
                total += 1
        for e in self.recurrent_edges.values():
            if self._edge_effective(e):
                total += 1
        for n in self.nodes.values():
            if n.enabled:
                total += len(n.params)
        return total

    def _edge_effective(self, e) -> bool:
        return (
            e.enabled
            and self.nodes[e.source].enabled
            and self.nodes[e.target].enabled
        )


def copy_genome(genome: Genome) -> Genome:
    return copy.deepcopy(genome)


def new_node(node_id: int, kind: str, cell: str, depth: float,
             weight_fn=None) -> NodeGene:
    """Create a node gene with a full parameter dict.

    ``weight_fn`` supplies each fresh parameter value; defaults to zeros.
    """
    keys = param_keys(kind, cell)
    if weight_fn is None:
        params = {k: 0.0 for k in keys}
    else:
        params = {k: float(weight_fn()) for k in keys}
    return NodeGene(node_id=node_id, kind=kind, cell=cell, depth=depth, params=params)


def validate_genome(genome: Genome, n_inputs: int = N_INPUTS,
                    n_outputs: int = N_OUTPUTS,
                    max_time_skip: int = MAX_TIME_SKIP) -> None:
    """Raise GenomeError if any structural invariant is violated."""
    inputs = [n for n in genome.nodes.values() if n.kind == "input"]
    outputs = [n for n in genome.nodes.values() if n.kind == "output"]
    if len(inputs) != n_inputs:
        raise GenomeError(f"expected {n_inputs} input nodes, found {len(inputs)}")
    if len(outputs) != n_outputs:
        raise GenomeError(f"expected {n_outputs} output nodes, found {len(outputs)}")

    seen_ids = set()
    for n in genome.nodes.values():
        if n.node_id in seen_ids:
            raise GenomeError(f"duplicate node id {n.node_id}")
        seen_ids.add(n.node_id)
        if n.kind not in NODE_KINDS:
            raise GenomeError(f"node {n.node_id}: unknown kind {n.kind!r}")
        if n.kind == "input":
            if n.depth != 0.0:
                raise GenomeError(f"input node {n.node_id} must have depth 0")
            if not n.enabled:
                raise GenomeError(f"input node {n.node_id} must stay enabled")
        elif n.kind == "output":
            if n.depth != 1.0:
                raise GenomeError(f"output node {n.node_id} must have depth 1")
            if not n.enabled:
                raise GenomeError(f"output node {n.node_id} must stay enabled")
        else:
            if not (0.0 < n.depth < 1.0):
                raise GenomeError(
                    f"hidden node {n.node_id} depth {n.depth} outside (0, 1)"
                )
            if n.cell not in CELL_KINDS:
                raise GenomeError(f"node {n.node_id}: unknown cell {n.cell!r}")
        expected = param_keys(n.kind, n.cell)
        if tuple(n.params.keys()) != expected:
            raise GenomeError(
                f"node {n.node_id}: params {tuple(n.params)} != expected {expected}"
            )

    innovations = set()
    for e in genome.edges.values():
        if e.innovation in innovations:
            raise GenomeError(f"duplicate innovation id {e.innovation}")
        innovations.add(e.innovation)
        if e.source not in genome.nodes or e.target not in genome.nodes:
            raise GenomeError(f"edge {e.innovation} references a missing node")
        d_src = genome.nodes[e.source].depth
        d_tgt = genome.nodes[e.target].depth
        if not d_src < d_tgt:
            raise GenomeError(
                f"edge {e.innovation}: depth({e.source})={d_src} not < "
                f"depth({e.target})={d_tgt}"
            )
    for e in genome.recurrent_edges.values():
        if e.innovation in innovations:
            raise GenomeError(f"duplicate innovation id {e.innovation}")
        innovations.add(e.innovation)
        if e.source not in genome.nodes or e.target not in genome.nodes:
            raise GenomeError(f"recurrent edge {e.innovation} references a missing node")
        if genome.nodes[e.target].kind == "input":
            raise GenomeError(
                f"recurrent edge {e.innovation} targets input node {e.target}"
            )
        if not (MIN_TIME_SKIP <= e.time_skip <= max_time_skip):
            raise GenomeError(
                f"recurrent edge {e.innovation}: time_skip {e.time_skip} "
                f"outside [{MIN_TIME_SKIP}, {max_time_skip}]"
            )
