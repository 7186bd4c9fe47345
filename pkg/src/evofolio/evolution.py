"""Island-model steady-state evolution of recurrent network genomes.

One coordinator owns the population; workers only train and score genomes.
New structure gets fresh innovation ids and uniform random weights, while
everything untouched by an operator keeps the parent's trained weights.
"""

from __future__ import annotations

from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from .genome import (
    CELL_KINDS,
    Genome,
    GenomeError,
    EdgeGene,
    RecurrentEdgeGene,
    copy_genome,
    new_node,
    validate_genome,
)
from .market_data import StockDataset
from .training import TrainConfig, bptt_train, evaluate

MUTATION_KINDS = (
    "clone",
    "add_edge",
    "add_recurrent_edge",
    "enable_edge",
    "disable_edge",
    "split_edge",
    "add_node",
    "enable_node",
    "disable_node",
    "split_node",
    "merge_node",
)

N_INPUTS = 7
N_OUTPUTS = 1


@dataclass
class EvoConfig:
    n_islands: int = 10
    capacity: int = 10
    budget: int = 2000
    mutation_rate: float = 0.7
    crossover_rate: float = 0.3
    inter_island_fraction: float = 1.0 / 3.0
    mutation_weights: dict[str, float] | None = None
    time_skip_max: int = 10
    repopulation_period: int = 400
    new_weight_low: float = -0.5
    new_weight_high: float = 0.5

    def validate(self) -> None:
        if self.n_islands < 1 or self.capacity < 1:
            raise ValueError("need at least one island and capacity >= 1")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if abs(self.mutation_rate + self.crossover_rate - 1.0) > 1e-12:
            raise ValueError("mutation_rate + crossover_rate must sum to 1")
        if not (0.0 <= self.inter_island_fraction <= 1.0):
            raise ValueError("inter_island_fraction must lie in [0, 1]")
        if self.time_skip_max < 1:
            raise ValueError("time_skip_max must be >= 1")
        if self.mutation_weights is not None:
            unknown = set(self.mutation_weights) - set(MUTATION_KINDS)
            if unknown:
                raise ValueError(f"unknown mutation kinds {sorted(unknown)}")

    def kind_probabilities(self) -> tuple[list[str], np.ndarray]:
        weights = self.mutation_weights or {}
        kinds = list(MUTATION_KINDS)
        p = np.array([weights.get(k, 1.0) for k in kinds], dtype=np.float64)
        return kinds, p / p.sum()


@dataclass
class Island:
    island_id: int
    members: list[Genome] = field(default_factory=list)
    best_fitness_seen: float = float("inf")
    evaluations_since_improvement: int = 0
    _insert_seq: int = 0

    def sort_key(self, genome: Genome):
        fitness = genome.fitness if genome.fitness is not None else float("inf")
        return (fitness, -getattr(genome, "_seq", 0))

    def worst_member(self) -> Genome:
        return max(self.members, key=self.sort_key)

    def best_member(self) -> Genome | None:
        evaluated = [g for g in self.members if g.fitness is not None]
        if not evaluated:
            return None
        return min(evaluated, key=lambda g: (g.fitness, g.genome_id))

    def best_fitness(self) -> float:
        best = self.best_member()
        return best.fitness if best is not None else float("inf")


@dataclass
class LogRecord:
    evaluation_index: int
    island_id: int
    operator: str
    parent_ids: tuple[int, ...]
    fitness: float
    global_best_fitness: float


class Population:
    """Fixed set of islands plus the global gene- and genome-id counters."""

    def __init__(self, config: EvoConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.islands = [Island(island_id=i) for i in range(config.n_islands)]
        self.evaluations_total = 0
        self.global_best: Genome | None = None
        # canonical input/output genes shared by every seed so crossover
        # aligns across islands
        self._io_nodes = {i: new_node(i, "input", "simple", 0.0) for i in range(N_INPUTS)}
        self._io_nodes[N_INPUTS] = new_node(N_INPUTS, "output", "simple", 1.0)
        self._seed_edge_pairs = [(i, N_INPUTS) for i in range(N_INPUTS)]
        self.node_counter = N_INPUTS + N_OUTPUTS
        self.innovation_counter = len(self._seed_edge_pairs)
        self.genome_counter = 0

    def next_innovation(self) -> int:
        value = self.innovation_counter
        self.innovation_counter += 1
        return value

    def next_node_id(self) -> int:
        value = self.node_counter
        self.node_counter += 1
        return value

    def next_genome_id(self) -> int:
        value = self.genome_counter
        self.genome_counter += 1
        return value

    def new_weight(self) -> float:
        return float(
            self.rng.uniform(self.config.new_weight_low, self.config.new_weight_high)
        )

    def island(self, island_id: int) -> Island:
        if not (0 <= island_id < len(self.islands)):
            raise ValueError(f"unknown island id {island_id}")
        return self.islands[island_id]


def seed_genome(population: Population, island_id: int = 0) -> Genome:
    """Minimal genome: all input->output edges enabled, no hidden structure."""
    genome = Genome(
        nodes={nid: copy_node(n) for nid, n in population._io_nodes.items()},
        island_of_origin=island_id,
        genome_id=population.next_genome_id(),
        lineage=("seed", ()),
    )
    genome.nodes[N_INPUTS].params["bias"] = population.new_weight()
    for innovation, (src, tgt) in enumerate(population._seed_edge_pairs):
        genome.edges[innovation] = EdgeGene(
            innovation, src, tgt, population.new_weight()
        )
    return genome


def copy_node(node):
    import copy

    return copy.deepcopy(node)


# -- mutation -----------------------------------------------------------------


def mutate(parent: Genome, kind: str, population: Population) -> Genome:
    """Apply one structural mutation; infeasible kinds fall back to clone.

    The child keeps the parent's weights on all untouched genes.  The genome's
    lineage records the operator actually applied.
    """
    if kind not in MUTATION_KINDS:
        raise ValueError(f"unknown mutation kind {kind!r}")
    child = copy_genome(parent)
    child.genome_id = population.next_genome_id()
    child.fitness = None
    applied = kind if kind == "clone" else _apply_mutation(child, kind, population)
    child.lineage = (f"mutate:{applied}", (parent.genome_id,))
    validate_genome(child, max_time_skip=population.config.time_skip_max)
    return child


def _enabled_nodes(genome: Genome) -> list:
    return sorted(
        (n for n in genome.nodes.values() if n.enabled), key=lambda n: n.node_id
    )


def _all_edges(genome: Genome) -> list:
    edges = sorted(genome.edges.values(), key=lambda e: e.innovation)
    rec = sorted(genome.recurrent_edges.values(), key=lambda e: e.innovation)
    return edges + rec


def _choice(rng: np.random.Generator, items: list):
    return items[int(rng.integers(0, len(items)))]


def _output_in_degree(genome: Genome) -> int:
    out_id = genome.output_node().node_id
    count = 0
    for e in _all_edges(genome):
        if e.target == out_id and genome._edge_effective(e):
            count += 1
    return count


def _apply_mutation(child: Genome, kind: str, population: Population) -> str:
    rng = population.rng
    cfg = population.config

    if kind == "add_edge":
        nodes = _enabled_nodes(child)
        existing = {(e.source, e.target) for e in child.edges.values()}
        candidates = [
            (u.node_id, v.node_id)
            for u in nodes
            for v in nodes
            if u.depth < v.depth and (u.node_id, v.node_id) not in existing
        ]
        if not candidates:
            return "clone"
        src, tgt = _choice(rng, candidates)
        innovation = population.next_innovation()
        child.edges[innovation] = EdgeGene(innovation, src, tgt, population.new_weight())
        return kind

    if kind == "add_recurrent_edge":
        nodes = _enabled_nodes(child)
        existing = {(e.source, e.target) for e in child.recurrent_edges.values()}
        candidates = [
            (u.node_id, v.node_id)
            for u in nodes
            for v in nodes
            if v.kind != "input" and (u.node_id, v.node_id) not in existing
        ]
        if not candidates:
            return "clone"
        src, tgt = _choice(rng, candidates)
        innovation = population.next_innovation()
        child.recurrent_edges[innovation] = RecurrentEdgeGene(
            innovation, src, tgt, population.new_weight(),
            time_skip=int(rng.integers(1, cfg.time_skip_max + 1)),
        )
        return kind

    if kind == "enable_edge":
        disabled = [e for e in _all_edges(child) if not e.enabled]
        if not disabled:
            return "clone"
        _choice(rng, disabled).enabled = True
        return kind

    if kind == "disable_edge":
        out_id = child.output_node().node_id
        last_feed = _output_in_degree(child) == 1
        candidates = [
            e
            for e in _all_edges(child)
            if e.enabled and not (last_feed and e.target == out_id and child._edge_effective(e))
        ]
        if not candidates:
            return "clone"
        _choice(rng, candidates).enabled = False
        return kind

    if kind == "split_edge":
        enabled = [e for e in sorted(child.edges.values(), key=lambda e: e.innovation) if e.enabled]
        if not enabled:
            return "clone"
        edge = _choice(rng, enabled)
        d_src = child.nodes[edge.source].depth
        d_tgt = child.nodes[edge.target].depth
        depth = (d_src + d_tgt) / 2.0
        if not (d_src < depth < d_tgt):
            return "clone"
        edge.enabled = False
        cell = str(_choice(rng, list(CELL_KINDS)))
        node_id = population.next_node_id()
        child.nodes[node_id] = new_node(
            node_id, "hidden", cell, depth, weight_fn=population.new_weight
        )
        for src, tgt in ((edge.source, node_id), (node_id, edge.target)):
            innovation = population.next_innovation()
            child.edges[innovation] = EdgeGene(innovation, src, tgt, population.new_weight())
        return kind

    if kind == "add_node":
        depth = float(rng.uniform(0.0, 1.0))
        if not (0.0 < depth < 1.0):
            return "clone"
        nodes = _enabled_nodes(child)
        sources = [n for n in nodes if n.depth < depth]
        targets = [n for n in nodes if n.depth > depth]
        if not sources or not targets:
            return "clone"
        cell = str(_choice(rng, list(CELL_KINDS)))
        node_id = population.next_node_id()
        child.nodes[node_id] = new_node(
            node_id, "hidden", cell, depth, weight_fn=population.new_weight
        )
        k_in = min(int(rng.integers(1, 4)), len(sources))
        k_out = min(int(rng.integers(1, 4)), len(targets))
        picked_in = rng.choice(len(sources), size=k_in, replace=False)
        picked_out = rng.choice(len(targets), size=k_out, replace=False)
        for idx in sorted(int(i) for i in picked_in):
            innovation = population.next_innovation()
            child.edges[innovation] = EdgeGene(
                innovation, sources[idx].node_id, node_id, population.new_weight()
            )
        for idx in sorted(int(i) for i in picked_out):
            innovation = population.next_innovation()
            child.edges[innovation] = EdgeGene(
                innovation, node_id, targets[idx].node_id, population.new_weight()
            )
        return kind

    if kind == "enable_node":
        disabled = child.hidden_nodes()
        disabled = [n for n in disabled if not n.enabled]
        if not disabled:
            return "clone"
        _choice(rng, disabled).enabled = True
        return kind

    if kind == "disable_node":
        enabled = child.hidden_nodes(enabled_only=True)
        if not enabled:
            return "clone"
        _choice(rng, enabled).enabled = False
        return kind

    if kind == "split_node":
        enabled = child.hidden_nodes(enabled_only=True)
        if not enabled:
            return "clone"
        node = _choice(rng, enabled)
        in_edges = [
            e for e in sorted(child.edges.values(), key=lambda e: e.innovation)
            if e.target == node.node_id and child._edge_effective(e)
        ]
        out_edges = [
            e for e in sorted(child.edges.values(), key=lambda e: e.innovation)
            if e.source == node.node_id and child._edge_effective(e)
        ]
        node.enabled = False
        halves = []
        for _ in range(2):
            node_id = population.next_node_id()
            child.nodes[node_id] = new_node(
                node_id, "hidden", node.cell, node.depth, weight_fn=population.new_weight
            )
            halves.append(node_id)
        if len(in_edges) == 1:
            assignment = [(in_edges[0], halves[0]), (in_edges[0], halves[1])]
        else:
            order = list(rng.permutation(len(in_edges)))
            assignment = [
                (in_edges[int(j)], halves[pos % 2]) for pos, j in enumerate(order)
            ]
        for edge, half in assignment:
            innovation = population.next_innovation()
            child.edges[innovation] = EdgeGene(
                innovation, edge.source, half, population.new_weight()
            )
        for edge in out_edges:
            for half in halves:
                innovation = population.next_innovation()
                child.edges[innovation] = EdgeGene(
                    innovation, half, edge.target, population.new_weight()
                )
        return kind

    if kind == "merge_node":
        enabled = child.hidden_nodes(enabled_only=True)
        if len(enabled) < 2:
            return "clone"
        picked = rng.choice(len(enabled), size=2, replace=False)
        n1, n2 = enabled[int(picked[0])], enabled[int(picked[1])]
        depth = (n1.depth + n2.depth) / 2.0
        cell = str(_choice(rng, [n1.cell, n2.cell]))
        sources = set()
        targets = set()
        for e in sorted(child.edges.values(), key=lambda e: e.innovation):
            if not child._edge_effective(e):
                continue
            if e.target in (n1.node_id, n2.node_id) and child.nodes[e.source].depth < depth:
                sources.add(e.source)
            if e.source in (n1.node_id, n2.node_id) and child.nodes[e.target].depth > depth:
                targets.add(e.target)
        n1.enabled = False
        n2.enabled = False
        node_id = population.next_node_id()
        child.nodes[node_id] = new_node(
            node_id, "hidden", cell, depth, weight_fn=population.new_weight
        )
        for src in sorted(sources):
            innovation = population.next_innovation()
            child.edges[innovation] = EdgeGene(innovation, src, node_id, population.new_weight())
        for tgt in sorted(targets):
            innovation = population.next_innovation()
            child.edges[innovation] = EdgeGene(innovation, node_id, tgt, population.new_weight())
        return kind

    raise ValueError(f"unknown mutation kind {kind!r}")


# -- crossover ----------------------------------------------------------------


def crossover(parent_a: Genome, parent_b: Genome, population: Population,
              inter_island: bool = False) -> Genome:
    """Union crossover aligned by gene id; shared genes take the fitter weights."""
    if parent_a.fitness is None or parent_b.fitness is None:
        raise ValueError("crossover requires evaluated parents")
    shared_nodes = set(parent_a.nodes) & set(parent_b.nodes)
    shared_edges = (set(parent_a.edges) & set(parent_b.edges)) | (
        set(parent_a.recurrent_edges) & set(parent_b.recurrent_edges)
    )
    if not shared_nodes and not shared_edges:
        raise ValueError("parents share no aligned genes")

    if parent_b.fitness < parent_a.fitness:
        fitter, other = parent_b, parent_a
    else:
        fitter, other = parent_a, parent_b

    child = copy_genome(fitter)
    for nid, node in other.nodes.items():
        if nid not in child.nodes:
            child.nodes[nid] = copy_node(node)
    for innovation, edge in other.edges.items():
        if innovation not in child.edges:
            child.edges[innovation] = EdgeGene(
                edge.innovation, edge.source, edge.target, edge.weight, edge.enabled
            )
    for innovation, edge in other.recurrent_edges.items():
        if innovation not in child.recurrent_edges:
            child.recurrent_edges[innovation] = RecurrentEdgeGene(
                edge.innovation, edge.source, edge.target, edge.weight,
                edge.enabled, edge.time_skip,
            )
    child.genome_id = population.next_genome_id()
    child.fitness = None
    child.island_of_origin = parent_a.island_of_origin
    op = "crossover:inter" if inter_island else "crossover:intra"
    child.lineage = (op, (parent_a.genome_id, parent_b.genome_id))
    validate_genome(child, max_time_skip=population.config.time_skip_max)
    return child


# -- insertion and repopulation -------------------------------------------------


def insert(population: Population, genome: Genome) -> bool:
    """Steady-state insert into the genome's island of origin.

    A full island rejects genomes strictly worse than its current worst
    member; otherwise the worst member is evicted.  Updates the global best
    and the island's stagnation counter.
    """
    if genome.fitness is None:
        raise ValueError("insert requires an evaluated genome")
    island = population.island(genome.island_of_origin)
    capacity = population.config.capacity

    island.evaluations_since_improvement += 1
    if len(island.members) >= capacity:
        worst = island.worst_member()
        worst_fitness = worst.fitness if worst.fitness is not None else float("inf")
        if genome.fitness > worst_fitness:
            return False

    genome._seq = island._insert_seq
    island._insert_seq += 1
    island.members.append(genome)
    while len(island.members) > capacity:
        island.members.remove(island.worst_member())

    if genome.fitness < island.best_fitness_seen:
        island.best_fitness_seen = genome.fitness
        island.evaluations_since_improvement = 0
    best = population.global_best
    if best is None or genome.fitness < best.fitness:
        population.global_best = copy_genome(genome)
    return True


def repopulate_worst_island(population: Population) -> Island:
    """Clear the island with the worst best-member fitness and refill it with
    one-mutation children of the global best.

    The island currently holding the global best is exempt; ties pick the
    lowest island id.  Refilled members are unevaluated placeholders that rank
    behind every evaluated genome.
    """
    best = population.global_best
    if best is None:
        raise ValueError("cannot repopulate before any genome was inserted")
    holder = None
    for island in population.islands:
        if any(g.genome_id == best.genome_id for g in island.members):
            holder = island.island_id
            break
    candidates = [i for i in population.islands if i.island_id != holder]
    if not candidates:
        # a single island holding the global best is exempt from repopulation
        return population.islands[0]
    worst = max(
        candidates,
        key=lambda i: (i.best_fitness(), -i.island_id),
    )

    kinds, probs = population.config.kind_probabilities()
    members = []
    for _ in range(population.config.capacity):
        kind = kinds[int(population.rng.choice(len(kinds), p=probs))]
        child = mutate(best, kind, population)
        child.island_of_origin = worst.island_id
        members.append(child)
    worst.members = members
    worst._insert_seq = 0
    worst.best_fitness_seen = float("inf")
    worst.evaluations_since_improvement = 0
    return worst


# -- the evolve loop ------------------------------------------------------------


def _generate_child(population: Population) -> tuple[Genome, str]:
    cfg = population.config
    rng = population.rng
    island = population.island(int(rng.integers(0, cfg.n_islands)))
    want_crossover = rng.random() >= cfg.mutation_rate
    if want_crossover:
        evaluated = [g for g in island.members if g.fitness is not None]
        inter = rng.random() < cfg.inter_island_fraction
        if inter and len(population.islands) > 1 and evaluated:
            others = [
                i for i in population.islands
                if i.island_id != island.island_id and i.best_member() is not None
            ]
            if others:
                other = others[int(rng.integers(0, len(others)))]
                parent_a = evaluated[int(rng.integers(0, len(evaluated)))]
                child = crossover(parent_a, other.best_member(), population,
                                  inter_island=True)
                return child, child.lineage[0]
        if len(evaluated) >= 2:
            picked = rng.choice(len(evaluated), size=2, replace=False)
            child = crossover(
                evaluated[int(picked[0])], evaluated[int(picked[1])], population
            )
            return child, child.lineage[0]
        # not enough evaluated members: fall through to mutation
    kinds, probs = population.config.kind_probabilities()
    kind = kinds[int(rng.choice(len(kinds), p=probs))]
    parent = island.members[int(rng.integers(0, len(island.members)))]
    child = mutate(parent, kind, population)
    child.island_of_origin = island.island_id
    return child, child.lineage[0]


def evolve(dataset: StockDataset, config: EvoConfig, train_config: TrainConfig,
           workers: int = 1, seed: int = 0) -> tuple[Genome, list[LogRecord]]:
    """Run the coordinator loop until the evaluation budget is exhausted.

    Each island is first seeded with a trained minimal genome (these count
    toward the budget).  With one worker the run is fully deterministic for a
    fixed seed; with several, insertion order follows completion order.
    """
    config.validate()
    train_config.validate()
    population = Population(config, seed=seed)
    X_train, y_train = dataset.split_arrays("train")
    X_valid, y_valid = dataset.split_arrays("valid")
    log: list[LogRecord] = []

    def train_and_score(genome: Genome) -> Genome:
        trained, _ = bptt_train(genome, X_train, y_train, train_config)
        trained.fitness = evaluate(trained, X_valid, y_valid)
        trained.island_of_origin = genome.island_of_origin
        trained.genome_id = genome.genome_id
        trained.lineage = genome.lineage
        return trained

    def record(trained: Genome, operator: str, parents: tuple[int, ...]) -> None:
        population.evaluations_total += 1
        insert(population, trained)
        log.append(
            LogRecord(
                evaluation_index=population.evaluations_total,
                island_id=trained.island_of_origin,
                operator=operator,
                parent_ids=parents,
                fitness=trained.fitness,
                global_best_fitness=population.global_best.fitness,
            )
        )
        period = config.repopulation_period
        if period > 0 and population.evaluations_total % period == 0:
            repopulate_worst_island(population)

    for island in population.islands:
        seed_child = seed_genome(population, island_id=island.island_id)
        trained = train_and_score(seed_child)
        record(trained, "seed", ())

    if workers <= 1:
        while population.evaluations_total < config.budget:
            child, operator = _generate_child(population)
            parents = child.lineage[1]
            trained = train_and_score(child)
            record(trained, operator, parents)
    else:
        _evolve_parallel(population, config, train_and_score, record, workers)

    return copy_genome(population.global_best), log


def _evolve_parallel(population: Population, config: EvoConfig, train_and_score,
                     record, workers: int) -> None:
    inflight: dict = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        def submit_one():
            child, operator = _generate_child(population)
            future = pool.submit(train_and_score, child)
            inflight[future] = (child, operator, 0)

        while (
            population.evaluations_total + len(inflight) < config.budget
            and len(inflight) < workers
        ):
            submit_one()
        while inflight:
            done, _ = wait(list(inflight), return_when=FIRST_COMPLETED)
            for future in done:
                child, operator, retries = inflight.pop(future)
                error = future.exception()
                if error is not None:
                    if retries == 0:
                        retry = pool.submit(train_and_score, child)
                        inflight[retry] = (child, operator, 1)
                    else:
                        record_failure(child, operator, error)
                    continue
                record(future.result(), operator, child.lineage[1])
            while (
                population.evaluations_total + len(inflight) < config.budget
            ) and len(inflight) < workers:
                submit_one()


def record_failure(child: Genome, operator: str, error: BaseException) -> None:
    # a failed task is logged and skipped; the budget slot is refilled by the loop
    import logging

    logging.getLogger(__name__).warning(
        "evaluation of genome %s (%s) failed twice: %s", child.genome_id, operator, error
    )


def write_evolution_log(log: list[LogRecord], path) -> None:
    """Write the evolve log as line-delimited records with a fixed header."""
    import os
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["evaluation_index,island_id,operator,parent_ids,fitness,global_best_fitness"]
    for rec in log:
        parents = ";".join(str(p) for p in rec.parent_ids)
        lines.append(
            f"{rec.evaluation_index},{rec.island_id},{rec.operator},"
            f"{parents},{rec.fitness!r},{rec.global_best_fitness!r}"
        )
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)
