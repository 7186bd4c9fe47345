"""Genome persistence: a self-describing JSON text format, bit-exact on floats."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .genome import EdgeGene, Genome, NodeGene, RecurrentEdgeGene

FORMAT_NAME = "evofolio-genome"
FORMAT_VERSION = 1


def genome_to_dict(genome: Genome) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "genome_id": genome.genome_id,
        "island_of_origin": genome.island_of_origin,
        "fitness": genome.fitness,
        "lineage": {"operator": genome.lineage[0], "parents": list(genome.lineage[1])},
        "nodes": [
            {
                "node_id": n.node_id,
                "kind": n.kind,
                "cell": n.cell,
                "depth": n.depth,
                "enabled": n.enabled,
                "params": n.params,
            }
            for n in sorted(genome.nodes.values(), key=lambda n: n.node_id)
        ],
        "edges": [
            {
                "innovation": e.innovation,
                "source": e.source,
                "target": e.target,
                "weight": e.weight,
                "enabled": e.enabled,
            }
            for e in sorted(genome.edges.values(), key=lambda e: e.innovation)
        ],
        "recurrent_edges": [
            {
                "innovation": e.innovation,
                "source": e.source,
                "target": e.target,
                "weight": e.weight,
                "enabled": e.enabled,
                "time_skip": e.time_skip,
            }
            for e in sorted(genome.recurrent_edges.values(), key=lambda e: e.innovation)
        ],
    }


def genome_from_dict(data: dict) -> Genome:
    if data.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} document")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported genome format version {data.get('version')}")
    genome = Genome(
        genome_id=data["genome_id"],
        island_of_origin=data["island_of_origin"],
        fitness=data["fitness"],
        lineage=(data["lineage"]["operator"], tuple(data["lineage"]["parents"])),
    )
    for n in data["nodes"]:
        genome.nodes[n["node_id"]] = NodeGene(
            node_id=n["node_id"],
            kind=n["kind"],
            cell=n["cell"],
            depth=n["depth"],
            enabled=n["enabled"],
            params={k: float(v) for k, v in n["params"].items()},
        )
    for e in data["edges"]:
        genome.edges[e["innovation"]] = EdgeGene(
            innovation=e["innovation"],
            source=e["source"],
            target=e["target"],
            weight=e["weight"],
            enabled=e["enabled"],
        )
    for e in data["recurrent_edges"]:
        genome.recurrent_edges[e["innovation"]] = RecurrentEdgeGene(
            innovation=e["innovation"],
            source=e["source"],
            target=e["target"],
            weight=e["weight"],
            enabled=e["enabled"],
            time_skip=e["time_skip"],
        )
    return genome


def save_genome(genome: Genome, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(genome_to_dict(genome), indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_genome(path: str | Path) -> Genome:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return genome_from_dict(data)
