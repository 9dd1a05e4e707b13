"""Shared fixtures: the toy person network and random count tables."""

import itertools
import os
from pathlib import Path

import numpy as np
import pytest

from prep_hin.config import PrepHyperparams
from prep_hin.counting import PathCountTable, count_paths
from prep_hin.graph import HeterogeneousGraph, MetaPath, load_graph
from prep_hin.model import PrepParameters
from prep_hin.projection import project_rows

TOY_NODES = [
    ("Mordo", "person"),
    ("Wong", "person"),
    ("Stephen", "person"),
    ("UCB", "university"),
    ("UIUC", "university"),
    ("Berkeley", "city"),
    ("CS", "major"),
]
TOY_EDGES = [
    ("Mordo", "UCB", "attends"),
    ("Mordo", "UIUC", "attends"),
    ("Wong", "UCB", "attends"),
    ("Stephen", "UIUC", "attends"),
    ("Mordo", "Berkeley", "livesIn"),
    ("Wong", "Berkeley", "livesIn"),
    ("Mordo", "CS", "majorsIn"),
    ("Stephen", "CS", "majorsIn"),
]
TOY_METAPATHS = [
    "person:attends:university:attends:person",
    "person:livesIn:city:livesIn:person",
    "person:majorsIn:major:majorsIn:person",
]

RUN_SLOW_TESTS = bool(os.getenv("RUN_SLOW_TESTS"))


def write_toy_files(directory: Path) -> dict[str, Path]:
    """Toy network as node, edge and meta-path files."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "nodes": directory / "nodes.tsv",
        "edges": directory / "edges.tsv",
        "metapaths": directory / "metapaths.tsv",
    }
    paths["nodes"].write_text(
        "".join(f"{n}\t{k}\n" for n, k in TOY_NODES), encoding="utf-8"
    )
    paths["edges"].write_text(
        "".join(f"{u}\t{v}\t{r}\n" for u, v, r in TOY_EDGES),
        encoding="utf-8",
    )
    paths["metapaths"].write_text(
        "".join(f"{m}\n" for m in TOY_METAPATHS), encoding="utf-8"
    )
    return paths


@pytest.fixture
def toy_files(tmp_path: Path) -> dict[str, Path]:
    return write_toy_files(tmp_path / "toy")


@pytest.fixture
def toy_graph() -> HeterogeneousGraph:
    return HeterogeneousGraph(TOY_NODES, TOY_EDGES)


@pytest.fixture
def toy_loaded_graph(toy_files: dict[str, Path]) -> HeterogeneousGraph:
    return load_graph(toy_files["nodes"], toy_files["edges"])


@pytest.fixture
def toy_table(toy_graph: HeterogeneousGraph) -> PathCountTable:
    return count_paths(toy_graph, [MetaPath.parse(m) for m in TOY_METAPATHS])


def random_table(
    rng: np.random.Generator,
    num_nodes: int = 8,
    num_pairs: int = 12,
    num_t: int = 3,
) -> PathCountTable:
    """Random table with positive counts and incident-sum cycle counts."""
    candidates = list(itertools.combinations(range(num_nodes), 2))
    chosen = rng.choice(len(candidates), size=num_pairs, replace=False)
    pairs = np.asarray([candidates[i] for i in sorted(chosen)])
    counts = rng.gamma(1.0, 2.0, size=(num_pairs, num_t))
    # sparsify, keeping every row nontrivial
    mask = rng.random((num_pairs, num_t)) < 0.3
    mask[np.arange(num_pairs), rng.integers(0, num_t, num_pairs)] = False
    counts[mask] = 0.0
    cycles = np.zeros((num_nodes, num_t))
    np.add.at(cycles, pairs[:, 0], counts)
    np.add.at(cycles, pairs[:, 1], counts)
    return PathCountTable(
        tuple(f"n{i}" for i in range(num_nodes)),
        pairs,
        counts,
        cycles,
        tuple(f"m{t + 1}" for t in range(num_t)),
        (True,) * num_t,
    )


def random_parameters(
    rng: np.random.Generator,
    pc: PathCountTable,
    k: int = 2,
    low: float = 0.1,
    high: float = 10.0,
) -> PrepParameters:
    """Parameters in [low, high] with phi and theta on the simplex."""
    return PrepParameters(
        eta=rng.uniform(low, high, pc.num_metapaths),
        rho=rng.uniform(low, high, pc.num_nodes),
        phi=project_rows(rng.uniform(low, high, (pc.num_pairs, k)), 1e-3),
        theta=project_rows(rng.uniform(low, high, (k, pc.num_metapaths)), 1e-3),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def hyper() -> PrepHyperparams:
    return PrepHyperparams(k=2, alpha=2.0, beta=0.5, delta=1e-6)
