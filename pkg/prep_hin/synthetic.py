"""Synthetic path-count tables with planted relevant pairs.

Nodes are split into groups, each group being one evaluation sub-task
whose candidates are all of its internal pairs. Background pairs draw
their counts from the PReP generative model with a pair-level mixture
concentrated on few meta-paths. Planted pairs spread their mass over
every meta-path and have their expected counts multiplied by ``boost``.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import PrepHyperparams
from .counting import PathCountTable
from .evaluation import SubTask
from .exceptions import ParameterError
from .model import PrepParameters, sample_from_model

logger = logging.getLogger(__name__)


class PlantedConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_nodes: int = Field(default=500, ge=4)
    num_groups: int = Field(default=10, ge=1)
    num_metapaths: int = Field(default=3, ge=1)
    planted_fraction: float = Field(default=0.05, gt=0.0, lt=1.0)
    boost: float = Field(default=8.0, gt=1.0)
    alpha: float = Field(default=2.0, gt=0.0)
    concentration: float = Field(default=0.3, gt=0.0)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    table: PathCountTable
    subtasks: list[SubTask]
    truth: PrepParameters


def _cycle_counts(
    pairs: np.ndarray, counts: np.ndarray, num_nodes: int
) -> np.ndarray:
    """Per-node sum of incident pair counts, used as cycle counts."""
    cycles = np.zeros((num_nodes, counts.shape[1]))
    np.add.at(cycles, pairs[:, 0], counts)
    np.add.at(cycles, pairs[:, 1], counts)
    return cycles


def planted_instance(cfg: PlantedConfig | None = None) -> PlantedInstance:
    cfg = cfg or PlantedConfig()
    if cfg.num_nodes < 2 * cfg.num_groups:
        raise ParameterError("every group needs at least two nodes")
    rng = np.random.default_rng(cfg.seed)
    num_t = cfg.num_metapaths
    node_ids = tuple(f"n{i}" for i in range(cfg.num_nodes))

    groups = [
        np.sort(g)
        for g in np.array_split(rng.permutation(cfg.num_nodes), cfg.num_groups)
    ]
    pair_blocks: list[np.ndarray] = []
    planted_blocks: list[np.ndarray] = []
    for group in groups:
        pairs = np.asarray(list(itertools.combinations(group.tolist(), 2)))
        planted = np.zeros(len(pairs), dtype=bool)
        size = max(1, round(cfg.planted_fraction * len(pairs)))
        planted[rng.choice(len(pairs), size=size, replace=False)] = True
        pair_blocks.append(pairs)
        planted_blocks.append(planted)
    pairs = np.concatenate(pair_blocks)
    planted = np.concatenate(planted_blocks)

    spread = 0.1
    theta = (1.0 - spread) * np.eye(num_t) + spread / num_t
    phi = rng.dirichlet(np.full(num_t, cfg.concentration), size=len(pairs))
    phi[planted] = 1.0 / num_t
    truth = PrepParameters(
        eta=rng.uniform(0.5, 4.0, num_t),
        rho=rng.gamma(cfg.alpha, 1.0, cfg.num_nodes),
        phi=phi,
        theta=theta,
    )
    h = PrepHyperparams(k=num_t, alpha=cfg.alpha, seed=cfg.seed)
    sampled = sample_from_model(truth, h, pairs, node_ids)
    counts = np.array(sampled.counts)
    counts[planted] *= cfg.boost

    table = PathCountTable(
        node_ids,
        pairs,
        counts,
        _cycle_counts(pairs, counts, cfg.num_nodes),
        sampled.metapath_ids,
        sampled.symmetric,
    )
    subtasks = []
    offset = 0
    for j, block in enumerate(pair_blocks):
        rows = slice(offset, offset + len(block))
        subtasks.append(
            SubTask(
                f"g{j}",
                tuple((node_ids[u], node_ids[v]) for u, v in block),
                planted[rows],
            )
        )
        offset += len(block)
    logger.info(
        "Planted instance: %d nodes, %d pairs, %d planted, %d groups",
        cfg.num_nodes,
        len(pairs),
        int(planted.sum()),
        cfg.num_groups,
    )
    return PlantedInstance(table, subtasks, truth)
