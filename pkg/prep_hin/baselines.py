"""Similarity baselines and the PReP ablations.

Every baseline combines per-meta-path scores linearly. The weights come
from a heuristic over the scores being combined: the reciprocal of their
mean or of their (population) standard deviation.
"""

import logging
import typing as t
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Final

import numpy as np
import scipy.sparse as sp

from .config import Heuristic, PrepHyperparams, SimRankConfig, WeightScope
from .counting import PathCountTable
from .exceptions import ParameterError, SchemaError
from .inference import PrepInference
from .model import PrepParameters
from .relevance import CompositeScoreTable, Direction, Pair

logger = logging.getLogger(__name__)

BASE_MEASURES: Final = ("pathcount", "pathsim", "joinsim", "simrank")
HEURISTICS: Final = ("mean", "sd")
ALL_PAIRS: Final = "all"


def _require_cycles(pc: PathCountTable, t_index: int, measure: str) -> None:
    if not pc.symmetric[t_index]:
        raise SchemaError(
            f"{measure} needs a symmetric meta-path; "
            f"{pc.metapath_ids[t_index]} is not"
        )


def base_scores(
    pc: PathCountTable,
    measure: str,
    t_index: int,
    rows: np.ndarray | None = None,
) -> np.ndarray:
    """Unweighted score of one meta-path for the selected pair rows.

    ``pathsim`` is ``2 P_uv / (P_uu + P_vv)`` and ``joinsim`` is
    ``P_uv / sqrt(P_uu P_vv)``. A zero denominator yields 0.
    """
    if not 0 <= t_index < pc.num_metapaths:
        raise ParameterError(f"meta-path index {t_index} out of range")
    selected = np.arange(pc.num_pairs) if rows is None else rows
    counts = pc.counts[selected, t_index]
    if measure == "pathcount":
        return counts.copy()
    if measure not in ("pathsim", "joinsim"):
        raise ParameterError(f"unknown base measure {measure!r}")

    _require_cycles(pc, t_index, measure)
    cu = pc.cycles[pc.pairs[selected, 0], t_index]
    cv = pc.cycles[pc.pairs[selected, 1], t_index]
    if measure == "pathsim":
        numerator, denominator = 2.0 * counts, cu + cv
    else:
        numerator, denominator = counts, np.sqrt(cu * cv)
    zero = denominator <= 0
    if np.any(zero & (counts > 0)):
        logger.warning(
            "%s on %s: %d pairs with a zero cycle count scored 0",
            measure,
            pc.metapath_ids[t_index],
            int(np.sum(zero & (counts > 0))),
        )
    return np.divide(
        numerator,
        denominator,
        out=np.zeros_like(counts),
        where=~zero,
    )


def _pair_adjacency(
    pc: PathCountTable, t_index: int, nodes: np.ndarray
) -> sp.csr_matrix:
    """Symmetric count matrix of one meta-path over ``nodes``, no loops."""
    n = len(nodes)
    position = np.full(pc.num_nodes, -1, dtype=np.int64)
    position[nodes] = np.arange(n)
    u = position[pc.pairs[:, 0]]
    v = position[pc.pairs[:, 1]]
    keep = (u >= 0) & (v >= 0) & (pc.counts[:, t_index] > 0)
    values = pc.counts[keep, t_index]
    return sp.coo_matrix(
        (
            np.concatenate((values, values)),
            (
                np.concatenate((u[keep], v[keep])),
                np.concatenate((v[keep], u[keep])),
            ),
        ),
        shape=(n, n),
    ).tocsr()


def simrank_matrix(
    pc: PathCountTable,
    t_index: int,
    cfg: SimRankConfig | None = None,
    nodes: np.ndarray | None = None,
) -> tuple[np.ndarray, list[float]]:
    """SimRank fixed point ``S = max(C A^T S A, I)`` for one meta-path.

    ``A`` is the column-normalised pair-count matrix over ``nodes`` (all
    nodes by default); all-zero columns stay zero. Returns the last
    iterate and the max-abs change of every sweep.
    """
    cfg = cfg or SimRankConfig()
    nodes = np.arange(pc.num_nodes) if nodes is None else np.asarray(nodes)
    adjacency = _pair_adjacency(pc, t_index, nodes)
    sums = np.asarray(adjacency.sum(axis=0)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    a = (adjacency @ sp.diags(scale)).tocsr()
    a_t = a.T.tocsr()

    identity = np.eye(len(nodes))
    sim = identity.copy()
    changes: list[float] = []
    for _ in range(cfg.max_iterations):
        left = np.asarray(a_t @ sim)
        # left @ A computed as (A^T left^T)^T to keep the sparse operand first
        propagated = np.asarray(a_t @ left.T).T
        updated = np.maximum(cfg.c * propagated, identity)
        changes.append(float(np.max(np.abs(updated - sim), initial=0.0)))
        sim = updated
        if changes[-1] < cfg.tolerance:
            break
    else:
        logger.warning(
            "SimRank on %s did not converge in %d sweeps (last change %g)",
            pc.metapath_ids[t_index],
            cfg.max_iterations,
            changes[-1],
        )
    return sim, changes


def simrank_metapath(
    pc: PathCountTable,
    t_index: int,
    cfg: SimRankConfig | None = None,
    rows: np.ndarray | None = None,
) -> np.ndarray:
    """SimRank score of the selected pair rows.

    The iteration runs over the nodes those rows touch.
    """
    selected = np.arange(pc.num_pairs) if rows is None else np.asarray(rows)
    if rows is None:
        nodes = np.arange(pc.num_nodes)
    else:
        nodes = np.unique(pc.pairs[selected].ravel())
    sim, _ = simrank_matrix(pc, t_index, cfg, nodes)
    position = np.full(pc.num_nodes, -1, dtype=np.int64)
    position[nodes] = np.arange(len(nodes))
    u = position[pc.pairs[selected, 0]]
    v = position[pc.pairs[selected, 1]]
    return sim[u, v]


def score_matrix(
    pc: PathCountTable,
    measure: str,
    rows: np.ndarray | None = None,
    simrank: SimRankConfig | None = None,
) -> np.ndarray:
    """Per-meta-path scores of the selected rows, one column per t."""
    if measure not in BASE_MEASURES:
        raise ParameterError(f"unknown base measure {measure!r}")
    columns = [
        simrank_metapath(pc, t_index, simrank, rows)
        if measure == "simrank"
        else base_scores(pc, measure, t_index, rows)
        for t_index in range(pc.num_metapaths)
    ]
    size = pc.num_pairs if rows is None else len(rows)
    return np.column_stack(columns) if columns else np.zeros((size, 0))


@dataclass(frozen=True, eq=False)
class BaselineWeights:
    w: np.ndarray
    heuristic: Heuristic

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
            raise ParameterError("baseline weights must be finite and >= 0")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


def heuristic_weights(
    scores: np.ndarray,
    heuristic: Heuristic | str,
    metapath_ids: t.Sequence[str] | None = None,
) -> BaselineWeights:
    """Reciprocal of the per-column mean or population sd of ``scores``.

    A column with zero mean (or zero sd) gets weight 0.
    """
    if heuristic not in HEURISTICS:
        raise ParameterError(f"unknown weight heuristic {heuristic!r}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ParameterError("weight heuristics need at least one scored pair")
    stat = scores.mean(axis=0) if heuristic == "mean" else scores.std(axis=0)
    degenerate = stat <= 0
    for t_index in np.flatnonzero(degenerate):
        name = (
            metapath_ids[t_index] if metapath_ids is not None else t_index + 1
        )
        logger.warning(
            "Zero %s for meta-path %s; its weight is set to 0", heuristic, name
        )
    w = np.divide(1.0, stat, out=np.zeros_like(stat), where=~degenerate)
    return BaselineWeights(w, t.cast(Heuristic, heuristic))


def composite(
    scores: np.ndarray,
    weights: BaselineWeights,
    pairs: t.Sequence[Pair],
    measure_id: str = "composite",
) -> CompositeScoreTable:
    """Linear combination ``sum_t w_t score_t(s)``; higher is better."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(pairs), len(weights.w)):
        raise ParameterError(
            f"{scores.shape} scores do not match {len(pairs)} pairs and "
            f"{len(weights.w)} weights"
        )
    return CompositeScoreTable(
        measure_id, tuple(pairs), scores @ weights.w, Direction.HIGHER
    )


def _rows_of(pc: PathCountTable, pairs: t.Sequence[Pair]) -> np.ndarray:
    """Rows of the nontrivial candidate pairs; trivial ones are dropped."""
    rows = []
    for u, v in pairs:
        if u in pc.node_index and v in pc.node_index:
            row = pc.pair_index.get((pc.node_index[u], pc.node_index[v]))
            if row is not None:
                rows.append(row)
    return np.asarray(sorted(set(rows)), dtype=np.int64)


def baseline_scores(
    pc: PathCountTable,
    measure: str,
    heuristic: Heuristic | str,
    subtasks: t.Mapping[str, t.Sequence[Pair]] | None = None,
    scope: WeightScope | str = "subtask",
    simrank: SimRankConfig | None = None,
    threads: int = 1,
) -> dict[str, CompositeScoreTable]:
    """Composite baseline scores, one table per sub-task.

    ``subtasks`` maps a sub-task id to its candidate pairs; without it a
    single table over every nontrivial pair is returned under
    ``ALL_PAIRS``. With ``scope="global"`` the weights come from the scores
    of all pairs, otherwise from each sub-task's own candidates.
    """
    if scope not in ("subtask", "global"):
        raise ParameterError(f"unknown weight scope {scope!r}")
    measure_id = f"{measure}-{heuristic}"
    if subtasks is None:
        scores = score_matrix(pc, measure, simrank=simrank)
        weights = heuristic_weights(scores, heuristic, pc.metapath_ids)
        pairs = [pc.pair_ids(i) for i in range(pc.num_pairs)]
        return {ALL_PAIRS: composite(scores, weights, pairs, measure_id)}

    global_weights: BaselineWeights | None = None
    global_scores: np.ndarray | None = None
    if scope == "global":
        global_scores = score_matrix(pc, measure, simrank=simrank)
        global_weights = heuristic_weights(
            global_scores, heuristic, pc.metapath_ids
        )

    def job(item: tuple[str, t.Sequence[Pair]]) -> CompositeScoreTable:
        name, candidates = item
        rows = _rows_of(pc, candidates)
        if len(rows) == 0:
            logger.warning("Sub-task %s has no nontrivial pair", name)
            return CompositeScoreTable(
                measure_id, (), np.zeros(0), Direction.HIGHER
            )
        pairs = [pc.pair_ids(int(i)) for i in rows]
        if global_weights is not None and global_scores is not None:
            return composite(
                global_scores[rows], global_weights, pairs, measure_id
            )
        scores = score_matrix(pc, measure, rows, simrank)
        weights = heuristic_weights(scores, heuristic, pc.metapath_ids)
        return composite(scores, weights, pairs, measure_id)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        tables = list(pool.map(job, subtasks.items()))
    logger.info(
        "Scored %d sub-tasks with %s (%s weights)",
        len(tables),
        measure_id,
        scope,
    )
    return dict(zip(subtasks, tables))


def prep_ablation(
    pc: PathCountTable, h: PrepHyperparams, variant: str
) -> PrepParameters:
    """Fit with one block frozen: no-nv, no-ps or no-cs."""
    if variant not in ("no-nv", "no-ps", "no-cs"):
        raise ParameterError(f"unknown ablation {variant!r}")
    return PrepInference(pc, h, variant=variant).run().params
