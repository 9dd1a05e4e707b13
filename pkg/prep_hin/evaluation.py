"""Sub-task construction, ranking metrics and their averaging schemes."""

import itertools
import logging
import math
import typing as t
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import rankdata
from sklearn.metrics import average_precision_score

from .config import Metric, Scheme
from .exceptions import InputError, MetricError, ParseError
from .formats import iter_tsv
from .graph import HeterogeneousGraph
from .relevance import CompositeScoreTable, Pair, common_direction

logger = logging.getLogger(__name__)

DEFAULT_SUBTASK: Final = "all"
SCHEMES: Final = ("uni", "rel", "tot")
NAME_SEP: Final = "#"
SPLIT_SUFFIXES: Final = ("/1", "/2")


@dataclass(frozen=True, eq=False)
class SubTask:
    """Candidate pairs of one evaluation unit and their 0/1 labels."""

    id: str
    pairs: tuple[Pair, ...]
    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=bool).reshape(-1)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "pairs", tuple(map(tuple, self.pairs)))
        if len(labels) != len(self.pairs):
            raise InputError(
                f"sub-task {self.id}: {len(labels)} labels for "
                f"{len(self.pairs)} pairs"
            )
        if len({frozenset(p) for p in self.pairs}) != len(self.pairs):
            raise InputError(f"sub-task {self.id}: duplicate candidate pairs")
        if not labels.any():
            raise InputError(f"sub-task {self.id} has no relevant pair")

    @property
    def relevant_count(self) -> int:
        return int(self.labels.sum())

    @property
    def total_count(self) -> int:
        return len(self.pairs)


def _check_inputs(
    scores: t.Sequence[float] | np.ndarray,
    labels: t.Sequence[bool] | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if len(s) != len(y):
        raise MetricError(f"{len(s)} scores for {len(y)} labels")
    if np.any(np.isnan(s)):
        raise MetricError("scores contain NaN")
    return s, y


def _finite_floor(scores: np.ndarray) -> np.ndarray:
    """Replace -inf (unscored pairs) by a value below every real score."""
    finite = scores[np.isfinite(scores)]
    bottom = float(finite.min()) - 1.0 if len(finite) else 0.0
    return np.where(np.isneginf(scores), bottom, scores)


def roc_auc(
    scores: t.Sequence[float] | np.ndarray,
    labels: t.Sequence[bool] | np.ndarray,
) -> float:
    """Mann-Whitney AUC; ties count one half."""
    s, y = _check_inputs(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC-AUC needs both relevant and irrelevant pairs")
    ranks = rankdata(_finite_floor(s), method="average")
    u_stat = float(ranks[y].sum()) - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def auprc(
    scores: t.Sequence[float] | np.ndarray,
    labels: t.Sequence[bool] | np.ndarray,
) -> float:
    """Area under the precision-recall curve, tied scores as one step."""
    s, y = _check_inputs(scores, labels)
    if not y.any():
        raise MetricError("AUPRC needs at least one relevant pair")
    if y.all():
        return 1.0
    return float(average_precision_score(y, _finite_floor(s)))


def reciprocal_rank(
    scores: t.Sequence[float] | np.ndarray,
    labels: t.Sequence[bool] | np.ndarray,
) -> float:
    """1 / rank of the single relevant pair; ties share their mean rank."""
    s, y = _check_inputs(scores, labels)
    positives = int(y.sum())
    if positives != 1:
        raise MetricError(
            f"MRR needs exactly one relevant pair, got {positives}; "
            "use roc_auc or auprc instead"
        )
    ranks = rankdata(-_finite_floor(s), method="average")
    return 1.0 / float(ranks[y][0])


def mrr(values: t.Sequence[float]) -> float:
    if not len(values):
        raise MetricError("MRR of no sub-tasks")
    return float(np.mean(values))


METRICS: Final[dict[str, t.Callable[[np.ndarray, np.ndarray], float]]] = {
    "roc_auc": roc_auc,
    "auprc": auprc,
    "mrr": reciprocal_rank,
}


def aggregate(
    values: t.Sequence[float],
    relevant_counts: t.Sequence[int],
    total_counts: t.Sequence[int],
    scheme: Scheme | str,
) -> float:
    """Uniform, relevant-count or total-count weighted average."""
    if not len(values):
        raise MetricError("cannot average over zero sub-tasks")
    if scheme == "uni":
        return float(np.mean(values))
    if scheme == "rel":
        return float(np.average(values, weights=relevant_counts))
    if scheme == "tot":
        return float(np.average(values, weights=total_counts))
    raise MetricError(f"unknown averaging scheme {scheme!r}")


# Sub-task builders


def build_ego_network_tasks(
    members: t.Mapping[str, t.Sequence[str]],
    relevant: t.Iterable[Pair],
) -> list[SubTask]:
    """One sub-task per ego: every pair of its non-ego members."""
    truth = {frozenset(pair) for pair in relevant}
    tasks: list[SubTask] = []
    for ego, group in members.items():
        others = list(dict.fromkeys(z for z in group if z != ego))
        pairs = list(itertools.combinations(others, 2))
        labels = [frozenset(pair) in truth for pair in pairs]
        if not any(labels):
            logger.warning("Ego network %s has no relevant pair; skipped", ego)
            continue
        tasks.append(SubTask(ego, tuple(pairs), np.asarray(labels)))
    return tasks


@dataclass(frozen=True)
class Mention:
    mention_id: str
    entity_id: str
    name: str


def load_mentions(path: str | Path) -> list[Mention]:
    """``mention<TAB>entity[<TAB>name]``; the name defaults to the entity
    id up to its last ``#``."""
    mentions: list[Mention] = []
    seen: set[str] = set()
    for record in iter_tsv(path):
        fields = [f.strip() for f in record.fields]
        if len(fields) not in (2, 3) or not all(fields):
            raise ParseError(
                str(path), record.line_number, "expected 2 or 3 fields"
            )
        if fields[0] in seen:
            raise ParseError(
                str(path), record.line_number, f"duplicate mention {fields[0]}"
            )
        seen.add(fields[0])
        if len(fields) == 3:
            name = fields[2]
        else:
            name = fields[1].rsplit(NAME_SEP, 1)[0]
        mentions.append(Mention(fields[0], fields[1], name))
    return mentions


def build_entity_resolution_tasks(
    mentions: t.Sequence[Mention],
) -> tuple[list[SubTask], dict[str, str]]:
    """Split the largest entity of every author name into two nodes.

    Returns the sub-tasks and the mention -> author node assignment. The
    split keeps mention order: the first ceil(n/2) mentions go to the
    first half. Equal sizes resolve to the lowest entity id.
    """
    by_name: dict[str, dict[str, list[str]]] = defaultdict(dict)
    for m in mentions:
        by_name[m.name].setdefault(m.entity_id, []).append(m.mention_id)

    tasks: list[SubTask] = []
    assignment: dict[str, str] = {}
    for name, entities in by_name.items():
        largest = min(entities, key=lambda e: (-len(entities[e]), e))
        size = len(entities[largest])
        for entity, group in entities.items():
            for mention in group:
                assignment[mention] = entity
        if size < 2:
            logger.warning(
                "Name %s has no entity with two mentions; skipped", name
            )
            continue
        first, second = (largest + suffix for suffix in SPLIT_SUFFIXES)
        half = math.ceil(size / 2)
        for i, mention in enumerate(entities[largest]):
            assignment[mention] = first if i < half else second

        nodes = [e for e in entities if e != largest] + [first, second]
        pairs = list(itertools.combinations(nodes, 2))
        split = frozenset((first, second))
        labels = [frozenset(pair) == split for pair in pairs]
        tasks.append(SubTask(name, tuple(pairs), np.asarray(labels)))
    logger.info(
        "Built %d entity-resolution sub-tasks from %d names",
        len(tasks),
        len(by_name),
    )
    return tasks, assignment


def remap_mentions(
    graph: HeterogeneousGraph, assignment: t.Mapping[str, str]
) -> HeterogeneousGraph:
    """Merge mention nodes into the author nodes they were assigned to."""
    return graph.relabel(assignment)


def load_labeled_tasks(path: str | Path) -> list[SubTask]:
    """``u<TAB>v<TAB>{0|1}[<TAB>subtask]`` rows grouped by sub-task."""
    grouped: dict[str, list[tuple[Pair, bool]]] = defaultdict(list)
    for record in iter_tsv(path):
        fields = [f.strip() for f in record.fields]
        if len(fields) not in (3, 4):
            raise ParseError(
                str(path), record.line_number, "expected 3 or 4 fields"
            )
        if fields[2] not in ("0", "1"):
            raise ParseError(
                str(path), record.line_number, f"bad label {fields[2]!r}"
            )
        name = fields[3] if len(fields) == 4 else DEFAULT_SUBTASK
        grouped[name].append(((fields[0], fields[1]), fields[2] == "1"))

    tasks: list[SubTask] = []
    for name, rows in grouped.items():
        if not any(label for _, label in rows):
            logger.warning("Sub-task %s has no relevant pair; skipped", name)
            continue
        tasks.append(
            SubTask(
                name,
                tuple(pair for pair, _ in rows),
                np.asarray([label for _, label in rows]),
            )
        )
    return tasks


# Reports


class SubTaskResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    relevant: int
    total: int
    metrics: dict[str, float] = Field(default_factory=dict)


class EvaluationReport(BaseModel):
    """Per-sub-task metrics and their uni./rel./tot. averages."""

    model_config = ConfigDict(frozen=True)

    measure_id: str
    fingerprint: str = ""
    seed: int | None = None
    subtasks: list[SubTaskResult] = Field(default_factory=list)
    averages: dict[str, dict[str, float]] = Field(default_factory=dict)
    excluded: dict[str, list[str]] = Field(default_factory=dict)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def summary_lines(self) -> list[str]:
        """Tab-separated ``metric scheme value`` rows."""
        return [
            f"{metric}\t{scheme}\t{value!r}"
            for metric, by_scheme in self.averages.items()
            for scheme, value in by_scheme.items()
        ]


def _table_for(
    scores: CompositeScoreTable | t.Mapping[str, CompositeScoreTable],
    task: SubTask,
) -> CompositeScoreTable:
    if isinstance(scores, CompositeScoreTable):
        return scores
    try:
        return scores[task.id]
    except KeyError:
        raise InputError(f"no score table for sub-task {task.id}")


def evaluate(
    scores: CompositeScoreTable | t.Mapping[str, CompositeScoreTable],
    subtasks: t.Sequence[SubTask],
    metrics: t.Sequence[Metric | str] = ("roc_auc", "auprc"),
    schemes: t.Sequence[Scheme | str] = SCHEMES,
    threads: int = 1,
    seed: int | None = None,
    fingerprint: str = "",
) -> EvaluationReport:
    """Score every sub-task and average per scheme.

    Candidate pairs missing from a score table rank below all scored ones.
    A sub-task on which a metric is undefined is left out of that metric's
    averages.
    """
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise InputError(f"unknown metrics {unknown}")
    bad_schemes = [s for s in schemes if s not in SCHEMES]
    if bad_schemes:
        raise InputError(f"unknown averaging schemes {bad_schemes}")
    if not subtasks:
        raise InputError("no sub-tasks to evaluate")
    tables = (
        [scores]
        if isinstance(scores, CompositeScoreTable)
        else list(scores.values())
    )
    common_direction(tables)

    def job(task: SubTask) -> tuple[SubTaskResult, dict[str, str]]:
        table = _table_for(scores, task)
        relevance = table.relevance_of(task.pairs)
        values: dict[str, float] = {}
        failures: dict[str, str] = {}
        for metric in metrics:
            try:
                values[metric] = METRICS[metric](relevance, task.labels)
            except MetricError as exc:
                failures[metric] = str(exc)
        result = SubTaskResult(
            id=task.id,
            relevant=task.relevant_count,
            total=task.total_count,
            metrics=values,
        )
        return result, failures

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(job, subtasks))

    excluded: dict[str, list[str]] = {}
    for result, failures in outcomes:
        for metric, reason in failures.items():
            logger.warning(
                "Sub-task %s excluded from %s: %s", result.id, metric, reason
            )
            excluded.setdefault(metric, []).append(result.id)

    results = [result for result, _ in outcomes]
    averages: dict[str, dict[str, float]] = {}
    for metric in metrics:
        scored = [r for r in results if metric in r.metrics]
        if not scored:
            logger.warning("No sub-task could be scored with %s", metric)
            continue
        averages[metric] = {
            scheme: aggregate(
                [r.metrics[metric] for r in scored],
                [r.relevant for r in scored],
                [r.total for r in scored],
                scheme,
            )
            for scheme in schemes
        }

    measure_id = tables[0].measure_id if tables else "unknown"
    logger.info(
        "Evaluated %s on %d sub-tasks: %s",
        measure_id,
        len(results),
        {m: round(v.get("uni", float("nan")), 4) for m, v in averages.items()},
    )
    return EvaluationReport(
        measure_id=measure_id,
        fingerprint=fingerprint,
        seed=seed,
        subtasks=results,
        averages=averages,
        excluded=excluded,
    )
