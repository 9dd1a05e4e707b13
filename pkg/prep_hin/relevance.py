"""Relevance scores of node pairs and the score-table file format."""

import enum
import logging
import typing as t
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Final

import numpy as np

from .config import PrepHyperparams
from .counting import PathCountTable
from .exceptions import (
    DirectionMismatchError,
    InputError,
    PairLookupError,
    ParameterError,
    ParseError,
    SchemaError,
)
from .formats import (
    Header,
    format_float,
    parse_float,
    read_artifact,
    write_artifact,
)
from .model import PrepParameters, pair_visibility, pattern_mixture

logger = logging.getLogger(__name__)

SCORES_KIND: Final = "scores"
SUBTASK_MARK: Final = "subtask"
REDUCTION_MODES: Final = ("pathcount", "pathsim-like", "joinsim-like")

Pair = tuple[str, str]


class Direction(str, enum.Enum):
    """Which end of a score column is the relevant one."""

    HIGHER = "higher"
    LOWER = "lower"


@dataclass(frozen=True, eq=False)
class CompositeScoreTable:
    """One finite score per nontrivial pair.

    Pairs absent from the table are trivial and rank below every scored
    pair. Ranking code goes through :meth:`relevance`, which always puts
    the most relevant pair at the top whatever the stored direction.
    """

    measure_id: str
    pairs: tuple[Pair, ...]
    scores: np.ndarray
    direction: Direction = Direction.HIGHER
    fingerprint: str = ""

    def __post_init__(self) -> None:
        scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "pairs", tuple(map(tuple, self.pairs)))
        if len(scores) != len(self.pairs):
            raise InputError(
                f"{len(scores)} scores for {len(self.pairs)} pairs"
            )
        if not np.all(np.isfinite(scores)):
            raise InputError(f"{self.measure_id}: scores must be finite")
        if len(self.index) != len(self.pairs):
            raise InputError(f"{self.measure_id}: duplicate pairs")

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def for_table(
        cls,
        pc: PathCountTable,
        scores: np.ndarray,
        measure_id: str,
        direction: Direction = Direction.HIGHER,
        fingerprint: str = "",
        rows: np.ndarray | None = None,
    ) -> "CompositeScoreTable":
        """Scores aligned with the pair rows of a count table."""
        selected = range(pc.num_pairs) if rows is None else rows
        pairs = tuple(pc.pair_ids(int(i)) for i in selected)
        return cls(measure_id, pairs, scores, direction, fingerprint)

    @cached_property
    def index(self) -> dict[frozenset[str], int]:
        return {frozenset(p): i for i, p in enumerate(self.pairs)}

    def score(self, u: str, v: str) -> float:
        try:
            return float(self.scores[self.index[frozenset((u, v))]])
        except KeyError:
            raise PairLookupError(
                f"({u}, {v}) has no score in {self.measure_id}"
            )

    def relevance(self) -> np.ndarray:
        """Scores oriented so that larger means more relevant."""
        if self.direction is Direction.LOWER:
            return -self.scores
        return np.array(self.scores)

    def relevance_of(self, pairs: t.Sequence[Pair]) -> np.ndarray:
        """Relevance of arbitrary pairs; unscored pairs get ``-inf``."""
        oriented = self.relevance()
        out = np.full(len(pairs), -np.inf)
        for i, (u, v) in enumerate(pairs):
            row = self.index.get(frozenset((u, v)))
            if row is not None:
                out[i] = oriented[row]
        return out

    def ranked(self) -> np.ndarray:
        """Row order from most to least relevant, ties in table order."""
        return np.argsort(-self.relevance(), kind="stable")

    def normalized(self) -> "CompositeScoreTable":
        """Equivalent table with the higher-is-more-relevant direction."""
        return CompositeScoreTable(
            self.measure_id,
            self.pairs,
            self.relevance(),
            Direction.HIGHER,
            self.fingerprint,
        )


def common_direction(tables: t.Iterable[CompositeScoreTable]) -> Direction:
    directions = {table.direction for table in tables}
    if len(directions) > 1:
        raise DirectionMismatchError(
            "score tables mix higher- and lower-is-more-relevant directions"
        )
    return directions.pop() if directions else Direction.HIGHER


def _pair_row(pc: PathCountTable, s: int | Pair) -> int:
    if isinstance(s, tuple):
        return pc.row_of(*s)
    if not 0 <= int(s) < pc.num_pairs:
        raise PairLookupError(f"pair row {s} out of range")
    return int(s)


def prep_scores(
    pc: PathCountTable,
    p: PrepParameters,
    h: PrepHyperparams,
    measure_id: str = "prep",
    fingerprint: str = "",
) -> CompositeScoreTable:
    """PReP relevance of every nontrivial pair.

    ``r(s) = sum_t eta_t P_st / (rho_u rho_v psi_st)
    + (1 - beta) sum_k log phi_sk``; a larger value means the observed
    paths are less likely under the background model, i.e. the pair is
    more relevant.
    """
    tau = pair_visibility(pc, p)
    psi = pattern_mixture(p)
    weighted = p.eta[np.newaxis, :] * pc.counts / (tau[:, np.newaxis] * psi)
    first = weighted.sum(axis=1)
    synergy = (1.0 - h.beta) * np.log(p.phi).sum(axis=1)
    return CompositeScoreTable.for_table(
        pc, first + synergy, measure_id, Direction.HIGHER, fingerprint
    )


def prep_score(
    pc: PathCountTable,
    p: PrepParameters,
    h: PrepHyperparams,
    s: int | Pair,
) -> float:
    """PReP relevance of one pair, by row index or by node ids."""
    row = _pair_row(pc, s)
    u, v = pc.pairs[row]
    tau = p.rho[u] * p.rho[v]
    psi = p.phi[row] @ p.theta
    first = float((p.eta * pc.counts[row] / (tau * psi)).sum())
    return first + (1.0 - h.beta) * float(np.log(p.phi[row]).sum())


def _normalizers(pc: PathCountTable, mode: str) -> np.ndarray:
    """kappa_st for the reductions that normalise by cycle counts."""
    if mode == "pathcount":
        return np.ones_like(pc.counts)
    asymmetric = [
        name for name, sym in zip(pc.metapath_ids, pc.symmetric) if not sym
    ]
    if asymmetric:
        raise SchemaError(
            f"{mode} needs symmetric meta-paths; not symmetric: {asymmetric}"
        )
    cu = pc.cycles[pc.pairs[:, 0]]
    cv = pc.cycles[pc.pairs[:, 1]]
    if mode == "pathsim-like":
        return (cu + cv) / 2.0
    if mode == "joinsim-like":
        return np.sqrt(cu * cv)
    raise ParameterError(f"unknown reduction mode {mode!r}")


def reduction_score(
    pc: PathCountTable,
    mode: str,
    weights: t.Sequence[float] | np.ndarray,
) -> CompositeScoreTable:
    """Score ``sum_t w_t P_st / kappa_st`` of a heuristic parameter choice.

    ``pathcount`` keeps kappa at one, ``pathsim-like`` uses the arithmetic
    mean of the two cycle counts and ``joinsim-like`` their geometric
    mean. Terms with a zero normaliser are skipped.
    """
    if mode not in REDUCTION_MODES:
        raise ParameterError(f"unknown reduction mode {mode!r}")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (pc.num_metapaths,):
        raise ParameterError(
            f"{len(w)} weights for {pc.num_metapaths} meta-paths"
        )
    if not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise ParameterError("reduction weights must be positive")
    kappa = _normalizers(pc, mode)
    usable = kappa > 0
    skipped = (~usable) & (pc.counts > 0)
    if skipped.any():
        logger.warning(
            "%s: skipped %d terms with a zero cycle count",
            mode,
            int(skipped.sum()),
        )
    terms = np.divide(
        pc.counts * w[np.newaxis, :],
        kappa,
        out=np.zeros_like(pc.counts),
        where=usable,
    )
    return CompositeScoreTable.for_table(pc, terms.sum(axis=1), mode)


def write_scores(
    tables: CompositeScoreTable | t.Mapping[str, CompositeScoreTable],
    path: str | Path,
    header: Header,
) -> Path:
    """Rows ``u v score direction`` from most to least relevant.

    A mapping writes one ``# subtask`` block per entry, in mapping order.
    """
    header.kind = SCORES_KIND
    blocks = tables if isinstance(tables, t.Mapping) else {"": tables}
    common_direction(blocks.values())
    measures = sorted({table.measure_id for table in blocks.values()})
    header.add("measure", *measures)

    def rows() -> t.Iterator[t.Sequence[str] | str]:
        for name, table in blocks.items():
            if isinstance(tables, t.Mapping):
                yield f"# {SUBTASK_MARK}\t{name}"
            for i in table.ranked():
                u, v = table.pairs[i]
                yield (
                    u,
                    v,
                    format_float(table.scores[i]),
                    table.direction.value,
                )

    return write_artifact(path, header, rows())


def read_scores(
    path: str | Path,
) -> tuple[CompositeScoreTable | dict[str, CompositeScoreTable], Header]:
    """Inverse of :func:`write_scores`."""
    artifact = read_artifact(path, SCORES_KIND, marker_keys=(SUBTASK_MARK,))
    measures = artifact.header.get("measure") or ("unknown",)
    measure_id = measures[0]
    fingerprint = artifact.header.first("config") or ""

    starts = [
        (position, fields[1] if len(fields) > 1 else "")
        for position, fields in artifact.markers
        if fields[0] == SUBTASK_MARK
    ]
    known = {d.value for d in Direction}
    directions: set[str] = set()
    for record in artifact.records:
        if len(record.fields) != 4:
            raise ParseError(
                artifact.path, record.line_number, "expected 4 fields"
            )
        if record.fields[3] not in known:
            raise ParseError(
                artifact.path,
                record.line_number,
                f"bad direction {record.fields[3]!r}",
            )
        directions.add(record.fields[3])
    if len(directions) > 1:
        raise DirectionMismatchError(
            f"{artifact.path}: rows mix score directions"
        )
    direction = Direction(directions.pop()) if directions else Direction.HIGHER

    bounds = starts or [(0, "")]
    blocks: dict[str, CompositeScoreTable] = {}
    for i, (begin, name) in enumerate(bounds):
        end = (
            bounds[i + 1][0] if i + 1 < len(bounds) else len(artifact.records)
        )
        block = artifact.records[begin:end]
        pairs = tuple((r.fields[0], r.fields[1]) for r in block)
        scores = [
            parse_float(r.fields[2], artifact.path, r.line_number)
            for r in block
        ]
        blocks[name] = CompositeScoreTable(
            measure_id, pairs, np.asarray(scores), direction, fingerprint
        )
    if not starts:
        return blocks[""], artifact.header
    return blocks, artifact.header
