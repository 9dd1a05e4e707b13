"""Path counting along meta-paths and the observed-count table."""

import dataclasses
import logging
import typing as t
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Final

import numpy as np
import scipy.sparse as sp

from .exceptions import InputError, PairLookupError, ParseError, SchemaError
from .formats import (
    Header,
    format_float,
    parse_float,
    read_artifact,
    write_artifact,
)
from .graph import HeterogeneousGraph, MetaPath

logger = logging.getLogger(__name__)

COUNTS_KIND: Final = "counts"


@dataclass(frozen=True, eq=False)
class PathCountTable:
    """Observed path counts P over nontrivial pairs and meta-paths.

    ``pairs`` holds indices into ``node_ids``; row ``i`` of ``counts`` is
    the count vector of pair ``i``. ``cycles[z, t]`` is the number of
    instances of meta-path ``t`` that start and end at node ``z``.
    """

    node_ids: tuple[str, ...]
    pairs: np.ndarray
    counts: np.ndarray
    cycles: np.ndarray
    metapath_ids: tuple[str, ...]
    symmetric: tuple[bool, ...]

    def __post_init__(self) -> None:
        n, s = len(self.node_ids), len(self.pairs)
        num_t = len(self.metapath_ids)
        if self.pairs.shape != (s, 2):
            raise InputError("pairs must be an |S| x 2 index array")
        if self.counts.shape != (s, num_t):
            raise InputError(
                f"counts has shape {self.counts.shape}, expected {(s, num_t)}"
            )
        if self.cycles.shape != (n, num_t):
            raise InputError(
                f"cycles has shape {self.cycles.shape}, expected {(n, num_t)}"
            )
        if len(self.symmetric) != num_t:
            raise InputError("one symmetric flag per meta-path is required")
        if not (np.all(np.isfinite(self.counts)) and np.all(self.counts >= 0)):
            raise InputError("path counts must be finite and nonnegative")
        if not (np.all(np.isfinite(self.cycles)) and np.all(self.cycles >= 0)):
            raise InputError("cycle counts must be finite and nonnegative")
        if s:
            if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
                raise InputError("a pair must join two distinct nodes")
            if self.pairs.min() < 0 or self.pairs.max() >= n:
                raise InputError("pair index outside the node list")
            trivial = np.flatnonzero(self.counts.sum(axis=1) <= 0)
            if len(trivial):
                raise InputError(
                    f"pair {self.pair_ids(int(trivial[0]))} has no path "
                    "instance under any meta-path"
                )

    @classmethod
    def from_rows(
        cls,
        rows: t.Iterable[tuple[str, str, t.Sequence[float]]],
        metapath_ids: t.Sequence[str] | None = None,
        node_ids: t.Sequence[str] | None = None,
        cycles: t.Mapping[str, t.Sequence[float]] | None = None,
        symmetric: t.Sequence[bool] | None = None,
    ) -> "PathCountTable":
        """Build a table from ``(u, v, counts)`` rows keyed by node id."""
        row_list = [(u, v, list(c)) for u, v, c in rows]
        num_t = (
            len(metapath_ids)
            if metapath_ids is not None
            else len(row_list[0][2]) if row_list else 0
        )
        if metapath_ids is None:
            metapath_ids = [f"m{t + 1}" for t in range(num_t)]
        if node_ids is None:
            seen: dict[str, None] = {}
            for u, v, _ in row_list:
                seen.setdefault(u)
                seen.setdefault(v)
            for z in cycles or {}:
                seen.setdefault(z)
            node_ids = list(seen)
        index = {z: i for i, z in enumerate(node_ids)}
        for u, v, _ in row_list:
            for z in (u, v):
                if z not in index:
                    raise InputError(f"pair node {z!r} missing from node ids")
        pairs = np.asarray(
            [(index[u], index[v]) for u, v, _ in row_list], dtype=np.int64
        ).reshape(-1, 2)
        counts = np.asarray(
            [c for _, _, c in row_list], dtype=np.float64
        ).reshape(-1, num_t)
        cycle_arr = np.zeros((len(node_ids), num_t))
        for z, values in (cycles or {}).items():
            cycle_arr[index[z]] = values
        flags = tuple(symmetric) if symmetric is not None else (True,) * num_t
        return cls(
            tuple(node_ids),
            pairs,
            counts,
            cycle_arr,
            tuple(metapath_ids),
            flags,
        )

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    @property
    def num_metapaths(self) -> int:
        return len(self.metapath_ids)

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {z: i for i, z in enumerate(self.node_ids)}

    @cached_property
    def pair_index(self) -> dict[tuple[int, int], int]:
        """Row of each pair, reachable in either orientation."""
        index: dict[tuple[int, int], int] = {}
        for i, (u, v) in enumerate(self.pairs.tolist()):
            index[(u, v)] = i
            index[(v, u)] = i
        return index

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """|V| x |S| 0/1 matrix linking each node to its pairs."""
        s = self.num_pairs
        rows = np.concatenate((self.pairs[:, 0], self.pairs[:, 1]))
        cols = np.concatenate((np.arange(s), np.arange(s)))
        return sp.csr_matrix(
            (np.ones(2 * s), (rows, cols)), shape=(self.num_nodes, s)
        )

    @cached_property
    def degrees(self) -> np.ndarray:
        """Number of pairs each node belongs to."""
        return np.asarray(self.incidence.sum(axis=1)).ravel()

    def pair_ids(self, row: int) -> tuple[str, str]:
        u, v = self.pairs[row]
        return self.node_ids[u], self.node_ids[v]

    def row_of(self, u: str, v: str) -> int:
        try:
            return self.pair_index[(self.node_index[u], self.node_index[v])]
        except KeyError:
            raise PairLookupError(f"({u}, {v}) is not a nontrivial pair")

    def row(self, u: str, v: str) -> np.ndarray:
        return self.counts[self.row_of(u, v)]

    def rows_of_node(self, z: str) -> np.ndarray:
        """Rows of every pair that contains ``z``."""
        try:
            i = self.node_index[z]
        except KeyError:
            raise PairLookupError(f"unknown node {z!r}")
        return np.sort(self.incidence[i].indices)

    def cycle(self, z: str) -> np.ndarray:
        return self.cycles[self.node_index[z]]

    def select(self, rows: t.Sequence[int] | np.ndarray) -> "PathCountTable":
        """Sub-table with the given pair rows and the same node universe."""
        rows = np.asarray(rows, dtype=np.int64)
        return PathCountTable(
            self.node_ids,
            self.pairs[rows],
            self.counts[rows],
            self.cycles,
            self.metapath_ids,
            self.symmetric,
        )


def node_totals(pc: PathCountTable) -> np.ndarray:
    """Per-node total path count, aligned with ``pc.node_ids``."""
    if pc.num_pairs == 0:
        raise InputError("path count table is empty")
    return np.asarray(pc.incidence @ pc.counts.sum(axis=1)).ravel()


def node_total_counts(pc: PathCountTable) -> dict[str, float]:
    """Total path count of each node over every pair containing it."""
    totals = node_totals(pc)
    return {z: float(x) for z, x in zip(pc.node_ids, totals)}


def _endpoint_universe(
    g: HeterogeneousGraph, metapaths: t.Sequence[MetaPath]
) -> tuple[str, str, np.ndarray]:
    starts = {mp.start_type for mp in metapaths}
    ends = {mp.end_type for mp in metapaths}
    if len(starts) != 1 or len(ends) != 1:
        raise SchemaError(
            "all meta-paths must share the same start and end node types"
        )
    start, end = starts.pop(), ends.pop()
    if start == end:
        universe = g.nodes_of_type(start)
    else:
        universe = np.sort(
            np.concatenate((g.nodes_of_type(start), g.nodes_of_type(end)))
        )
    return start, end, universe


def metapath_matrix(g: HeterogeneousGraph, mp: MetaPath) -> sp.csr_matrix:
    """Chained product of the typed blocks, start type x end type."""
    product: sp.csr_matrix | None = None
    for step in mp.steps():
        block_step, backwards = g.resolve_step(step)
        block = g.adjacency(*block_step)
        if backwards:
            block = block.T.tocsr()
        product = block if product is None else (product @ block).tocsr()
    assert product is not None
    product.sum_duplicates()
    return product


def _count_one(
    g: HeterogeneousGraph, mp: MetaPath, start: str, end: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    matrix = metapath_matrix(g, mp).tocoo()
    rows = g.nodes_of_type(start)[matrix.row]
    cols = g.nodes_of_type(end)[matrix.col]
    values = matrix.data
    if start == end:
        diag = np.zeros(len(g.nodes_of_type(start)))
        if mp.symmetric:
            on_diag = matrix.row == matrix.col
            diag[matrix.row[on_diag]] = values[on_diag]
        # same-type endpoints: keep the u -> v direction with u first
        keep = (rows < cols) & (values > 0)
    else:
        diag = np.zeros(0)
        keep = values > 0
    logger.debug(
        "Meta-path %s: %d instances over %d pairs",
        mp.name,
        int(values[keep].sum()),
        int(keep.sum()),
    )
    return rows[keep], cols[keep], values[keep], diag


def count_paths(
    g: HeterogeneousGraph,
    metapaths: t.Sequence[MetaPath],
    threads: int = 1,
) -> PathCountTable:
    """Count path instances per nontrivial pair and meta-path."""
    if not metapaths:
        raise SchemaError("at least one meta-path is required")
    resolved: list[MetaPath] = []
    for mp in metapaths:
        mp.check(g)
        if mp.symmetric and not mp.symmetric_in(g):
            logger.warning(
                "Meta-path %s reads the same reversed but walks a directed "
                "relation; counting it as asymmetric",
                mp.name,
            )
            mp = dataclasses.replace(mp, symmetric=False)
        resolved.append(mp)
    metapaths = resolved
    start, end, universe = _endpoint_universe(g, metapaths)
    n = len(universe)
    position = np.full(g.num_nodes, -1, dtype=np.int64)
    position[universe] = np.arange(n)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(
            pool.map(lambda mp: _count_one(g, mp, start, end), metapaths)
        )

    keys = [position[r] * n + position[c] for r, c, _, _ in results]
    all_keys = np.unique(np.concatenate(keys))
    counts = np.zeros((len(all_keys), len(metapaths)))
    cycles = np.zeros((n, len(metapaths)))
    for t_index, (key, (_, _, values, diag)) in enumerate(zip(keys, results)):
        counts[np.searchsorted(all_keys, key), t_index] = values
        if len(diag):
            cycles[position[g.nodes_of_type(start)], t_index] = diag
    pairs = np.stack((all_keys // n, all_keys % n), axis=1).astype(np.int64)

    table = PathCountTable(
        tuple(g.node_ids[i] for i in universe),
        pairs,
        counts,
        cycles,
        tuple(mp.name for mp in metapaths),
        tuple(mp.symmetric for mp in metapaths),
    )
    logger.info(
        "Counted %d meta-paths over %d nodes: %d nontrivial pairs",
        table.num_metapaths,
        table.num_nodes,
        table.num_pairs,
    )
    return table


def write_count_table(
    pc: PathCountTable, path: str | Path, header: Header
) -> Path:
    """Export rows ``u v t count`` sorted by (u, v, t) in node order.

    Cycle counts are rows with ``u == v``. ``t`` is 1-based.
    """
    header.kind = COUNTS_KIND
    for z in pc.node_ids:
        header.add("node", z)
    for t_index, name in enumerate(pc.metapath_ids):
        flag = "symmetric" if pc.symmetric[t_index] else "asymmetric"
        header.add("metapath", t_index + 1, name, flag)

    entries: list[tuple[int, int, int, float]] = []
    s_idx, t_idx = np.nonzero(pc.counts)
    for s, t_index in zip(s_idx.tolist(), t_idx.tolist()):
        u, v = pc.pairs[s].tolist()
        entries.append((u, v, t_index, float(pc.counts[s, t_index])))
    z_idx, t_idx = np.nonzero(pc.cycles)
    for z, t_index in zip(z_idx.tolist(), t_idx.tolist()):
        entries.append((z, z, t_index, float(pc.cycles[z, t_index])))
    entries.sort(key=lambda e: e[:3])

    rows = (
        (pc.node_ids[u], pc.node_ids[v], t_index + 1, format_float(value))
        for u, v, t_index, value in entries
    )
    return write_artifact(path, header, rows)


def read_count_table(path: str | Path) -> tuple[PathCountTable, Header]:
    artifact = read_artifact(path, COUNTS_KIND)
    header = artifact.header
    node_ids = [values[0] for values in header.get_all("node")]
    declared = header.get_all("metapath")
    metapath_ids = [values[1] for values in declared]
    symmetric = [values[2] == "symmetric" for values in declared]
    index = {z: i for i, z in enumerate(node_ids)}
    num_t = len(metapath_ids)

    pair_rows: dict[tuple[int, int], int] = {}
    values_by_row: list[np.ndarray] = []
    pair_list: list[tuple[int, int]] = []
    cycles = np.zeros((len(node_ids), num_t))
    for record in artifact.records:
        if len(record.fields) != 4:
            raise ParseError(
                artifact.path, record.line_number, "expected 4 fields"
            )
        u_id, v_id, t_text, value_text = record.fields
        if u_id not in index or v_id not in index:
            raise ParseError(
                artifact.path, record.line_number, "node missing from header"
            )
        try:
            t_index = int(t_text) - 1
        except ValueError:
            raise ParseError(
                artifact.path, record.line_number, "bad meta-path index"
            )
        if not 0 <= t_index < num_t:
            raise ParseError(
                artifact.path, record.line_number, "meta-path out of range"
            )
        value = parse_float(value_text, artifact.path, record.line_number)
        u, v = index[u_id], index[v_id]
        if u == v:
            cycles[u, t_index] = value
            continue
        if (u, v) not in pair_rows:
            pair_rows[(u, v)] = len(pair_list)
            pair_list.append((u, v))
            values_by_row.append(np.zeros(num_t))
        values_by_row[pair_rows[(u, v)]][t_index] = value

    table = PathCountTable(
        tuple(node_ids),
        np.asarray(pair_list, dtype=np.int64).reshape(-1, 2),
        np.asarray(values_by_row, dtype=np.float64).reshape(-1, num_t),
        cycles,
        tuple(metapath_ids),
        tuple(symmetric),
    )
    return table, header
