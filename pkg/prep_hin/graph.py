"""Typed graph model, meta-path declarations and their file loaders."""

import logging
import typing as t
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Final

import numpy as np
import scipy.sparse as sp

from .exceptions import GraphValidationError, ParseError, SchemaError
from .formats import HEADER_MARK, iter_tsv

logger = logging.getLogger(__name__)

STEP_SEP: Final = ":"
_TRUE_FLAGS: Final = frozenset({"1", "true", "yes", "y", "symmetric"})
_FALSE_FLAGS: Final = frozenset({"0", "false", "no", "n", "asymmetric"})

Step = tuple[str, str, str]


class HeterogeneousGraph:
    """Directed graph with typed nodes and typed edges.

    Nodes keep the order in which they were declared; that order is the
    tie-break for every orientation decision downstream. Multi-edges are
    kept, each one being a distinct path step.
    """

    def __init__(
        self,
        nodes: t.Iterable[tuple[str, str]],
        edges: t.Iterable[tuple[str, str, str]] = (),
        undirected: t.Iterable[str] = (),
    ) -> None:
        node_list = list(nodes)
        self.node_ids: tuple[str, ...] = tuple(n for n, _ in node_list)
        self.node_types: tuple[str, ...] = tuple(k for _, k in node_list)

        index: dict[str, int] = {}
        duplicates: list[str] = []
        for i, node_id in enumerate(self.node_ids):
            if node_id in index:
                duplicates.append(node_id)
            index[node_id] = i
        if duplicates:
            raise GraphValidationError(
                "duplicate node ids", sorted(set(duplicates))
            )
        # artifacts treat a leading '#' as a header line
        commented = [n for n in self.node_ids if n.startswith(HEADER_MARK)]
        if commented:
            raise GraphValidationError(
                f"node ids may not start with {HEADER_MARK!r}", commented
            )
        self._index = index

        both_ways = frozenset(undirected)
        src: list[int] = []
        dst: list[int] = []
        kinds: list[str] = []
        dangling: dict[str, None] = {}
        for u, v, r in edges:
            if u not in index:
                dangling[u] = None
            if v not in index:
                dangling[v] = None
            if u not in index or v not in index:
                continue
            src.append(index[u])
            dst.append(index[v])
            kinds.append(r)
            if r in both_ways:
                src.append(index[v])
                dst.append(index[u])
                kinds.append(r)
        if dangling:
            raise GraphValidationError(
                "edge endpoints missing from the node list", list(dangling)
            )
        self.edge_src = np.asarray(src, dtype=np.int64)
        self.edge_dst = np.asarray(dst, dtype=np.int64)
        self.edge_types: tuple[str, ...] = tuple(kinds)
        self.undirected = both_ways

    def __repr__(self) -> str:
        return (
            f"HeterogeneousGraph(|V|={self.num_nodes}, |E|={self.num_edges}, "
            f"|A|={len(self.node_type_set)}, |R|={len(self.edge_type_set)})"
        )

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.edge_types)

    @cached_property
    def node_type_set(self) -> frozenset[str]:
        return frozenset(self.node_types)

    @cached_property
    def edge_type_set(self) -> frozenset[str]:
        return frozenset(self.edge_types)

    @cached_property
    def schema(self) -> frozenset[Step]:
        """Every (source type, edge type, target type) that occurs."""
        return frozenset(
            (self.node_types[u], r, self.node_types[v])
            for u, v, r in zip(
                self.edge_src.tolist(), self.edge_dst.tolist(), self.edge_types
            )
        )

    def index_of(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise GraphValidationError("unknown node", [node_id])

    def type_of(self, node_id: str) -> str:
        return self.node_types[self.index_of(node_id)]

    def nodes_of_type(self, node_type: str) -> np.ndarray:
        """Global indices of the nodes of one type, in declaration order."""
        return self._typed_nodes.get(
            node_type, np.empty(0, dtype=np.int64)
        )

    @cached_property
    def _typed_nodes(self) -> dict[str, np.ndarray]:
        groups: dict[str, list[int]] = {}
        for i, kind in enumerate(self.node_types):
            groups.setdefault(kind, []).append(i)
        return {
            kind: np.asarray(members, dtype=np.int64)
            for kind, members in groups.items()
        }

    @cached_property
    def _local_index(self) -> np.ndarray:
        local = np.empty(self.num_nodes, dtype=np.int64)
        for members in self._typed_nodes.values():
            local[members] = np.arange(len(members))
        return local

    @cached_property
    def _edge_labels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        kinds = np.asarray(self.edge_types, dtype=object)
        node_types = np.asarray(self.node_types, dtype=object)
        return kinds, node_types[self.edge_src], node_types[self.edge_dst]

    def adjacency(
        self, src_type: str, edge_type: str, dst_type: str
    ) -> sp.csr_matrix:
        """Typed block with parallel edges summed into counts."""
        rows = self.nodes_of_type(src_type)
        cols = self.nodes_of_type(dst_type)
        kinds, src_types, dst_types = self._edge_labels
        mask = (
            (kinds == edge_type)
            & (src_types == src_type)
            & (dst_types == dst_type)
        )
        local = self._local_index
        block = sp.coo_matrix(
            (
                np.ones(int(mask.sum()), dtype=np.float64),
                (local[self.edge_src[mask]], local[self.edge_dst[mask]]),
            ),
            shape=(len(rows), len(cols)),
        )
        return block.tocsr()

    def resolve_step(self, step: Step) -> tuple[Step, bool]:
        """Declared edge block serving a meta-path step.

        Returns the block and whether it must be walked backwards.
        """
        a, r, b = step
        if r not in self.edge_type_set:
            raise SchemaError(f"unknown edge type {r!r}")
        for kind in (a, b):
            if kind not in self.node_type_set:
                raise SchemaError(f"unknown node type {kind!r}")
        if step in self.schema:
            return step, False
        if (b, r, a) in self.schema:
            return (b, r, a), True
        raise SchemaError(
            f"no {r!r} edges between {a!r} and {b!r} in either direction"
        )

    def relabel(self, mapping: t.Mapping[str, str]) -> "HeterogeneousGraph":
        """Merge nodes by renaming them; merged nodes must share a type."""
        nodes: dict[str, str] = {}
        clashes: list[str] = []
        for node_id, kind in zip(self.node_ids, self.node_types):
            new_id = mapping.get(node_id, node_id)
            if nodes.setdefault(new_id, kind) != kind:
                clashes.append(new_id)
        if clashes:
            raise GraphValidationError(
                "merged nodes of different types", sorted(set(clashes))
            )
        edges = [
            (
                mapping.get(self.node_ids[u], self.node_ids[u]),
                mapping.get(self.node_ids[v], self.node_ids[v]),
                r,
            )
            for u, v, r in zip(
                self.edge_src.tolist(), self.edge_dst.tolist(), self.edge_types
            )
        ]
        # edges are already expanded, so no relation is doubled again
        return HeterogeneousGraph(nodes.items(), edges)


@dataclass(frozen=True)
class MetaPath:
    """Typed path template, e.g. ``author:writes:paper:writes:author``."""

    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]
    symmetric: bool = False

    def __post_init__(self) -> None:
        if len(self.node_types) != len(self.edge_types) + 1:
            raise SchemaError(
                "a meta-path alternates node and edge types and ends on a "
                "node type"
            )
        if not self.edge_types:
            raise SchemaError("a meta-path needs at least one edge type")
        if self.symmetric and not self.is_palindrome:
            raise SchemaError(
                f"meta-path {self.name} is flagged symmetric but does not "
                "read the same reversed"
            )

    @classmethod
    def parse(cls, text: str, symmetric: bool | None = None) -> "MetaPath":
        parts = [p.strip() for p in text.strip().split(STEP_SEP)]
        if len(parts) < 3 or len(parts) % 2 == 0 or not all(parts):
            raise SchemaError(f"malformed meta-path {text!r}")
        node_types = tuple(parts[0::2])
        edge_types = tuple(parts[1::2])
        if symmetric is None:
            symmetric = (
                node_types == node_types[::-1]
                and edge_types == edge_types[::-1]
            )
        return cls(node_types, edge_types, symmetric)

    @property
    def name(self) -> str:
        parts: list[str] = []
        for kind, edge in zip(self.node_types, self.edge_types):
            parts.extend((kind, edge))
        parts.append(self.node_types[-1])
        return STEP_SEP.join(parts)

    @property
    def is_palindrome(self) -> bool:
        return (
            self.node_types == self.node_types[::-1]
            and self.edge_types == self.edge_types[::-1]
        )

    @property
    def start_type(self) -> str:
        return self.node_types[0]

    @property
    def end_type(self) -> str:
        return self.node_types[-1]

    def steps(self) -> list[Step]:
        return [
            (self.node_types[i], self.edge_types[i], self.node_types[i + 1])
            for i in range(len(self.edge_types))
        ]

    def check(self, graph: HeterogeneousGraph) -> None:
        """Raise SchemaError unless every step maps onto declared edges."""
        for step in self.steps():
            graph.resolve_step(step)

    def symmetric_in(self, graph: HeterogeneousGraph) -> bool:
        """Whether u -> v and v -> u counts agree on ``graph``.

        Mirrored steps must walk the same edge block in opposite
        directions, unless their relation is undirected. A middle step
        between two nodes of one type needs an undirected relation.
        """
        if not self.is_palindrome:
            return False
        steps = self.steps()
        last = len(steps) - 1
        for i in range((len(steps) + 1) // 2):
            relation = steps[i][1]
            if relation in graph.undirected:
                continue
            if i == last - i:
                return False
            block, backwards = graph.resolve_step(steps[i])
            mirror, mirror_backwards = graph.resolve_step(steps[last - i])
            if block != mirror or backwards == mirror_backwards:
                return False
        return True


def _parse_flag(text: str, path: str, line: int) -> bool:
    flag = text.strip().lower()
    if flag in _TRUE_FLAGS:
        return True
    if flag in _FALSE_FLAGS:
        return False
    raise ParseError(path, line, f"bad symmetric flag {text!r}")


def load_graph(
    node_file: str | Path,
    edge_file: str | Path,
    undirected: t.Iterable[str] = (),
) -> HeterogeneousGraph:
    """Read ``node_id<TAB>node_type`` and ``src<TAB>dst<TAB>edge_type``."""
    nodes: list[tuple[str, str]] = []
    for record in iter_tsv(node_file):
        fields = [f.strip() for f in record.fields]
        if len(fields) != 2 or not all(fields):
            raise ParseError(
                str(node_file),
                record.line_number,
                f"expected 2 fields, got {len(fields)}",
            )
        nodes.append((fields[0], fields[1]))

    edges: list[tuple[str, str, str]] = []
    for record in iter_tsv(edge_file):
        fields = [f.strip() for f in record.fields]
        if len(fields) != 3 or not all(fields):
            raise ParseError(
                str(edge_file),
                record.line_number,
                f"expected 3 fields, got {len(fields)}",
            )
        edges.append((fields[0], fields[1], fields[2]))

    graph = HeterogeneousGraph(nodes, edges, undirected)
    logger.debug("Loaded %r", graph)
    return graph


def load_metapaths(path: str | Path) -> list[MetaPath]:
    """One ``type:edge:type...[<TAB>symmetric]`` declaration per line."""
    metapaths: list[MetaPath] = []
    for record in iter_tsv(path):
        fields = [f.strip() for f in record.fields if f.strip()]
        if len(fields) not in (1, 2):
            raise ParseError(
                str(path), record.line_number, "expected 1 or 2 fields"
            )
        symmetric = (
            _parse_flag(fields[1], str(path), record.line_number)
            if len(fields) == 2
            else None
        )
        try:
            metapaths.append(MetaPath.parse(fields[0], symmetric))
        except SchemaError as exc:
            raise ParseError(str(path), record.line_number, str(exc))
    return metapaths
