"""Tests for the typed graph, meta-path declarations and the loaders."""

import unittest

import numpy as np
import pytest

from prep_hin.exceptions import GraphValidationError, ParseError, SchemaError
from prep_hin.graph import (
    HeterogeneousGraph,
    MetaPath,
    load_graph,
    load_metapaths,
)
from tests.conftest import TOY_EDGES, TOY_NODES


class TestHeterogeneousGraph(unittest.TestCase):
    """Test graph construction and typed views."""

    def setUp(self):
        """Set up the toy graph"""
        self.graph = HeterogeneousGraph(TOY_NODES, TOY_EDGES)

    def test_sizes(self):
        """Test node and edge counts"""
        self.assertEqual(self.graph.num_nodes, 7)
        self.assertEqual(self.graph.num_edges, 8)
        self.assertEqual(
            self.graph.node_type_set,
            {"person", "university", "city", "major"},
        )

    def test_nodes_of_type_keeps_declaration_order(self):
        """Test typed node lists follow the node file order"""
        people = self.graph.nodes_of_type("person")
        self.assertEqual(
            [self.graph.node_ids[i] for i in people],
            ["Mordo", "Wong", "Stephen"],
        )
        self.assertEqual(len(self.graph.nodes_of_type("planet")), 0)

    def test_adjacency_block(self):
        """Test the person x university attends block"""
        block = self.graph.adjacency("person", "attends", "university")
        np.testing.assert_array_equal(
            block.toarray(), [[1, 1], [1, 0], [0, 1]]
        )

    def test_resolve_step_walks_backwards(self):
        """Test a step against the declared direction is reversed"""
        step, backwards = self.graph.resolve_step(
            ("university", "attends", "person")
        )
        self.assertEqual(step, ("person", "attends", "university"))
        self.assertTrue(backwards)

    def test_resolve_step_unknown_edge(self):
        """Test unknown edge types raise SchemaError"""
        with self.assertRaises(SchemaError):
            self.graph.resolve_step(("person", "teaches", "university"))

    def test_resolve_step_without_edges(self):
        """Test a known edge type between the wrong node types"""
        with self.assertRaises(SchemaError):
            self.graph.resolve_step(("person", "attends", "city"))

    def test_type_of(self):
        """Test node type lookup"""
        self.assertEqual(self.graph.type_of("UCB"), "university")
        with self.assertRaises(GraphValidationError):
            self.graph.type_of("MIT")


class TestGraphValidation:
    """Test structural validation of graphs."""

    def test_duplicate_node_ids(self):
        """Test duplicate ids are reported"""
        with pytest.raises(GraphValidationError) as info:
            HeterogeneousGraph([("a", "x"), ("a", "y")])
        assert info.value.offending == ("a",)

    def test_dangling_edge(self):
        """Test edges to unknown nodes are reported"""
        with pytest.raises(GraphValidationError) as info:
            HeterogeneousGraph([("a", "x")], [("a", "b", "r")])
        assert "b" in info.value.offending

    def test_undirected_relation_is_doubled(self):
        """Test undirected relations become two directed edges"""
        graph = HeterogeneousGraph(
            [("a", "user"), ("b", "user")],
            [("a", "b", "friend")],
            undirected=["friend"],
        )
        assert graph.num_edges == 2
        block = graph.adjacency("user", "friend", "user")
        np.testing.assert_array_equal(block.toarray(), [[0, 1], [1, 0]])

    def test_multi_edges_are_summed(self):
        """Test parallel edges add up in the adjacency block"""
        graph = HeterogeneousGraph(
            [("a", "x"), ("b", "y")], [("a", "b", "r"), ("a", "b", "r")]
        )
        assert graph.adjacency("x", "r", "y").toarray()[0, 0] == 2

    def test_relabel_merges_nodes(self):
        """Test relabelling merges nodes and keeps their edges"""
        graph = HeterogeneousGraph(
            [("m1", "author"), ("m2", "author"), ("p", "paper")],
            [("m1", "p", "writes"), ("m2", "p", "writes")],
        )
        merged = graph.relabel({"m1": "A", "m2": "A"})
        assert merged.node_ids == ("A", "p")
        assert merged.adjacency("author", "writes", "paper").toarray()[0, 0] == 2

    def test_relabel_rejects_type_clash(self):
        """Test merging nodes of different types fails"""
        graph = HeterogeneousGraph([("a", "x"), ("b", "y")])
        with pytest.raises(GraphValidationError):
            graph.relabel({"b": "a"})

    def test_header_mark_in_node_id(self):
        """Test ids that would read back as header lines are rejected"""
        with pytest.raises(GraphValidationError) as info:
            HeterogeneousGraph([("a", "x"), ("#b", "x")])
        assert info.value.offending == ("#b",)

    def test_relabel_to_header_mark(self):
        """Test merging into a #-prefixed id is rejected too"""
        graph = HeterogeneousGraph([("a", "x"), ("b", "x")])
        with pytest.raises(GraphValidationError):
            graph.relabel({"a": "#a", "b": "#a"})


class TestMetaPath:
    """Test meta-path parsing and properties."""

    def test_parse_infers_symmetry(self):
        """Test palindromes are flagged symmetric by default"""
        mp = MetaPath.parse("person:attends:university:attends:person")
        assert mp.symmetric
        assert mp.start_type == "person"
        assert mp.name == "person:attends:university:attends:person"

    def test_parse_asymmetric(self):
        """Test non-palindromes are asymmetric"""
        mp = MetaPath.parse("author:writes:paper:cites:paper")
        assert not mp.symmetric
        assert mp.end_type == "paper"

    def test_symmetric_flag_needs_palindrome(self):
        """Test a non-palindrome cannot be flagged symmetric"""
        with pytest.raises(SchemaError):
            MetaPath.parse("a:r:b", symmetric=True)

    def test_palindrome_can_be_declared_asymmetric(self):
        """Test the explicit flag wins over the inferred one"""
        assert not MetaPath.parse("a:r:b:r:a", symmetric=False).symmetric

    @pytest.mark.parametrize("text", ["a", "a:r", "a::b", "a:r:b:s"])
    def test_malformed(self, text):
        """Test malformed declarations raise SchemaError"""
        with pytest.raises(SchemaError):
            MetaPath.parse(text)

    def test_steps(self):
        """Test steps are (source, edge, target) triples"""
        mp = MetaPath.parse("a:r:b:s:c")
        assert mp.steps() == [("a", "r", "b"), ("b", "s", "c")]


class TestLoaders:
    """Test the tab-separated file loaders."""

    def test_load_graph(self, toy_files):
        """Test loading the toy network from disk"""
        graph = load_graph(toy_files["nodes"], toy_files["edges"])
        assert graph.num_nodes == 7
        assert graph.num_edges == 8

    def test_load_graph_reports_line(self, tmp_path):
        """Test a malformed node line names the file and line"""
        nodes = tmp_path / "nodes.tsv"
        nodes.write_text("a\tx\nb\n", encoding="utf-8")
        edges = tmp_path / "edges.tsv"
        edges.write_text("", encoding="utf-8")
        with pytest.raises(ParseError) as info:
            load_graph(nodes, edges)
        assert info.value.line_number == 2

    def test_load_metapaths_with_flags(self, tmp_path):
        """Test the optional symmetric column"""
        path = tmp_path / "metapaths.tsv"
        path.write_text(
            "a:r:b:r:a\n\na:r:b:r:a\tno\n", encoding="utf-8"
        )
        first, second = load_metapaths(path)
        assert first.symmetric
        assert not second.symmetric

    def test_load_metapaths_bad_flag(self, tmp_path):
        """Test an unknown flag is a parse error"""
        path = tmp_path / "metapaths.tsv"
        path.write_text("a:r:b:r:a\tmaybe\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_metapaths(path)

    def test_load_graph_rejects_comment_like_ids(self, tmp_path):
        """Test a node line starting with '#' is not silently a node"""
        nodes = tmp_path / "nodes.tsv"
        nodes.write_text("a\tx\n#b\tx\n", encoding="utf-8")
        edges = tmp_path / "edges.tsv"
        edges.write_text("a\t#b\tr\n", encoding="utf-8")
        with pytest.raises(GraphValidationError) as info:
            load_graph(nodes, edges)
        assert info.value.offending == ("#b",)

    def test_load_graph_rejects_bad_utf8(self, tmp_path):
        """Test undecodable bytes are a parse error at their line"""
        nodes = tmp_path / "nodes.tsv"
        nodes.write_bytes(b"a\tx\nb\xff\xfe\tx\n")
        edges = tmp_path / "edges.tsv"
        edges.write_text("", encoding="utf-8")
        with pytest.raises(ParseError) as info:
            load_graph(nodes, edges)
        assert info.value.line_number == 2
        assert "UTF-8" in str(info.value)


class TestSymmetryInGraph:
    """Test whether a palindrome counts the same in both directions."""

    def citations(self, undirected=()):
        return HeterogeneousGraph(
            [("p1", "paper"), ("p2", "paper"), ("p3", "paper")],
            [("p1", "p2", "cites"), ("p2", "p3", "cites")],
            undirected=undirected,
        )

    def test_toy_metapaths_are_symmetric(self, toy_graph):
        """Test there-and-back meta-paths over one block"""
        mp = MetaPath.parse("person:attends:university:attends:person")
        assert mp.symmetric_in(toy_graph)

    def test_one_way_relation_between_same_types(self):
        """Test paper:cites:paper is directional when cites is"""
        mp = MetaPath.parse("paper:cites:paper")
        assert mp.symmetric
        assert not mp.symmetric_in(self.citations())

    def test_two_hop_chain_is_directional(self):
        """Test mirrored steps walked the same way are not symmetric"""
        mp = MetaPath.parse("paper:cites:paper:cites:paper")
        assert not mp.symmetric_in(self.citations())

    def test_undirected_relation_is_symmetric(self):
        """Test an undirected relation makes the palindrome symmetric"""
        graph = self.citations(undirected=["cites"])
        assert MetaPath.parse("paper:cites:paper").symmetric_in(graph)
        assert MetaPath.parse("paper:cites:paper:cites:paper").symmetric_in(
            graph
        )

    def test_non_palindrome(self, toy_graph):
        """Test a non-palindrome is never symmetric"""
        mp = MetaPath.parse("person:attends:university")
        assert not mp.symmetric_in(toy_graph)
