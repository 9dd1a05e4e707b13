"""Tests for PReP relevance, the special-case reductions and score files."""

import logging

import numpy as np
import pytest
from scipy.stats import spearmanr

from prep_hin.baselines import base_scores
from prep_hin.config import PrepHyperparams
from prep_hin.counting import PathCountTable
from prep_hin.exceptions import (
    DirectionMismatchError,
    InputError,
    PairLookupError,
    ParameterError,
    SchemaError,
)
from prep_hin.formats import Header
from prep_hin.model import PrepParameters
from prep_hin.relevance import (
    CompositeScoreTable,
    Direction,
    common_direction,
    prep_score,
    prep_scores,
    read_scores,
    reduction_score,
    write_scores,
)
from tests.conftest import random_parameters, random_table


def unit_parameters(pc: PathCountTable, eta: float = 1.0) -> PrepParameters:
    """K=1 parameters with every visibility at one."""
    return PrepParameters(
        eta=np.full(pc.num_metapaths, eta),
        rho=np.ones(pc.num_nodes),
        phi=np.ones((pc.num_pairs, 1)),
        theta=np.full((1, pc.num_metapaths), 1.0 / pc.num_metapaths),
    )


class TestPrepScore:
    """Test the PReP relevance score."""

    def test_single_pattern_by_hand(self):
        """Test r = 3 for P = 3 with unit parameters"""
        pc = PathCountTable.from_rows([("a", "b", [3.0])])
        h = PrepHyperparams(k=1, beta=0.5)
        assert prep_score(pc, unit_parameters(pc), h, 0) == pytest.approx(3.0)

    def test_lookup_by_ids_and_row(self, toy_table, hyper):
        """Test a pair can be named either way round"""
        p = random_parameters(np.random.default_rng(1), toy_table)
        by_row = prep_score(toy_table, p, hyper, 1)
        by_ids = prep_score(toy_table, p, hyper, ("Stephen", "Mordo"))
        assert by_row == by_ids
        assert by_row == pytest.approx(prep_scores(toy_table, p, hyper).scores[1])

    def test_unknown_pair(self, toy_table, hyper):
        """Test absent pairs raise a lookup error"""
        p = random_parameters(np.random.default_rng(1), toy_table)
        with pytest.raises(PairLookupError):
            prep_score(toy_table, p, hyper, ("Wong", "Stephen"))
        with pytest.raises(PairLookupError):
            prep_score(toy_table, p, hyper, 7)

    def test_concentrated_mixture_changes_only_prior_term(self):
        """Test the synergy term for phi = (0.9, 0.1) against (0.5, 0.5)"""
        pc = PathCountTable.from_rows(
            [("a", "b", [1.0, 2.0]), ("a", "c", [2.0, 1.0])]
        )
        h = PrepHyperparams(k=2, beta=0.5)
        theta = [[0.4, 0.6], [0.4, 0.6]]
        p = PrepParameters(
            eta=[1.0, 1.0],
            rho=[1.0, 2.0, 1.0],
            phi=[[0.9, 0.1], [0.5, 0.5]],
            theta=theta,
        )
        q = p.replace(phi=[[0.5, 0.5], [0.5, 0.5]])
        expected = 0.5 * (np.log(0.9) + np.log(0.1) - 2.0 * np.log(0.5))
        assert prep_score(pc, p, h, 0) - prep_score(
            pc, q, h, 0
        ) == pytest.approx(expected)

    def test_visibility_lowers_relevance(self, rng, hyper):
        """Test r falls as rho_u grows"""
        pc = random_table(rng)
        p = random_parameters(rng, pc)
        u = int(pc.pairs[0, 0])
        rho = np.array(p.rho)
        rho[u] *= 2.0
        assert prep_score(pc, p.replace(rho=rho), hyper, 0) < prep_score(
            pc, p, hyper, 0
        )

    def test_scale_leaves_scores_unchanged(self, rng, hyper):
        """Test rho * c with eta * c**2 keeps every score"""
        pc = random_table(rng)
        p = random_parameters(rng, pc)
        scaled = p.replace(rho=p.rho * 7.0, eta=p.eta * 49.0)
        np.testing.assert_allclose(
            prep_scores(pc, scaled, hyper).scores,
            prep_scores(pc, p, hyper).scores,
            rtol=1e-12,
        )


class TestRankEquivalence:
    """Test the special cases that reduce PReP to classic measures."""

    def test_same_order_as_path_count(self):
        """Test K=1, unit rho and constant eta rank like PathCount"""
        h = PrepHyperparams(k=1, beta=0.5)
        for seed in range(50):
            rng = np.random.default_rng(seed)
            pc = random_table(rng, num_nodes=12, num_pairs=30, num_t=3)
            r = prep_scores(pc, unit_parameters(pc, eta=2.5), h).scores
            counts = reduction_score(pc, "pathcount", np.ones(3)).scores
            assert spearmanr(r, counts)[0] == pytest.approx(1.0)

    def test_same_scores_as_joinsim(self):
        """Test rho = sqrt of the cycle count reproduces JoinSim"""
        h = PrepHyperparams(k=1, beta=0.5)
        for seed in range(50):
            rng = np.random.default_rng(seed)
            pc = random_table(rng, num_nodes=12, num_pairs=30, num_t=1)
            cycles = pc.cycles[:, 0]
            rho = np.where(cycles > 0, np.sqrt(cycles), 1.0)
            p = unit_parameters(pc).replace(rho=rho)
            np.testing.assert_allclose(
                prep_scores(pc, p, h).scores,
                base_scores(pc, "joinsim", 0),
                rtol=1e-12,
            )


class TestReductions:
    """Test heuristic parameter choices."""

    def test_pathcount(self):
        """Test unit weights sum the counts"""
        pc = PathCountTable.from_rows([("u", "v", [1.0, 1.0, 0.0])])
        assert reduction_score(pc, "pathcount", [1, 1, 1]).scores[0] == 2.0

    def test_pathsim_like(self):
        """Test 2 P_uv / (P_uu + P_vv)"""
        pc = PathCountTable.from_rows(
            [("u", "v", [1.0])], cycles={"u": [1.0], "v": [2.0]}
        )
        score = reduction_score(pc, "pathsim-like", [1.0]).scores[0]
        assert score == pytest.approx(2.0 / 3.0)

    def test_joinsim_like(self):
        """Test unit cycles leave the count unchanged"""
        pc = PathCountTable.from_rows(
            [("u", "v", [1.0])], cycles={"u": [1.0], "v": [1.0]}
        )
        assert reduction_score(pc, "joinsim-like", [1.0]).scores[0] == 1.0

    def test_toy_network(self, toy_table):
        """Test the pathsim-like reduction on the toy network"""
        table = reduction_score(toy_table, "pathsim-like", [1.0, 1.0, 1.0])
        assert table.score("Mordo", "Wong") == pytest.approx(5.0 / 3.0)
        assert table.score("Mordo", "Stephen") == pytest.approx(5.0 / 3.0)

    def test_zero_cycle_term_is_skipped(self, caplog):
        """Test a zero normaliser drops the term with a warning"""
        pc = PathCountTable.from_rows(
            [("u", "v", [1.0, 1.0])],
            cycles={"u": [0.0, 1.0], "v": [2.0, 1.0]},
        )
        with caplog.at_level(logging.WARNING):
            table = reduction_score(pc, "joinsim-like", [1.0, 1.0])
        assert table.scores[0] == 1.0
        assert "zero cycle count" in caplog.text

    def test_asymmetric_metapath(self):
        """Test cycle normalisers need symmetric meta-paths"""
        pc = PathCountTable.from_rows([("u", "v", [1.0])], symmetric=[False])
        with pytest.raises(SchemaError):
            reduction_score(pc, "pathsim-like", [1.0])
        assert reduction_score(pc, "pathcount", [1.0]).scores[0] == 1.0

    @pytest.mark.parametrize("weights", [[0.0], [-1.0], [1.0, 1.0]])
    def test_bad_weights(self, weights):
        """Test weights must be positive, one per meta-path"""
        pc = PathCountTable.from_rows([("u", "v", [1.0])])
        with pytest.raises(ParameterError):
            reduction_score(pc, "pathcount", weights)

    def test_unknown_mode(self):
        """Test unknown reductions are rejected"""
        pc = PathCountTable.from_rows([("u", "v", [1.0])])
        with pytest.raises(ParameterError):
            reduction_score(pc, "simrank-like", [1.0])


class TestCompositeScoreTable:
    """Test the score table and its direction handling."""

    def test_lookup_is_unordered(self):
        """Test (u, v) and (v, u) name the same pair"""
        table = CompositeScoreTable("m", [("a", "b")], [0.5])
        assert table.score("b", "a") == 0.5
        with pytest.raises(PairLookupError):
            table.score("a", "c")

    def test_duplicate_pairs(self):
        """Test a pair may appear only once"""
        with pytest.raises(InputError):
            CompositeScoreTable("m", [("a", "b"), ("b", "a")], [0.5, 0.6])

    def test_non_finite_scores(self):
        """Test scores must be finite"""
        with pytest.raises(InputError):
            CompositeScoreTable("m", [("a", "b")], [np.inf])

    def test_lower_direction_is_negated(self):
        """Test relevance of a lower-is-better table"""
        table = CompositeScoreTable(
            "m", [("a", "b"), ("a", "c")], [1.0, 2.0], Direction.LOWER
        )
        np.testing.assert_array_equal(table.relevance(), [-1.0, -2.0])
        np.testing.assert_array_equal(table.ranked(), [0, 1])
        assert table.normalized().direction is Direction.HIGHER

    def test_ties_keep_table_order(self):
        """Test the ranking is stable"""
        table = CompositeScoreTable(
            "m", [("a", "b"), ("a", "c"), ("b", "c")], [1.0, 2.0, 1.0]
        )
        np.testing.assert_array_equal(table.ranked(), [1, 0, 2])

    def test_unscored_pairs_rank_last(self):
        """Test absent pairs get minus infinity"""
        table = CompositeScoreTable("m", [("a", "b")], [0.5])
        np.testing.assert_array_equal(
            table.relevance_of([("b", "a"), ("a", "c")]), [0.5, -np.inf]
        )

    def test_common_direction(self):
        """Test mixing directions is rejected"""
        higher = CompositeScoreTable("m", [("a", "b")], [1.0])
        lower = CompositeScoreTable("n", [("a", "b")], [1.0], "lower")
        assert common_direction([higher, higher]) is Direction.HIGHER
        with pytest.raises(DirectionMismatchError):
            common_direction([higher, lower])


class TestScoreFiles:
    """Test the ranked score export."""

    def test_single_table(self, tmp_path):
        """Test rows are written most relevant first and read back"""
        table = CompositeScoreTable(
            "prep", [("a", "b"), ("a", "c")], [0.1, 0.9], fingerprint="f"
        )
        path = write_scores(table, tmp_path / "scores.tsv", Header(""))
        data = [
            line
            for line in path.read_text(encoding="utf-8").splitlines()
            if not line.startswith("#")
        ]
        assert data == ["a\tc\t0.9\thigher", "a\tb\t0.1\thigher"]
        back, header = read_scores(path)
        assert isinstance(back, CompositeScoreTable)
        assert header.first("measure") == "prep"
        assert back.score("a", "b") == 0.1

    def test_subtask_blocks(self, tmp_path):
        """Test one block per sub-task"""
        tables = {
            "g1": CompositeScoreTable("pathsim-mean", [("a", "b")], [1.0]),
            "g2": CompositeScoreTable(
                "pathsim-mean", [("c", "d"), ("c", "e")], [2.0, 3.0]
            ),
        }
        path = write_scores(tables, tmp_path / "scores.tsv", Header(""))
        back, _ = read_scores(path)
        assert isinstance(back, dict)
        assert list(back) == ["g1", "g2"]
        assert back["g2"].score("c", "e") == 3.0
        assert back["g1"].measure_id == "pathsim-mean"

    def test_mixed_directions_on_write(self, tmp_path):
        """Test a mapping must share one direction"""
        tables = {
            "g1": CompositeScoreTable("m", [("a", "b")], [1.0]),
            "g2": CompositeScoreTable("m", [("a", "b")], [1.0], "lower"),
        }
        with pytest.raises(DirectionMismatchError):
            write_scores(tables, tmp_path / "scores.tsv", Header(""))

    def test_mixed_directions_on_read(self, tmp_path):
        """Test a file whose rows disagree on direction"""
        table = CompositeScoreTable(
            "m", [("a", "b"), ("a", "c")], [1.0, 2.0], "lower"
        )
        path = write_scores(table, tmp_path / "scores.tsv", Header(""))
        text = path.read_text(encoding="utf-8")
        path.write_text(
            text.replace("\tlower\n", "\thigher\n", 1), encoding="utf-8"
        )
        with pytest.raises(DirectionMismatchError):
            read_scores(path)
