"""Tests for the shrunken-simplex projection."""

import itertools

import numpy as np
import pytest

from prep_hin.exceptions import ParameterError
from prep_hin.projection import project_rows, project_shrunken_simplex


def active_set_projection(z: np.ndarray, delta: float) -> np.ndarray:
    """Brute force: try every set of coordinates pinned at delta."""
    k = len(z)
    best, best_dist = None, np.inf
    for size in range(k):
        for pinned in itertools.combinations(range(k), size):
            free = [i for i in range(k) if i not in pinned]
            shift = (1.0 - delta * size - z[free].sum()) / len(free)
            x = np.full(k, delta)
            x[free] = z[free] + shift
            if np.all(x >= delta - 1e-12):
                dist = float(np.linalg.norm(x - z))
                if dist < best_dist:
                    best, best_dist = x, dist
    assert best is not None
    return best


class TestProjection:
    """Test projection results."""

    def test_point_on_simplex_is_fixed(self):
        """Test a feasible point projects to itself"""
        z = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_shrunken_simplex(z), z)

    def test_uniform_shift(self):
        """Test a constant offset is removed"""
        np.testing.assert_allclose(
            project_shrunken_simplex(np.array([1.0, 1.0])), [0.5, 0.5]
        )

    def test_clipped_coordinate(self):
        """Test a far-negative entry lands on delta"""
        x = project_shrunken_simplex(np.array([2.0, -5.0, 0.0]), 0.1)
        np.testing.assert_allclose(x, [0.8, 0.1, 0.1])

    def test_single_pattern(self):
        """Test K=1 always returns one"""
        np.testing.assert_array_equal(
            project_rows(np.array([[3.0], [-2.0]])), [[1.0], [1.0]]
        )

    @pytest.mark.parametrize("delta", [0.0, 1e-3, 0.1])
    def test_matches_active_set_oracle(self, delta):
        """Test agreement with exhaustive search on random inputs"""
        rng = np.random.default_rng(7)
        for _ in range(300):
            k = int(rng.integers(2, 7))
            if delta >= 1.0 / k:
                continue
            z = rng.normal(0.0, 2.0, k)
            x = project_shrunken_simplex(z, delta)
            assert np.all(x >= delta - 1e-12)
            assert abs(x.sum() - 1.0) < 1e-12
            assert np.linalg.norm(x - active_set_projection(z, delta)) < 1e-9

    def test_rows_match_single_vectors(self):
        """Test row-wise projection equals projecting each row"""
        rng = np.random.default_rng(3)
        z = rng.normal(size=(20, 4))
        rows = project_rows(z, 1e-3)
        for i in range(len(z)):
            np.testing.assert_allclose(
                rows[i], project_shrunken_simplex(z[i], 1e-3)
            )


class TestProjectionEdgeCases:
    """Test invalid projection requests."""

    def test_delta_too_large(self):
        """Test delta >= 1/K leaves no feasible point"""
        with pytest.raises(ParameterError):
            project_shrunken_simplex(np.zeros(4), 0.25)

    def test_negative_delta(self):
        """Test negative lower bounds are rejected"""
        with pytest.raises(ParameterError):
            project_shrunken_simplex(np.zeros(3), -0.1)

    def test_empty_vector(self):
        """Test an empty vector cannot be projected"""
        with pytest.raises(ParameterError):
            project_shrunken_simplex(np.zeros(0))

    def test_wrong_rank(self):
        """Test dimensionality checks"""
        with pytest.raises(ParameterError):
            project_rows(np.zeros(3))
        with pytest.raises(ParameterError):
            project_shrunken_simplex(np.zeros((2, 2)))
