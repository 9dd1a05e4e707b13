"""Euclidean projection onto the shrunken simplex.

The feasible set is ``{x : x_i >= delta, sum(x) = 1}``. Sorting the input
in descending order locates the threshold in one pass, so a projection
costs O(K log K).
"""

import numpy as np

from .exceptions import ParameterError


def _check_delta(k: int, delta: float) -> None:
    if k < 1:
        raise ParameterError("cannot project an empty vector")
    if delta < 0.0 or delta >= 1.0 / k:
        raise ParameterError(
            f"delta={delta!r} leaves no room in the {k}-simplex; "
            f"need 0 <= delta < {1.0 / k!r}"
        )


def project_rows(z: np.ndarray, delta: float = 0.0) -> np.ndarray:
    """Project every row of a 2-D array independently."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ParameterError("project_rows expects a 2-D array")
    n, k = z.shape
    _check_delta(k, delta)
    if k == 1:
        return np.ones((n, 1))
    budget = 1.0 - delta * k
    u = -np.sort(-z, axis=1)
    css = np.cumsum(u, axis=1)
    ranks = np.arange(1, k + 1)
    active = u + (budget - css) / ranks > 0
    # last index where the condition holds; the first column always does
    rho = k - 1 - np.argmax(active[:, ::-1], axis=1)
    lam = (budget - css[np.arange(n), rho]) / (rho + 1)
    return np.maximum(z + lam[:, np.newaxis], 0.0) + delta


def project_shrunken_simplex(z: np.ndarray, delta: float = 0.0) -> np.ndarray:
    """Project one vector onto the delta-shrunken simplex."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ParameterError("project_shrunken_simplex expects a vector")
    return project_rows(z[np.newaxis, :], delta)[0]
