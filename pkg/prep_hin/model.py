"""PReP model state, MAP objective and the closed-form block solutions.

Notation follows the model: ``eta`` (path selectivity, one per meta-path),
``rho`` (node visibility), ``phi`` (pair-level mixture over generating
patterns) and ``theta`` (pattern-level distribution over meta-paths).
Derived quantities are computed on demand:

    tau_s    = rho_u * rho_v
    psi      = phi @ theta
    lambda   = eta / (tau * psi)
    xi_s     = sum_t eta_t * P_st / psi_st

Counts follow ``P_st ~ Exp(lambda_st)``; visibilities have a
``Gamma(alpha, 1)`` prior and every ``phi_s`` a symmetric ``Dir_K(beta)``
prior.
"""

import dataclasses
import logging
import typing as t
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np
import scipy.sparse as sp

from .config import ALPHA_BOUNDS, PrepHyperparams
from .counting import PathCountTable, node_totals
from .exceptions import InputError, NumericalError, ParameterError, ParseError
from .formats import (
    Header,
    format_float,
    parse_float,
    read_artifact,
    write_artifact,
)

logger = logging.getLogger(__name__)

CHECKPOINT_KIND: Final = "checkpoint"
ETA_CLAMP: Final = 1e6
RHO_FLOOR: Final = 1e-12
ROW_SUM_TOL: Final = 1e-12
_SECTIONS: Final = ("eta", "rho", "phi", "theta")


def _frozen(values: t.Any) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PrepParameters:
    """Immutable (eta, rho, phi, theta) state of a PReP model."""

    eta: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        for name in ("eta", "rho", "phi", "theta"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.eta.ndim != 1 or self.rho.ndim != 1:
            raise ParameterError("eta and rho must be vectors")
        if self.phi.ndim != 2 or self.theta.ndim != 2:
            raise ParameterError("phi and theta must be 2-D tables")
        if self.phi.shape[1] != self.theta.shape[0]:
            raise ParameterError(
                f"phi has {self.phi.shape[1]} patterns, theta has "
                f"{self.theta.shape[0]}"
            )
        if self.theta.shape[1] != len(self.eta):
            raise ParameterError("theta and eta disagree on the meta-paths")

    @property
    def k(self) -> int:
        return int(self.theta.shape[0])

    @property
    def num_metapaths(self) -> int:
        return len(self.eta)

    def replace(self, **changes: t.Any) -> "PrepParameters":
        return dataclasses.replace(self, **changes)

    def check(self, delta: float, rows: bool = True) -> None:
        """Raise ParameterError unless the parameter invariants hold.

        ``rows=False`` skips the row-sum test so that a perturbed point can
        still be evaluated.
        """
        if not (np.all(np.isfinite(self.eta)) and np.all(self.eta > 0)):
            raise ParameterError("eta must be finite and positive")
        if not (np.all(np.isfinite(self.rho)) and np.all(self.rho > 0)):
            raise ParameterError("rho must be finite and positive")
        for name in ("phi", "theta"):
            table = getattr(self, name)
            if not np.all(np.isfinite(table)):
                raise ParameterError(f"{name} has non-finite entries")
            if np.any(table < delta) or np.any(table <= 0):
                raise ParameterError(
                    f"{name} has entries below the simplex bound {delta!r}"
                )
            if rows and np.any(np.abs(table.sum(axis=1) - 1.0) > ROW_SUM_TOL):
                raise ParameterError(f"{name} rows must sum to 1")


def _check_shapes(pc: PathCountTable, p: PrepParameters) -> None:
    if pc.num_pairs == 0:
        raise InputError("path count table is empty")
    if p.num_metapaths != pc.num_metapaths:
        raise ParameterError(
            f"{p.num_metapaths} selectivities for "
            f"{pc.num_metapaths} meta-paths"
        )
    if len(p.rho) != pc.num_nodes:
        raise ParameterError(
            f"{len(p.rho)} visibilities for {pc.num_nodes} nodes"
        )
    if p.phi.shape[0] != pc.num_pairs:
        raise ParameterError(
            f"phi has {p.phi.shape[0]} rows for {pc.num_pairs} pairs"
        )


def pair_visibility(pc: PathCountTable, p: PrepParameters) -> np.ndarray:
    """tau_s = rho_u * rho_v for every pair."""
    return p.rho[pc.pairs[:, 0]] * p.rho[pc.pairs[:, 1]]


def pattern_mixture(p: PrepParameters) -> np.ndarray:
    """psi = phi @ theta."""
    return p.phi @ p.theta


def rates(pc: PathCountTable, p: PrepParameters) -> np.ndarray:
    """Exponential rates lambda_st = eta_t / (tau_s psi_st)."""
    return p.eta[np.newaxis, :] / (
        pair_visibility(pc, p)[:, np.newaxis] * pattern_mixture(p)
    )


def pair_weights(pc: PathCountTable, p: PrepParameters) -> np.ndarray:
    """xi_s = sum_t eta_t P_st / psi_st."""
    return (pc.counts * p.eta[np.newaxis, :] / pattern_mixture(p)).sum(axis=1)


def pattern_popularity(p: PrepParameters) -> np.ndarray:
    """How much pair mass each generating pattern carries."""
    return np.asarray(p.phi.sum(axis=0))


def _raise_nonfinite(per_pair: np.ndarray, what: str) -> None:
    bad = np.flatnonzero(~np.isfinite(per_pair))
    if len(bad):
        raise NumericalError(f"non-finite {what}", pair_index=int(bad[0]))
    raise NumericalError(f"non-finite {what}")


def objective(
    pc: PathCountTable, p: PrepParameters, h: PrepHyperparams
) -> float:
    """Negative log posterior O of the model, up to constants."""
    _check_shapes(pc, p)
    p.check(h.delta, rows=False)
    alpha = h.alpha_value
    num_t = pc.num_metapaths

    node_terms = p.rho - (alpha - 1.0) * np.log(p.rho)
    log_rho = np.log(p.rho)
    psi = pattern_mixture(p)
    tau = pair_visibility(pc, p)
    per_pair = (
        -(h.beta - 1.0) * np.log(p.phi).sum(axis=1)
        + num_t * (log_rho[pc.pairs[:, 0]] + log_rho[pc.pairs[:, 1]])
        + (
            np.log(psi)
            + p.eta[np.newaxis, :] * pc.counts / (tau[:, np.newaxis] * psi)
        ).sum(axis=1)
    )
    value = float(
        node_terms.sum()
        - pc.num_pairs * np.log(p.eta).sum()
        + per_pair.sum()
    )
    if not np.isfinite(value):
        _raise_nonfinite(per_pair, "objective")
    return value


def exponential_nll(pc: PathCountTable, p: PrepParameters) -> float:
    """Likelihood part of O: sum of lambda P - log lambda, no priors."""
    _check_shapes(pc, p)
    lam = rates(pc, p)
    per_pair = (lam * pc.counts - np.log(lam)).sum(axis=1)
    value = float(per_pair.sum())
    if not np.isfinite(value):
        _raise_nonfinite(per_pair, "likelihood")
    return value


def update_eta(
    pc: PathCountTable, p: PrepParameters, clamp: float = ETA_CLAMP
) -> np.ndarray:
    """Exact minimiser of O over eta with the other blocks fixed."""
    _check_shapes(pc, p)
    tau = pair_visibility(pc, p)
    scaled = pc.counts / (tau[:, np.newaxis] * pattern_mixture(p))
    means = scaled.mean(axis=0)
    eta = np.full(pc.num_metapaths, clamp)
    live = means > 0
    eta[live] = 1.0 / means[live]
    if np.any(~live):
        logger.debug(
            "Meta-paths without instances clamped to eta=%g: %s",
            clamp,
            [pc.metapath_ids[i] for i in np.flatnonzero(~live)],
        )
    if not np.all(np.isfinite(eta)):
        raise NumericalError("non-finite path selectivity")
    return eta


def positive_root(
    b: np.ndarray | float, c: np.ndarray | float, floor: float = RHO_FLOOR
) -> np.ndarray:
    """Positive root of ``x**2 + b*x - c = 0`` for ``c >= 0``.

    The cancellation-free branch is picked by the sign of ``b``; the result
    never drops below ``floor``.
    """
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    disc = np.sqrt(b * b + 4.0 * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        from_positive_b = np.where(b + disc > 0, 2.0 * c / (b + disc), 0.0)
    root = np.where(b > 0, from_positive_b, (disc - b) / 2.0)
    return np.maximum(root, floor)


def _rho_linear_coefficient(
    pc: PathCountTable, h: PrepHyperparams
) -> np.ndarray:
    return pc.degrees * pc.num_metapaths - (h.alpha_value - 1.0)


def _pair_weight_matrix(
    pc: PathCountTable, p: PrepParameters
) -> sp.csr_matrix:
    xi = pair_weights(pc, p)
    u, v = pc.pairs[:, 0], pc.pairs[:, 1]
    n = pc.num_nodes
    rows = np.concatenate((u, v))
    cols = np.concatenate((v, u))
    return sp.coo_matrix(
        (np.concatenate((xi, xi)), (rows, cols)), shape=(n, n)
    ).tocsr()


def optimal_rho_coordinate(
    pc: PathCountTable,
    p: PrepParameters,
    h: PrepHyperparams,
    node: str | int,
) -> float:
    """Minimiser of O over one visibility with everything else fixed."""
    _check_shapes(pc, p)
    z = pc.node_index[node] if isinstance(node, str) else int(node)
    rows = pc.incidence[z].indices
    if len(rows) == 0:
        return float(p.rho[z])
    xi = pair_weights(pc, p)[rows]
    pairs = pc.pairs[rows]
    partners = np.where(pairs[:, 0] == z, pairs[:, 1], pairs[:, 0])
    b = pc.degrees[z] * pc.num_metapaths - (h.alpha_value - 1.0)
    c = float((xi / p.rho[partners]).sum())
    return float(positive_root(b, c, h.rho_floor))


def color_classes(pc: PathCountTable) -> list[np.ndarray]:
    """Greedy colouring of the pair graph, nodes without pairs left out.

    Two nodes of one class never share a pair, so a whole class can be
    solved at once with the same result as visiting it node by node.
    """
    neighbours: list[list[int]] = [[] for _ in range(pc.num_nodes)]
    for u, v in pc.pairs.tolist():
        neighbours[u].append(v)
        neighbours[v].append(u)
    colors = np.full(pc.num_nodes, -1, dtype=np.int64)
    for z in range(pc.num_nodes):
        if not neighbours[z]:
            continue
        taken = {int(colors[w]) for w in neighbours[z]}
        color = 0
        while color in taken:
            color += 1
        colors[z] = color
    num_colors = int(colors.max()) + 1 if pc.num_pairs else 0
    return [np.flatnonzero(colors == c) for c in range(num_colors)]


def update_rho(
    pc: PathCountTable,
    p: PrepParameters,
    h: PrepHyperparams,
    classes: t.Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Coordinate sweeps of the closed-form visibility update.

    Each node takes the positive root of
    ``rho**2 + (deg(u) T - (alpha - 1)) rho - sum_v xi_s / rho_v = 0``;
    sweeps repeat until the largest relative change drops below
    ``h.inner_tol`` or ``h.max_inner`` sweeps have run. Nodes without pairs
    keep their value.
    """
    _check_shapes(pc, p)
    if classes is None:
        classes = color_classes(pc)
    weights = _pair_weight_matrix(pc, p)
    blocks = [(members, weights[members]) for members in classes]
    b = _rho_linear_coefficient(pc, h)
    rho = np.array(p.rho, dtype=np.float64)

    for sweep in range(1, h.max_inner + 1):
        change = 0.0
        for members, block in blocks:
            c = block @ (1.0 / rho)
            updated = positive_root(b[members], c, h.rho_floor)
            change = max(
                change,
                float(np.max(np.abs(updated - rho[members]) / rho[members])),
            )
            rho[members] = updated
        if not np.all(np.isfinite(rho)):
            raise NumericalError("non-finite node visibility")
        if change < h.inner_tol:
            logger.debug("rho converged after %d sweeps", sweep)
            break
    return rho


def _residual(pc: PathCountTable, p: PrepParameters) -> np.ndarray:
    """1/psi - eta P / (tau psi^2): shared factor of both gradients."""
    psi = pattern_mixture(p)
    tau = pair_visibility(pc, p)
    return 1.0 / psi - p.eta[np.newaxis, :] * pc.counts / (
        tau[:, np.newaxis] * psi * psi
    )


def grad_theta(pc: PathCountTable, p: PrepParameters) -> np.ndarray:
    """dO/dtheta, a K x T table."""
    _check_shapes(pc, p)
    residual = _residual(pc, p)
    if not np.all(np.isfinite(residual)):
        _raise_nonfinite(residual.sum(axis=1), "theta gradient")
    return p.phi.T @ residual


def weighted_counts(pc: PathCountTable, p: PrepParameters) -> np.ndarray:
    """eta_t P_st / tau_s for every pair and meta-path."""
    tau = pair_visibility(pc, p)
    return p.eta[np.newaxis, :] * pc.counts / tau[:, np.newaxis]


def phi_gradient(
    phi: np.ndarray, theta: np.ndarray, weighted: np.ndarray, beta: float
) -> np.ndarray:
    """dO/dphi of the given rows from their ``weighted_counts`` rows."""
    psi = phi @ theta
    return (1.0 / psi - weighted / (psi * psi)) @ theta.T - (
        beta - 1.0
    ) / phi


def grad_phi(
    pc: PathCountTable, p: PrepParameters, h: PrepHyperparams
) -> np.ndarray:
    """dO/dphi for every row at once, an |S| x K table."""
    _check_shapes(pc, p)
    grad = phi_gradient(p.phi, p.theta, weighted_counts(pc, p), h.beta)
    if not np.all(np.isfinite(grad)):
        _raise_nonfinite(grad.sum(axis=1), "phi gradient")
    return grad


def grad_phi_row(
    pc: PathCountTable, p: PrepParameters, s: int, h: PrepHyperparams
) -> np.ndarray:
    """dO/dphi_s for one pair."""
    _check_shapes(pc, p)
    tau = p.rho[pc.pairs[s, 0]] * p.rho[pc.pairs[s, 1]]
    weighted = p.eta * pc.counts[s] / tau
    grad = phi_gradient(
        p.phi[s : s + 1], p.theta, weighted[np.newaxis, :], h.beta
    )[0]
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite phi gradient", pair_index=int(s))
    return grad


def estimate_alpha(
    totals: t.Mapping[str, float] | t.Sequence[float] | np.ndarray,
) -> float:
    """Method-of-moments Gamma shape (rate fixed at 1) of node totals."""
    values = np.asarray(
        list(totals.values()) if isinstance(totals, t.Mapping) else totals,
        dtype=np.float64,
    )
    values = values[values > 0]
    if len(values) < 2:
        raise InputError(
            "estimating alpha needs at least two nodes with positive totals"
        )
    mean = float(values.mean())
    variance = float(values.var())
    low, high = ALPHA_BOUNDS
    if variance <= 0.0:
        logger.warning(
            "All node totals equal %g; falling back to alpha = mean", mean
        )
        return float(np.clip(mean, low, high))
    return float(np.clip(mean * mean / variance, low, high))


def resolve_alpha(pc: PathCountTable, h: PrepHyperparams) -> PrepHyperparams:
    """Replace ``alpha='auto'`` by the estimate from node totals."""
    if h.alpha != "auto":
        return h
    alpha = estimate_alpha(node_totals(pc))
    logger.info("Estimated alpha = %.6g from node total counts", alpha)
    return h.with_alpha(alpha)


def sample_from_model(
    p: PrepParameters,
    h: PrepHyperparams,
    pairs: t.Sequence[tuple[int, int]] | np.ndarray,
    node_ids: t.Sequence[str] | None = None,
) -> PathCountTable:
    """Draw P_st ~ Exp(eta_t / (tau_s psi_st)) for every pair and meta-path."""
    pair_arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if p.phi.shape[0] != len(pair_arr):
        raise ParameterError(
            f"phi has {p.phi.shape[0]} rows for {len(pair_arr)} pairs"
        )
    if node_ids is None:
        node_ids = [f"n{i}" for i in range(len(p.rho))]
    tau = p.rho[pair_arr[:, 0]] * p.rho[pair_arr[:, 1]]
    scale = tau[:, np.newaxis] * pattern_mixture(p) / p.eta[np.newaxis, :]
    rng = np.random.default_rng(h.seed)
    counts = rng.exponential(scale)
    num_t = p.num_metapaths
    return PathCountTable(
        tuple(node_ids),
        pair_arr,
        counts,
        np.zeros((len(node_ids), num_t)),
        tuple(f"m{i + 1}" for i in range(num_t)),
        (True,) * num_t,
    )


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Parameters read back from disk together with their keys."""

    params: PrepParameters
    node_ids: tuple[str, ...]
    pair_ids: tuple[tuple[str, str], ...]
    metapath_ids: tuple[str, ...]
    header: Header

    def aligned(self, pc: PathCountTable) -> PrepParameters:
        """Parameters reordered to the node and pair order of ``pc``."""
        if tuple(self.metapath_ids) != tuple(pc.metapath_ids):
            raise InputError("checkpoint and count table meta-paths differ")
        node_pos = {z: i for i, z in enumerate(self.node_ids)}
        pair_pos = {pair: i for i, pair in enumerate(self.pair_ids)}
        try:
            rho_order = [node_pos[z] for z in pc.node_ids]
            phi_order = []
            for row in range(pc.num_pairs):
                u, v = pc.pair_ids(row)
                phi_order.append(
                    pair_pos[(u, v)]
                    if (u, v) in pair_pos
                    else pair_pos[(v, u)]
                )
        except KeyError as exc:
            raise InputError(
                f"checkpoint does not cover the count table: {exc}"
            )
        return self.params.replace(
            rho=self.params.rho[rho_order], phi=self.params.phi[phi_order]
        )


def write_checkpoint(
    pc: PathCountTable,
    p: PrepParameters,
    h: PrepHyperparams,
    path: str | Path,
    header: Header,
) -> Path:
    """Write [eta], [rho], [phi] and [theta] sections, floats via repr."""
    _check_shapes(pc, p)
    header.kind = CHECKPOINT_KIND
    header.add("alpha", format_float(h.alpha_value))
    header.add("beta", format_float(h.beta))
    header.add("k", p.k)
    header.add("delta", format_float(h.delta))
    header.add(
        "popularity", *(format_float(x) for x in pattern_popularity(p))
    )

    def rows() -> t.Iterator[t.Sequence[str] | str]:
        yield "[eta]"
        for name, value in zip(pc.metapath_ids, p.eta):
            yield (name, format_float(value))
        yield "[rho]"
        for z, value in zip(pc.node_ids, p.rho):
            yield (z, format_float(value))
        yield "[phi]"
        for row in range(pc.num_pairs):
            u, v = pc.pair_ids(row)
            yield (u, v, *(format_float(x) for x in p.phi[row]))
        yield "[theta]"
        for k, values in enumerate(p.theta):
            yield (str(k + 1), *(format_float(x) for x in values))

    return write_artifact(path, header, rows())


def read_checkpoint(path: str | Path) -> Checkpoint:
    artifact = read_artifact(path, CHECKPOINT_KIND)
    sections: dict[str, list[tuple[int, list[str]]]] = {
        name: [] for name in _SECTIONS
    }
    current: str | None = None
    for record in artifact.records:
        fields = record.fields
        if len(fields) == 1 and fields[0].startswith("["):
            name = fields[0].strip("[]")
            if name not in sections:
                raise ParseError(
                    artifact.path,
                    record.line_number,
                    f"unknown section {name!r}",
                )
            current = name
            continue
        if current is None:
            raise ParseError(
                artifact.path, record.line_number, "data before any section"
            )
        sections[current].append((record.line_number, fields))

    def numbers(line: int, texts: list[str]) -> list[float]:
        return [parse_float(x, artifact.path, line) for x in texts]

    metapath_ids = tuple(f[0] for _, f in sections["eta"])
    eta = [numbers(line, f[1:])[0] for line, f in sections["eta"]]
    node_ids = tuple(f[0] for _, f in sections["rho"])
    rho = [numbers(line, f[1:])[0] for line, f in sections["rho"]]
    pair_ids = tuple((f[0], f[1]) for _, f in sections["phi"])
    phi = [numbers(line, f[2:]) for line, f in sections["phi"]]
    theta = [numbers(line, f[1:]) for line, f in sections["theta"]]
    k = len(theta)

    params = PrepParameters(
        eta=np.asarray(eta),
        rho=np.asarray(rho),
        phi=np.asarray(phi, dtype=np.float64).reshape(-1, k),
        theta=np.asarray(theta, dtype=np.float64).reshape(k, len(eta)),
    )
    return Checkpoint(
        params, node_ids, pair_ids, metapath_ids, artifact.header
    )


def hyperparams_from_header(
    header: Header, **extra: t.Any
) -> PrepHyperparams:
    """Scoring-relevant hyperparameters recorded in a checkpoint."""
    values: dict[str, t.Any] = dict(extra)
    for key in ("alpha", "beta", "delta"):
        text = header.first(key)
        if text is not None:
            values[key] = float(text)
    k = header.first("k")
    if k is not None:
        values["k"] = int(k)
    return PrepHyperparams(**values)
