"""MAP inference for PReP by block coordinate descent.

Every outer iteration updates eta (closed form), rho (inner coordinate
sweeps), phi (row-parallel projected gradient descent) and theta (projected
gradient descent), in that order. Each block update never increases the
objective, which is recorded after every block.
"""

import logging
import typing as t
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Final

import numpy as np

from .config import PrepHyperparams, Variant
from .counting import PathCountTable
from .exceptions import NumericalError, ParameterError
from .model import (
    PrepParameters,
    color_classes,
    grad_theta,
    objective,
    pattern_popularity,
    phi_gradient,
    resolve_alpha,
    update_eta,
    update_rho,
    weighted_counts,
)
from .projection import project_rows

logger = logging.getLogger(__name__)

BLOCKS: Final = ("eta", "rho", "phi", "theta")
FROZEN_BLOCKS: Final[dict[str, frozenset[str]]] = {
    "full": frozenset(),
    "no-nv": frozenset({"rho"}),
    "no-ps": frozenset({"eta"}),
    "no-cs": frozenset({"phi", "theta"}),
}
_TINY: Final = 1e-300


@dataclass(frozen=True)
class TraceEntry:
    """Objective after one outer iteration and the change each block made."""

    iteration: int
    objective: float
    eta: float
    rho: float
    phi: float
    theta: float

    def deltas(self) -> tuple[float, float, float, float]:
        return self.eta, self.rho, self.phi, self.theta


@dataclass(frozen=True, eq=False)
class FitResult:
    params: PrepParameters
    trace: tuple[TraceEntry, ...]
    hyperparams: PrepHyperparams
    variant: str
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def objective(self) -> float:
        return self.trace[-1].objective if self.trace else float("nan")


def _relative(change: float, reference: float) -> float:
    return abs(change) / max(abs(reference), _TINY)


def _theta_terms(
    phi: np.ndarray,
    theta: np.ndarray,
    weighted: np.ndarray,
) -> float:
    """Theta-dependent part of O; ``weighted`` is eta P / tau."""
    psi = phi @ theta
    return float((np.log(psi) + weighted / psi).sum())


def _phi_row_terms(
    phi: np.ndarray,
    theta: np.ndarray,
    weighted: np.ndarray,
    beta: float,
) -> np.ndarray:
    """Per-row part of O that depends on phi_s."""
    psi = phi @ theta
    return (
        -(beta - 1.0) * np.log(phi).sum(axis=1)
        + (np.log(psi) + weighted / psi).sum(axis=1)
    )


def pgd_update_theta(
    pc: PathCountTable, p: PrepParameters, h: PrepHyperparams
) -> np.ndarray:
    """Projected gradient steps on theta with Armijo backtracking."""
    theta = np.array(p.theta)
    if theta.shape[1] == 1:
        return theta
    weighted = weighted_counts(pc, p)
    current = _theta_terms(p.phi, theta, weighted)

    for _ in range(h.pgd_steps):
        grad = grad_theta(pc, p.replace(theta=theta))
        if not np.any(grad):
            break
        step = h.initial_step
        for _ in range(h.max_halvings + 1):
            candidate = project_rows(theta - step * grad, h.delta)
            direction = candidate - theta
            if not np.any(direction):
                return theta
            value = _theta_terms(p.phi, candidate, weighted)
            bound = current + h.armijo * float((grad * direction).sum())
            if np.isfinite(value) and value <= bound:
                break
            step /= 2.0
        else:
            logger.warning(
                "theta line search stalled after %d halvings", h.max_halvings
            )
            break
        improvement = current - value
        theta, current = candidate, value
        if _relative(improvement, current) < h.outer_tol:
            break
    return theta


def _pgd_phi_rows(
    phi: np.ndarray,
    theta: np.ndarray,
    weighted: np.ndarray,
    h: PrepHyperparams,
) -> tuple[np.ndarray, int]:
    """Row-wise PGD on a chunk of phi; returns the rows and stall count."""
    phi = np.array(phi)
    n = len(phi)
    beta = h.beta
    current = _phi_row_terms(phi, theta, weighted, beta)
    active = np.ones(n, dtype=bool)
    stalled = 0

    for _ in range(h.pgd_steps):
        rows = np.flatnonzero(active)
        if not len(rows):
            break
        grad = phi_gradient(phi[rows], theta, weighted[rows], beta)
        if not np.all(np.isfinite(grad)):
            bad = rows[np.flatnonzero(~np.all(np.isfinite(grad), axis=1))[0]]
            raise NumericalError(
                "non-finite phi gradient", pair_index=int(bad)
            )

        steps = np.full(len(rows), h.initial_step)
        pending = np.ones(len(rows), dtype=bool)
        for _ in range(h.max_halvings + 1):
            idx = np.flatnonzero(pending)
            if not len(idx):
                break
            sub = rows[idx]
            candidate = project_rows(
                phi[sub] - steps[idx, np.newaxis] * grad[idx], h.delta
            )
            direction = candidate - phi[sub]
            still = ~np.any(direction, axis=1)
            value = _phi_row_terms(candidate, theta, weighted[sub], beta)
            bound = current[sub] + h.armijo * (grad[idx] * direction).sum(
                axis=1
            )
            ok = np.isfinite(value) & (value <= bound) & ~still

            # rows whose projected step does not move are at a fixed point
            active[sub[still]] = False
            pending[idx[still]] = False

            accepted = sub[ok]
            improvement = current[accepted] - value[ok]
            phi[accepted] = candidate[ok]
            current[accepted] = value[ok]
            slow = improvement / np.maximum(np.abs(value[ok]), _TINY)
            active[accepted[slow < h.outer_tol]] = False
            pending[idx[ok]] = False
            steps[idx[~ok]] /= 2.0

        if pending.any():
            stalled += int(pending.sum())
            active[rows[pending]] = False
    return phi, stalled


def pgd_update_phi(
    pc: PathCountTable, p: PrepParameters, h: PrepHyperparams
) -> np.ndarray:
    """Independent projected gradient descent on every row of phi.

    Rows are split into ``h.threads`` contiguous chunks that run
    concurrently and are merged back in order.
    """
    if p.phi.shape[1] == 1:
        return np.array(p.phi)
    weighted = weighted_counts(pc, p)
    theta = np.asarray(p.theta)
    chunks = np.array_split(np.arange(pc.num_pairs), max(1, h.threads))
    chunks = [c for c in chunks if len(c)]

    def run(rows: np.ndarray) -> tuple[np.ndarray, int]:
        return _pgd_phi_rows(p.phi[rows], theta, weighted[rows], h)

    with ThreadPoolExecutor(max_workers=max(1, h.threads)) as pool:
        results = list(pool.map(run, chunks))

    phi = np.concatenate([rows for rows, _ in results], axis=0)
    stalled = sum(count for _, count in results)
    if stalled:
        logger.warning(
            "phi line search stalled on %d row updates after %d halvings",
            stalled,
            h.max_halvings,
        )
    return phi


def _uniform(rows: int, cols: int) -> np.ndarray:
    return np.full((rows, cols), 1.0 / cols)


class PrepInference:
    """Block coordinate descent on the PReP objective.

    ``variant`` selects an ablation whose blocks stay frozen at their
    constants: ``no-nv`` keeps rho at one, ``no-ps`` keeps eta at one and
    ``no-cs`` keeps phi and theta uniform. ``frozen`` freezes extra blocks
    at their initial values.
    """

    def __init__(
        self,
        pc: PathCountTable,
        h: PrepHyperparams,
        variant: Variant | str = "full",
        frozen: t.Iterable[str] = (),
    ) -> None:
        if variant not in FROZEN_BLOCKS:
            raise ParameterError(f"unknown variant {variant!r}")
        extra = frozenset(frozen)
        unknown = extra - frozenset(BLOCKS)
        if unknown:
            raise ParameterError(f"unknown blocks {sorted(unknown)}")
        if pc.num_pairs == 0:
            raise ParameterError("cannot fit an empty path count table")
        self.pc = pc
        self.h = resolve_alpha(pc, h)
        self.variant = variant
        self.frozen = FROZEN_BLOCKS[variant] | extra
        self._classes: list[np.ndarray] | None = None

    @property
    def classes(self) -> list[np.ndarray]:
        if self._classes is None:
            self._classes = color_classes(self.pc)
        return self._classes

    def initial_parameters(self) -> PrepParameters:
        """Seeded start point: rho from the prior, phi uniform at random,
        theta identity on its first rows."""
        pc, h = self.pc, self.h
        k, num_t = h.k, pc.num_metapaths
        rng = np.random.default_rng(h.seed)

        rho = np.maximum(
            rng.gamma(h.alpha_value, 1.0, pc.num_nodes), h.rho_floor
        )
        phi = project_rows(
            rng.dirichlet(np.ones(k), size=pc.num_pairs), h.delta
        )
        theta = np.empty((k, num_t))
        head = min(k, num_t)
        theta[:head] = np.eye(head, num_t)
        if k > num_t:
            theta[num_t:] = rng.dirichlet(np.ones(num_t), size=k - num_t)
        theta = project_rows(theta, h.delta)
        eta = np.ones(num_t)

        if self.variant == "no-nv":
            rho = np.ones(pc.num_nodes)
        if self.variant == "no-cs":
            phi = _uniform(pc.num_pairs, k)
            theta = _uniform(k, num_t)
        return PrepParameters(eta=eta, rho=rho, phi=phi, theta=theta)

    def update_block(self, block: str, p: PrepParameters) -> PrepParameters:
        pc, h = self.pc, self.h
        if block == "eta":
            return p.replace(eta=update_eta(pc, p, h.eta_clamp))
        if block == "rho":
            return p.replace(rho=update_rho(pc, p, h, self.classes))
        if block == "phi":
            return p.replace(phi=pgd_update_phi(pc, p, h))
        if block == "theta":
            return p.replace(theta=pgd_update_theta(pc, p, h))
        raise ParameterError(f"unknown block {block!r}")

    def _parameter_change(
        self, before: PrepParameters, after: PrepParameters
    ) -> float:
        change = 0.0
        for name in BLOCKS:
            old = getattr(before, name)
            new = getattr(after, name)
            scale = np.maximum(np.abs(old), _TINY)
            change = max(change, float(np.max(np.abs(new - old) / scale)))
        return change

    def run(self, start: PrepParameters | None = None) -> FitResult:
        h = self.h
        p = start if start is not None else self.initial_parameters()
        current = objective(self.pc, p, h)
        trace: list[TraceEntry] = []
        converged = False
        logger.info(
            "Fitting %s model: |V|=%d |S|=%d T=%d K=%d alpha=%.6g beta=%g",
            self.variant,
            self.pc.num_nodes,
            self.pc.num_pairs,
            self.pc.num_metapaths,
            h.k,
            h.alpha_value,
            h.beta,
        )

        for iteration in range(1, h.max_outer + 1):
            start_value, start_params = current, p
            deltas = dict.fromkeys(BLOCKS, 0.0)
            try:
                for block in BLOCKS:
                    if block in self.frozen:
                        continue
                    p = self.update_block(block, p)
                    value = objective(self.pc, p, h)
                    deltas[block] = value - current
                    current = value
            except NumericalError as exc:
                raise exc.at_iteration(iteration) from exc

            trace.append(TraceEntry(iteration, current, **deltas))
            logger.debug(
                "iteration %d: O=%.12g (eta %+.3g, rho %+.3g, phi %+.3g, "
                "theta %+.3g)",
                iteration,
                current,
                *trace[-1].deltas(),
            )
            if h.convergence == "objective":
                change = _relative(current - start_value, start_value)
                done = change < h.outer_tol
            else:
                done = self._parameter_change(start_params, p) < h.outer_tol
            if done:
                converged = True
                break

        if converged:
            logger.info(
                "Converged after %d iterations, O=%.12g", len(trace), current
            )
        else:
            logger.warning(
                "Stopped at the %d-iteration cap, O=%.12g",
                h.max_outer,
                current,
            )
        logger.info(
            "Pattern popularity: %s",
            np.array2string(pattern_popularity(p), precision=4),
        )
        return FitResult(p, tuple(trace), h, self.variant, converged)


def fit(pc: PathCountTable, h: PrepHyperparams) -> PrepParameters:
    """MAP estimate of the PReP parameters."""
    return PrepInference(pc, h).run().params
