"""Alternating estimation of mixture weights and parameters.

Each iteration performs three exact block minimizations of

    F(pi, omega, Xi) = -sum_ij pi_ij log(omega_j p_{xi_j}(x_i)) + lam * phi(pi)

over ``pi`` (transport plan, rows summing to ``upsilon``), ``omega`` (column
sums of the plan) and ``Xi`` (weighted means of the data), so the recorded
objective never increases.  ``lam = 0`` gives k-means style hard
assignments, ``lam = 1`` with the entropic regularizer gives EM, and a very
large ``lam`` drives the weights to ``1/k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import (DataError, DegenerateFitError, DomainError,
                     NonFiniteObjectiveError, SeedingError)
from .exponential_family import (FamilySpec, check_data, clamp_expectation,
                                 dual_bregman_data_div)
from .transport import (RegularizerSpec, log_weighted_likelihood,
                        make_regularizer, plan_entropy, solve_rows)

logger = logging.getLogger(__name__)

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERS = "max_iters"
STATUS_DEGENERATE = "degenerate"

INIT_METHODS = ("kmeanspp", "random_points")


@dataclass(frozen=True)
class Dataset:
    """Observations ``points`` (n, d) with empirical weights ``upsilon``."""

    points: np.ndarray
    upsilon: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        upsilon = np.asarray(self.upsilon, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise DataError(f"points must be a nonempty (n, d) array, got shape {points.shape}")
        if upsilon.shape != (points.shape[0],):
            raise DataError(f"upsilon has shape {upsilon.shape}, expected ({points.shape[0]},)")
        if np.any(~np.isfinite(upsilon)) or np.any(upsilon <= 0):
            raise DataError("empirical weights must be positive and finite")
        if abs(upsilon.sum() - 1.0) > 1e-12:
            raise DataError(f"empirical weights sum to {upsilon.sum()!r}, not 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "upsilon", upsilon)

    @classmethod
    def uniform(cls, points) -> "Dataset":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n) if n else np.zeros(0))

    @classmethod
    def weighted(cls, points, weights) -> "Dataset":
        weights = np.asarray(weights, dtype=float)
        return cls(points, weights / weights.sum())

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class MixtureModel:
    family: FamilySpec
    omega: np.ndarray
    xis: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        xis = np.asarray(self.xis, dtype=float)
        if xis.ndim == 1:
            xis = xis[:, None]
        if omega.ndim != 1 or xis.shape != (omega.shape[0], self.family.dim):
            raise DomainError(f"omega shape {omega.shape} and xis shape {xis.shape} "
                              f"do not describe k components of dimension {self.family.dim}",
                              predicate="shape")
        if np.any(~np.isfinite(omega)) or np.any(omega < 0) or abs(omega.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights {omega.tolist()} are not on the simplex", predicate="omega")
        if not np.all(self.family.expectation_domain(xis)):
            raise DomainError("expectation parameters outside the open domain",
                              predicate="expectation_domain")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "xis", xis)

    @property
    def k(self) -> int:
        return self.omega.shape[0]


@dataclass
class FitConfig:
    lam: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-8
    seed: int = 0
    init: str = "kmeanspp"
    prune_threshold: float = 1e-12
    regularizer: str = "entropic"

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol!r}", predicate="rel_tol")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError(f"max_iters must be a positive integer, got {self.max_iters!r}",
                              predicate="max_iters")
        if self.init not in INIT_METHODS:
            raise DomainError(f"unknown init {self.init!r}", predicate="init")
        if self.prune_threshold < 0:
            raise DomainError("prune_threshold must be nonnegative", predicate="prune_threshold")
        self.regularizer_spec()

    def regularizer_spec(self) -> RegularizerSpec:
        return make_regularizer(self.regularizer, self.lam)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    omega: np.ndarray
    mean_entropy: float
    k_active: int


@dataclass
class FitTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = STATUS_MAX_ITERS
    # Objective after a closing plan update at the returned parameters, i.e.
    # the value obtained by evaluating the returned model from scratch.
    final_objective: float = float("nan")

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def iterations(self) -> int:
        return len(self.records)


def objective(family, model, plan, data, regularizer: RegularizerSpec) -> float:
    """Relaxed transport objective with the ``0 log 0 = 0`` convention."""
    plan = np.asarray(plan, dtype=float)
    omega = model.omega
    used = plan.sum(axis=0) > 0
    if np.any(used & (omega <= 0)):
        j = int(np.flatnonzero(used & (omega <= 0))[0])
        raise DegenerateFitError(f"component {j} carries plan mass but has zero weight")
    keep = omega > 0
    ll = log_weighted_likelihood(family, omega[keep], model.xis[keep], data.points)
    p = plan[:, keep]
    cross = -np.sum(np.where(p > 0, p * ll, 0.0))
    return float(cross + regularizer.penalty(plan))


def weight_update(plan) -> np.ndarray:
    """Column sums of the plan, the exact maximizer of ``sum pi_ij log omega_j``."""
    return np.asarray(plan, dtype=float).sum(axis=0)


def m_step(family, plan, omega, data) -> np.ndarray:
    """Plan-weighted data means, clamped into the expectation domain."""
    plan = np.asarray(plan, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        j = int(np.flatnonzero(omega <= 0)[0])
        raise DegenerateFitError(f"component {j} has zero weight; prune before the M-step")
    xis = (plan.T @ data.points) / omega[:, None]
    xis, _ = clamp_expectation(family, xis)
    return xis


def prune(model: MixtureModel, plan, threshold: float = 1e-12):
    """Drop components whose weight is at most ``threshold``.

    Remaining weights are renormalized and the plan loses the matching
    columns (rows are rescaled back to their masses).
    """
    plan = np.asarray(plan, dtype=float)
    keep = model.omega > threshold
    if keep.all():
        return model, plan
    if not keep.any():
        raise DegenerateFitError("every component was pruned")
    row_mass = plan.sum(axis=1)
    plan = plan[:, keep]
    new_rows = plan.sum(axis=1)
    if np.any(new_rows <= 0):
        raise DegenerateFitError("pruning left an observation without any component")
    plan = plan * (row_mass / new_rows)[:, None]
    omega = model.omega[keep]
    omega = omega / omega.sum()
    logger.debug("pruned %d component(s)", int((~keep).sum()))
    return MixtureModel(model.family, omega, model.xis[keep]), plan


def _distinct_indices(points):
    _, first = np.unique(points, axis=0, return_index=True)
    return np.sort(first)


def init_kmeanspp(family, data, k, seed) -> MixtureModel:
    """Bregman k-means++ seeding under :func:`dual_bregman_data_div`.

    The first center is a uniformly drawn data point; each further center is
    drawn with probability proportional to the divergence of a point to its
    nearest chosen center.  Weights start uniform.
    """
    points = data.points
    n = points.shape[0]
    if k < 1:
        raise SeedingError(f"k must be positive, got {k}")
    n_distinct = _distinct_indices(points).size
    if k > n_distinct:
        raise SeedingError(f"cannot seed {k} components from {n_distinct} distinct data point(s)")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    nearest = _center_divergence(family, points, points[chosen[0]])
    for _ in range(1, k):
        total = nearest.sum()
        if not total > 0:
            raise SeedingError("all remaining points coincide with chosen centers")
        idx = int(rng.choice(n, p=nearest / total))
        chosen.append(idx)
        nearest = np.minimum(nearest, _center_divergence(family, points, points[idx]))
    xis, _ = clamp_expectation(family, points[chosen])
    return MixtureModel(family, np.full(k, 1.0 / k), xis)


def _center_divergence(family, points, center):
    xi, _ = clamp_expectation(family, center)
    div = dual_bregman_data_div(family, points, xi)
    # exact duplicates of a center must never be drawn again, even when
    # clamping leaves a tiny positive divergence
    div[np.all(points == center, axis=1)] = 0.0
    return div


def init_random_points(family, data, k, seed) -> MixtureModel:
    """``k`` distinct data rows drawn uniformly without replacement."""
    distinct = _distinct_indices(data.points)
    if k < 1 or k > distinct.size:
        raise SeedingError(f"cannot seed {k} components from {distinct.size} distinct data point(s)")
    rng = np.random.default_rng(seed)
    picks = rng.choice(distinct, size=k, replace=False)
    xis, _ = clamp_expectation(family, data.points[picks])
    return MixtureModel(family, np.full(k, 1.0 / k), xis)


def initialize(family, data, k, config: FitConfig) -> MixtureModel:
    if config.init == "kmeanspp":
        return init_kmeanspp(family, data, k, config.seed)
    return init_random_points(family, data, k, config.seed)


def validate_data(family, data):
    try:
        check_data(family, data.points)
    except DomainError as exc:
        bad = np.flatnonzero(~np.atleast_1d(family.data_domain(data.points)))
        raise DataError(str(exc), row=int(bad[0]) + 1 if bad.size else None) from exc


def fit(family: FamilySpec, data: Dataset, k: int, config: FitConfig | None = None, *,
        initial: MixtureModel | None = None,
        callback: Callable[[int, MixtureModel, np.ndarray], None] | None = None):
    """Run the alternating updates until the objective stalls.

    Parameters
    ----------
    family, data, k
        Component family, observations and number of components.
    config
        Solver settings; ``FitConfig()`` when omitted.
    initial
        Starting model.  When given, seeding is skipped and ``k`` must match.
    callback
        Called after every iteration as ``callback(t, model, plan)`` with the
        plan that produced ``model``.

    Returns
    -------
    (model, plan, trace)
        ``plan`` is recomputed at the returned parameters.
    """
    config = config or FitConfig()
    reg = config.regularizer_spec()
    if data.dim != family.dim:
        raise DomainError(f"data dimension {data.dim} does not match family dimension {family.dim}",
                          predicate="dim")
    validate_data(family, data)
    if initial is None:
        if data.n < k:
            raise DegenerateFitError(f"n={data.n} observations cannot support k={k} components")
        if np.all(data.points == data.points[0]):
            raise DegenerateFitError("all observations are identical")
        model = initialize(family, data, k, config)
    else:
        if initial.k != k:
            raise DomainError(f"initial model has {initial.k} components, expected {k}",
                              predicate="k")
        model = initial

    trace = FitTrace()
    prev = None
    for t in range(1, int(config.max_iters) + 1):
        plan = solve_rows(_costs(family, model, data, t, trace), data.upsilon, reg)
        omega = weight_update(plan)
        try:
            model, plan = prune(MixtureModel(family, omega, model.xis), plan,
                                config.prune_threshold)
        except DegenerateFitError as exc:
            trace.status = STATUS_DEGENERATE
            exc.trace = trace
            raise
        xis = m_step(family, plan, model.omega, data)
        model = MixtureModel(family, model.omega, xis)
        obj = objective(family, model, plan, data, reg)
        if not np.isfinite(obj):
            trace.status = STATUS_DEGENERATE
            raise NonFiniteObjectiveError(f"objective is {obj} at iteration {t}",
                                          iteration=t, trace=trace)
        trace.records.append(IterationRecord(
            iteration=t, objective=obj, omega=model.omega.copy(),
            mean_entropy=float(np.mean(plan_entropy(plan))), k_active=model.k))
        if callback is not None:
            callback(t, model, plan)
        if prev is not None and abs(obj - prev) <= config.rel_tol * (1.0 + abs(prev)):
            trace.status = STATUS_CONVERGED
            break
        prev = obj
    else:
        trace.status = STATUS_MAX_ITERS

    plan = solve_rows(_costs(family, model, data, None, trace), data.upsilon, reg)
    trace.final_objective = objective(family, model, plan, data, reg)
    return model, plan, trace


def _costs(family, model, data, iteration, trace):
    ll = log_weighted_likelihood(family, model.omega, model.xis, data.points)
    if not np.all(np.isfinite(ll)):
        j = int(np.flatnonzero(~np.all(np.isfinite(ll), axis=0))[0])
        trace.status = STATUS_DEGENERATE
        raise NonFiniteObjectiveError(f"non-finite log-likelihood for component {j}"
                                      + (f" at iteration {iteration}" if iteration else ""),
                                      iteration=iteration, component=j, trace=trace)
    return -ll


def evaluate(family, model, data, regularizer: RegularizerSpec):
    """One plan update at fixed parameters.

    Returns ``(objective, plan, nll, entropy)`` where ``nll`` holds
    ``-log sum_j omega_j p_j(x_i)`` per observation and ``entropy`` the
    per-row plan entropy.
    """
    validate_data(family, data)
    ll = log_weighted_likelihood(family, model.omega, model.xis, data.points)
    plan = solve_rows(-ll, data.upsilon, regularizer)
    obj = objective(family, model, plan, data, regularizer)
    nll = -logsumexp(ll, axis=1)
    return obj, plan, nll, plan_entropy(plan)
