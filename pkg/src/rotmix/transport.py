"""Cost matrices and transport-plan updates over the row-constrained polytope.

A plan is an ``(n, k)`` nonnegative array whose row ``i`` sums to the
empirical mass ``upsilon[i]``; column sums are left free.  Because the row
constraints decouple, every solver below works row by row (vectorized over
rows with numpy).

Three regularizers are supported:

* ``none``      -- lambda = 0, hard assignment to the cheapest column;
* ``entropic``  -- phi(pi) = sum pi (log pi - 1), closed-form softmax rows;
* ``quadratic`` -- phi(pi) = 0.5 * sum pi**2, Euclidean projection of each
  row onto the scaled simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DomainError
from .exponential_family import ConvexFunction, log_density, to_natural

# Below this lambda the entropic update is replaced by the hard one.
LAMBDA_MIN = 1e-12

REGULARIZER_KINDS = ("none", "entropic", "quadratic")


def entropic_phi(pi) -> float:
    """``sum pi (log pi - 1)`` with the convention ``0 (log 0 - 1) = 0``."""
    pi = np.asarray(pi, dtype=float)
    return float(np.sum(xlogy(pi, pi) - pi))


def entropic_grad(pi):
    return np.log(pi)


def quadratic_phi(pi) -> float:
    return 0.5 * float(np.sum(np.square(pi)))


def quadratic_grad(pi):
    return np.asarray(pi, dtype=float)


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str
    lam: float

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise DomainError(f"unknown regularizer {self.kind!r}", predicate="regularizer")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DomainError(f"lambda must be finite and nonnegative, got {self.lam!r}",
                              predicate="lambda")
        if (self.kind == "none") != (self.lam < LAMBDA_MIN):
            raise DomainError(f"regularizer kind {self.kind!r} inconsistent with lambda={self.lam!r}",
                              predicate="lambda")

    def phi(self, pi) -> float:
        if self.kind == "entropic":
            return entropic_phi(pi)
        if self.kind == "quadratic":
            return quadratic_phi(pi)
        return 0.0

    @property
    def potential(self) -> ConvexFunction | None:
        if self.kind == "entropic":
            return ConvexFunction(lambda p: np.sum(xlogy(p, p) - p, axis=-1), entropic_grad)
        if self.kind == "quadratic":
            return ConvexFunction(lambda p: 0.5 * np.sum(np.square(p), axis=-1), quadratic_grad)
        return None

    def penalty(self, pi) -> float:
        """``lambda * phi(pi)``; zero for the unregularized case."""
        if self.kind == "none":
            return 0.0
        return self.lam * self.phi(pi)


def make_regularizer(kind: str, lam: float) -> RegularizerSpec:
    """Build a regularizer, collapsing to ``none`` when ``lam < LAMBDA_MIN``."""
    lam = float(lam)
    if lam < LAMBDA_MIN and lam >= 0:
        return RegularizerSpec("none", lam)
    if kind == "none":
        raise DomainError("regularizer 'none' requires lambda = 0", predicate="lambda")
    return RegularizerSpec(kind, lam)


def log_weighted_likelihood(family, omega, xis, points) -> np.ndarray:
    """``log omega_j + log p_{xi_j}(x_i)`` as an ``(n, k)`` array."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        j = int(np.flatnonzero(omega <= 0)[0])
        raise DomainError(f"component {j} has zero weight; prune it before building costs",
                          predicate="omega")
    thetas = to_natural(family, xis)
    points = np.asarray(points, dtype=float)
    ll = log_density(family, thetas[None, :, :], points[:, None, :])
    return np.log(omega)[None, :] + ll


def cost_matrix(family, model, data) -> np.ndarray:
    """``gamma_ij = -log(omega_j p_{xi_j}(x_i))``."""
    return -log_weighted_likelihood(family, model.omega, model.xis, data.points)


def _renormalize_rows(pi, upsilon):
    sums = pi.sum(axis=1)
    return pi * (upsilon / sums)[:, None]


def estep_hard(gamma, upsilon) -> np.ndarray:
    """Put each row's mass on its cheapest column (lowest index on ties)."""
    gamma = np.asarray(gamma, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    if not np.all(np.isfinite(gamma)):
        raise DomainError("cost matrix has non-finite entries", predicate="gamma")
    winners = np.argmin(gamma, axis=1)  # argmin returns the first minimum
    pi = np.zeros_like(gamma)
    pi[np.arange(gamma.shape[0]), winners] = upsilon
    return pi


def entropic_rows(gamma, upsilon, lam) -> np.ndarray:
    """Row-wise softmax of ``-gamma / lam`` scaled to the row masses.

    Evaluated in the log domain with max subtraction; falls back to the hard
    assignment when ``lam < LAMBDA_MIN``.
    """
    gamma = np.asarray(gamma, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    if lam < LAMBDA_MIN:
        return estep_hard(gamma, upsilon)
    s = -gamma / lam
    s -= s.max(axis=1, keepdims=True)
    w = np.exp(s)
    return _renormalize_rows(w, upsilon)


def estep_entropic(family, model, data, lam) -> np.ndarray:
    return entropic_rows(cost_matrix(family, model, data), data.upsilon, lam)


def project_simplex_rows(v, z) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto ``{p >= 0, sum p = z_i}``.

    Sort-and-threshold algorithm: with ``u`` the row sorted descending, the
    threshold is ``(cumsum(u)[rho] - z) / (rho + 1)`` for the largest ``rho``
    where it stays below ``u[rho]``.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), (v.shape[0],))
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - z[:, None]
    idx = np.arange(1, v.shape[1] + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1)
    tau = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - tau[:, None], 0.0)


def estep_quadratic(gamma, upsilon, lam) -> np.ndarray:
    """Rows minimizing ``<pi_i, gamma_i> + lam/2 ||pi_i||^2`` with ``sum pi_i = upsilon_i``."""
    if not lam > 0:
        raise DomainError("quadratic E-step needs lambda > 0; use estep_hard for lambda = 0",
                          predicate="lambda")
    gamma = np.asarray(gamma, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    pi = project_simplex_rows(-gamma / lam, upsilon)
    return _renormalize_rows(pi, upsilon)


def estep(family, model, data, regularizer: RegularizerSpec) -> np.ndarray:
    """Dispatch the plan update on the regularizer kind."""
    gamma = cost_matrix(family, model, data)
    return solve_rows(gamma, data.upsilon, regularizer)


def solve_rows(gamma, upsilon, regularizer: RegularizerSpec) -> np.ndarray:
    if regularizer.kind == "none":
        return estep_hard(gamma, upsilon)
    if regularizer.kind == "entropic":
        return entropic_rows(gamma, upsilon, regularizer.lam)
    return estep_quadratic(gamma, upsilon, regularizer.lam)


def bregman_projection_check(pi_star, tilde_pi, phi=None) -> float:
    """``B_phi(pi_star || tilde_pi)`` summed over all entries.

    ``phi`` defaults to the entropic potential, for which this is the
    generalized Kullback-Leibler divergence.
    """
    if phi is None:
        phi = RegularizerSpec("entropic", 1.0).potential
    pi_star = np.asarray(pi_star, dtype=float)
    tilde_pi = np.asarray(tilde_pi, dtype=float)
    if np.any(pi_star <= 0) or np.any(tilde_pi <= 0):
        raise DomainError("Bregman projection check needs strictly positive matrices",
                          predicate="positivity")
    rows = phi.value(pi_star) - phi.value(tilde_pi) - np.sum(
        (pi_star - tilde_pi) * phi.grad(tilde_pi), axis=-1)
    return float(np.sum(rows))


def plan_entropy(pi) -> np.ndarray:
    """Shannon entropy of each row of ``pi`` after dividing by its mass.

    Accumulated in extended precision and rounded once: near ties and near
    the uniform limit the double-precision sum is off by an ulp, enough to
    reverse the ordering of entropies across nearby lambdas.
    """
    q = np.asarray(pi, dtype=np.longdouble)
    q = q / q.sum(axis=1, keepdims=True)
    logs = np.log(np.where(q > 0, q, 1))
    return (-np.sum(q * logs, axis=1)).astype(float)
