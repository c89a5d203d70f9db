"""Exponential families in natural parametrization.

A family is described by its log-partition function ``psi`` and the maps
between natural coordinates ``theta`` and expectation coordinates
``xi = grad psi(theta)``.  Densities read::

    p_theta(x) = exp(<x, theta> - psi(theta)) * h(x)

All family callables act on the last axis, so a stack of parameters of shape
``(k, d)`` or observations of shape ``(n, d)`` is handled in one call.

Built-in families: ``gaussian_spherical`` (unit variance), ``poisson``,
``bernoulli`` and ``exponential``.  The last three are scalar by default; a
``dim > 1`` gives the product of independent coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit, gammaln, logit, xlogy

from .errors import ClampWarning, DomainError

# Expectation parameters are kept this far inside the boundary of their domain.
CLAMP_EPS = 1e-10

ArrayFn = Callable[[np.ndarray], np.ndarray]


class ConvexFunction(NamedTuple):
    """A differentiable convex potential, as consumed by :func:`bregman_div`."""

    value: ArrayFn
    grad: ArrayFn
    domain: ArrayFn | None = None


@dataclass(frozen=True)
class FamilySpec:
    name: str
    dim: int
    psi: ArrayFn
    grad_psi: ArrayFn
    grad_psi_inv: ArrayFn
    log_carrier: ArrayFn
    natural_domain: ArrayFn
    expectation_domain: ArrayFn
    data_domain: ArrayFn
    # Legendre conjugate of psi, with limiting values on the closure of the
    # expectation domain (0 log 0 = 0 and the like).
    psi_conj: ArrayFn
    clamp: ArrayFn
    discrete: bool = False

    @property
    def potential(self) -> ConvexFunction:
        return ConvexFunction(self.psi, self.grad_psi, self.natural_domain)

    def __repr__(self):
        return f"FamilySpec(name={self.name!r}, dim={self.dim})"


def _sum(values):
    return np.sum(values, axis=-1)


def _all(mask):
    return np.all(mask, axis=-1)


def _finite(a):
    return np.isfinite(a)


def gaussian_spherical(dim: int = 1) -> FamilySpec:
    """Unit-variance isotropic Gaussian in ``dim`` dimensions."""
    dim = _check_dim(dim)
    half_log_2pi = 0.5 * np.log(2.0 * np.pi)
    return FamilySpec(
        name="gaussian_spherical",
        dim=dim,
        psi=lambda t: 0.5 * _sum(np.square(t)),
        grad_psi=lambda t: np.array(t, dtype=float, copy=True),
        grad_psi_inv=lambda xi: np.array(xi, dtype=float, copy=True),
        log_carrier=lambda x: -0.5 * _sum(np.square(x)) - dim * half_log_2pi,
        natural_domain=lambda t: _all(_finite(t)),
        expectation_domain=lambda xi: _all(_finite(xi)),
        data_domain=lambda x: _all(_finite(x)),
        psi_conj=lambda y: 0.5 * _sum(np.square(y)),
        clamp=lambda xi: np.array(xi, dtype=float, copy=True),
    )


def poisson(dim: int = 1) -> FamilySpec:
    dim = _check_dim(dim)
    return FamilySpec(
        name="poisson",
        dim=dim,
        psi=lambda t: _sum(np.exp(t)),
        grad_psi=lambda t: np.exp(t),
        grad_psi_inv=lambda xi: np.log(xi),
        # log(x!) through log-gamma so large counts do not overflow
        log_carrier=lambda x: -_sum(gammaln(np.asarray(x, dtype=float) + 1.0)),
        natural_domain=lambda t: _all(_finite(t)),
        expectation_domain=lambda xi: _all(_finite(xi) & (xi > 0)),
        data_domain=lambda x: _all(_finite(x) & (x >= 0) & (np.floor(x) == x)),
        psi_conj=lambda y: _sum(xlogy(y, y) - y),
        clamp=lambda xi: np.maximum(xi, CLAMP_EPS),
        discrete=True,
    )


def bernoulli(dim: int = 1) -> FamilySpec:
    dim = _check_dim(dim)
    return FamilySpec(
        name="bernoulli",
        dim=dim,
        psi=lambda t: _sum(np.logaddexp(0.0, t)),
        grad_psi=lambda t: expit(t),
        grad_psi_inv=lambda xi: logit(xi),
        log_carrier=lambda x: np.zeros(np.shape(x)[:-1]),
        natural_domain=lambda t: _all(_finite(t)),
        expectation_domain=lambda xi: _all(_finite(xi) & (xi > 0) & (xi < 1)),
        data_domain=lambda x: _all((x == 0) | (x == 1)),
        psi_conj=lambda y: _sum(xlogy(y, y) + xlogy(1.0 - y, 1.0 - y)),
        clamp=lambda xi: np.clip(xi, CLAMP_EPS, 1.0 - CLAMP_EPS),
        discrete=True,
    )


def exponential(dim: int = 1) -> FamilySpec:
    """Exponential distribution with rate ``-theta`` (mean ``xi = -1/theta``)."""
    dim = _check_dim(dim)
    return FamilySpec(
        name="exponential",
        dim=dim,
        psi=lambda t: -_sum(np.log(-np.asarray(t, dtype=float))),
        grad_psi=lambda t: -1.0 / np.asarray(t, dtype=float),
        grad_psi_inv=lambda xi: -1.0 / np.asarray(xi, dtype=float),
        log_carrier=lambda x: np.zeros(np.shape(x)[:-1]),
        natural_domain=lambda t: _all(_finite(t) & (t < 0)),
        expectation_domain=lambda xi: _all(_finite(xi) & (xi > 0)),
        data_domain=lambda x: _all(_finite(x) & (x > 0)),
        psi_conj=lambda y: _sum(-1.0 - np.log(y)),
        clamp=lambda xi: np.maximum(xi, CLAMP_EPS),
    )


FAMILIES: dict[str, Callable[[int], FamilySpec]] = {
    "gaussian_spherical": gaussian_spherical,
    "poisson": poisson,
    "bernoulli": bernoulli,
    "exponential": exponential,
}


def get_family(name: str, dim: int = 1) -> FamilySpec:
    """Look up a built-in family by its string identifier."""
    try:
        factory = FAMILIES[name]
    except KeyError:
        known = ", ".join(sorted(FAMILIES))
        raise DomainError(f"unknown family {name!r} (expected one of {known})",
                          predicate="family_name") from None
    return factory(dim)


def _check_dim(dim):
    if int(dim) != dim or dim < 1:
        raise DomainError(f"family dimension must be a positive integer, got {dim!r}",
                          predicate="dim")
    return int(dim)


def _as_vectors(family, a, what):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.shape[-1] != family.dim:
        raise DomainError(
            f"{what} has trailing dimension {a.shape[-1]}, family {family.name} "
            f"expects {family.dim}", predicate="dim")
    return a


def _require(family, predicate_name, a, what):
    ok = getattr(family, predicate_name)(a)
    if not np.all(ok):
        bad = np.flatnonzero(~np.atleast_1d(ok))
        raise DomainError(
            f"{what} violates {family.name}.{predicate_name} "
            f"(first offending index {int(bad[0])})", predicate=predicate_name)


def check_data(family: FamilySpec, x) -> np.ndarray:
    """Return ``x`` as float vectors after checking the data domain."""
    x = _as_vectors(family, x, "observation")
    _require(family, "data_domain", x, "observation")
    return x


def log_density(family: FamilySpec, theta, x) -> np.ndarray:
    """Log-density ``<x, theta> - psi(theta) + log h(x)``.

    ``theta`` and ``x`` broadcast against each other on the leading axes, so a
    single parameter can be evaluated on a batch of observations.
    """
    theta = _as_vectors(family, theta, "natural parameter")
    x = check_data(family, x)
    _require(family, "natural_domain", theta, "natural parameter")
    out = _sum(x * theta) - family.psi(theta) + family.log_carrier(x)
    return out[()] if np.ndim(out) == 0 else out


def bregman_div(psi_like, a, b) -> np.ndarray:
    """Bregman divergence ``f(a) - f(b) - <a - b, grad f(b)>``.

    ``psi_like`` is a :class:`ConvexFunction` or anything exposing one through
    a ``potential`` attribute (e.g. a :class:`FamilySpec`).
    """
    f = getattr(psi_like, "potential", psi_like)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if f.domain is not None:
        for name, v in (("a", a), ("b", b)):
            if not np.all(f.domain(v)):
                raise DomainError(f"argument {name} is outside the potential's domain",
                                  predicate="domain")
    out = f.value(a) - f.value(b) - _sum((a - b) * f.grad(b))
    return out[()] if np.ndim(out) == 0 else out


def to_expectation(family: FamilySpec, theta) -> np.ndarray:
    theta = _as_vectors(family, theta, "natural parameter")
    _require(family, "natural_domain", theta, "natural parameter")
    return family.grad_psi(theta)


def clamp_expectation(family: FamilySpec, xi) -> tuple[np.ndarray, bool]:
    """Move expectation parameters into the open domain.

    Returns the clamped values and whether anything changed.
    """
    xi = _as_vectors(family, xi, "expectation parameter")
    if not np.all(np.isfinite(xi)):
        raise DomainError("expectation parameter is not finite", predicate="expectation_domain")
    clamped = family.clamp(xi)
    return clamped, not np.array_equal(clamped, xi)


def to_natural(family: FamilySpec, xi) -> np.ndarray:
    """Inverse of :func:`to_expectation`.

    Boundary values (e.g. a Bernoulli mean of exactly 0 or 1) are clamped by
    ``CLAMP_EPS`` and a :class:`~rotmix.errors.ClampWarning` is emitted.
    """
    xi, moved = clamp_expectation(family, xi)
    if moved:
        warnings.warn(f"{family.name}: expectation parameter clamped into the open domain",
                      ClampWarning, stacklevel=2)
    _require(family, "expectation_domain", xi, "expectation parameter")
    return family.grad_psi_inv(xi)


def dual_bregman_data_div(family: FamilySpec, x, xi) -> np.ndarray:
    """Divergence of an observation from an expectation parameter.

    Computed in expectation coordinates with the conjugate potential, so
    observations on the boundary of the expectation domain (Bernoulli 0/1,
    Poisson 0) get their limiting values.  Equals ``0.5 * ||x - xi||^2`` for
    the spherical Gaussian.
    """
    x = check_data(family, x)
    xi = _as_vectors(family, xi, "expectation parameter")
    _require(family, "expectation_domain", xi, "expectation parameter")
    if family.name == "gaussian_spherical":
        return 0.5 * _sum(np.square(x - xi))
    theta = family.grad_psi_inv(xi)
    div = family.psi_conj(x) - family.psi_conj(xi) - _sum((x - xi) * theta)
    return np.maximum(div, 0.0)
