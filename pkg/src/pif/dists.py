"""Parameter records for the Gaussian, Laplace and Dirichlet families.

Every record may carry leading batch dimensions: a ``GaussParams`` with
``mean.shape == (B, M, d)`` holds ``B * M`` isotropic Gaussians, each with a
scalar variance in ``variance.shape == (B, M)``. Operations broadcast over
those leading dimensions, so a single prior record can be interpolated
against a whole batch of Dirac endpoints.

Records are frozen and their arrays are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .special import digamma, ln_gamma

__all__ = [
    "GAUSSIAN",
    "LAPLACE",
    "DIRICHLET",
    "FAMILIES",
    "CONCENTRATION_FLOOR",
    "DegenerateSupportError",
    "GaussParams",
    "LaplaceParams",
    "DirichletParams",
    "DistParams",
    "dirac_of",
    "prior_of",
    "interpolate",
    "sample",
    "kl",
]

GAUSSIAN = "gaussian"
LAPLACE = "laplace"
DIRICHLET = "dirichlet"
FAMILIES = (GAUSSIAN, LAPLACE, DIRICHLET)

# Floor applied to exactly-zero Dirichlet concentrations off the vertex.
CONCENTRATION_FLOOR = 1e-8


class DegenerateSupportError(ValueError):
    """Raised when a divergence's second argument has zero spread or mass."""


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _check_location(loc, spread, spread_name, family):
    if loc.ndim == 0:
        raise ValueError(f"{family} location must have a trailing dimension axis")
    if not np.all(np.isfinite(loc)):
        raise ValueError(f"{family} location must be finite")
    if spread.shape != loc.shape[:-1]:
        if spread.shape == loc.shape and loc.shape[-1] > 1:
            raise ValueError(f"{family} {spread_name} must be isotropic (one scalar per distribution)")
        raise ValueError(
            f"{family} {spread_name} shape {spread.shape} does not match batch shape {loc.shape[:-1]}"
        )
    if not np.all(np.isfinite(spread)) or np.any(spread < 0.0):
        raise ValueError(f"{family} {spread_name} must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class GaussParams:
    """Isotropic Gaussian ``N(mean, variance * I)``; ``variance == 0`` is a Dirac."""

    mean: np.ndarray
    variance: np.ndarray

    family = GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "variance", _frozen(self.variance))
        _check_location(self.mean, self.variance, "variance", GAUSSIAN)

    @property
    def dim(self):
        return self.mean.shape[-1]

    @property
    def batch_shape(self):
        return self.mean.shape[:-1]


@dataclass(frozen=True, eq=False)
class LaplaceParams:
    """Product of independent Laplace marginals sharing one ``scale``."""

    location: np.ndarray
    scale: np.ndarray

    family = LAPLACE

    def __post_init__(self):
        object.__setattr__(self, "location", _frozen(self.location))
        object.__setattr__(self, "scale", _frozen(self.scale))
        _check_location(self.location, self.scale, "scale", LAPLACE)

    @property
    def dim(self):
        return self.location.shape[-1]

    @property
    def batch_shape(self):
        return self.location.shape[:-1]


@dataclass(frozen=True, eq=False)
class DirichletParams:
    """Dirichlet over the K-simplex; a one-hot concentration is a vertex Dirac."""

    concentration: np.ndarray

    family = DIRICHLET

    def __post_init__(self):
        alpha = _frozen(self.concentration)
        object.__setattr__(self, "concentration", alpha)
        if alpha.ndim == 0 or alpha.shape[-1] < 2:
            raise ValueError("dirichlet concentration needs K >= 2 entries")
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0.0):
            raise ValueError("dirichlet concentration must be finite and >= 0")
        if np.any(alpha.max(axis=-1) <= 0.0):
            raise ValueError("dirichlet concentration needs at least one positive entry")

    @property
    def dim(self):
        return self.concentration.shape[-1]

    @property
    def batch_shape(self):
        return self.concentration.shape[:-1]


DistParams = Union[GaussParams, LaplaceParams, DirichletParams]


def dirac_of(data, family, K=None):
    """Dirac endpoint for ``data``.

    For the continuous families ``data`` is a real array whose last axis is the
    coordinate axis. For ``"dirichlet"`` it is an integer class index (or an
    integer array of them) and ``K`` the number of classes.
    """
    if family in (GAUSSIAN, LAPLACE):
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueError("dirac_of requires finite data")
        zeros = np.zeros(data.shape[:-1])
        if family == GAUSSIAN:
            return GaussParams(data, zeros)
        return LaplaceParams(data, zeros)
    if family == DIRICHLET:
        if K is None or K < 2:
            raise ValueError("dirac_of(dirichlet) needs K >= 2")
        idx = np.asarray(data)
        if not np.issubdtype(idx.dtype, np.integer):
            raise ValueError("dirichlet data must be integer class indices")
        if np.any(idx < 0) or np.any(idx >= K):
            raise ValueError(f"class index out of range [0, {K})")
        return DirichletParams(np.eye(K)[idx])
    raise ValueError(f"unknown family {family!r}")


def prior_of(family, dim, eps0=1.0, beta0=1.0):
    """Prior record: zero-centred with variance ``eps0**2`` or scale ``beta0``,
    or the uniform ``1/K`` concentration for the Dirichlet (``dim`` is K)."""
    if family == GAUSSIAN:
        if not eps0 > 0:
            raise ValueError("eps0 must be > 0")
        return GaussParams(np.zeros(dim), eps0 * eps0)
    if family == LAPLACE:
        if not beta0 > 0:
            raise ValueError("beta0 must be > 0")
        return LaplaceParams(np.zeros(dim), beta0)
    if family == DIRICHLET:
        if dim < 2:
            raise ValueError("dirichlet prior needs K >= 2")
        return DirichletParams(np.full(dim, 1.0 / dim))
    raise ValueError(f"unknown family {family!r}")


def _mix(a, b, w):
    w_ = np.asarray(w, dtype=np.float64)
    out = w_ * a + (1.0 - w_) * b
    # Endpoints are returned bit-exactly, signed zeros included.
    out = np.where(w_ == 1.0, a, out)
    return np.where(w_ == 0.0, b, out)


def interpolate(theta_data, theta_prior, w):
    """Componentwise ``w * theta_data + (1 - w) * theta_prior``.

    ``w`` is a scalar or an array broadcastable to the batch shape.
    """
    if theta_data.family != theta_prior.family:
        raise ValueError(f"family mismatch: {theta_data.family} vs {theta_prior.family}")
    if theta_data.dim != theta_prior.dim:
        raise ValueError(f"dimension mismatch: {theta_data.dim} vs {theta_prior.dim}")
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0.0) or np.any(w > 1.0) or not np.all(np.isfinite(w)):
        raise ValueError("interpolation weight must lie in [0, 1]")
    wv = w[..., None]
    if theta_data.family == GAUSSIAN:
        return GaussParams(
            _mix(theta_data.mean, theta_prior.mean, wv),
            _mix(theta_data.variance, theta_prior.variance, w),
        )
    if theta_data.family == LAPLACE:
        return LaplaceParams(
            _mix(theta_data.location, theta_prior.location, wv),
            _mix(theta_data.scale, theta_prior.scale, w),
        )
    return DirichletParams(_mix(theta_data.concentration, theta_prior.concentration, wv))


def _sample_dirichlet(alpha, rng):
    alpha = np.asarray(alpha, dtype=np.float64)
    vertex = (alpha.max(axis=-1) == 1.0) & (np.count_nonzero(alpha, axis=-1) == 1)
    a = np.maximum(alpha, CONCENTRATION_FLOOR)
    # Gamma(a) = Gamma(a + 1) * U**(1/a), kept in log space: U**(1/a)
    # underflows for the small shapes near the data end of the path.
    log_g = np.log(rng.gamma(a + 1.0)) + np.log(rng.uniform(size=a.shape)) / a
    log_g -= log_g.max(axis=-1, keepdims=True)
    g = np.exp(log_g)
    out = g / g.sum(axis=-1, keepdims=True)
    return np.where(vertex[..., None], alpha, out)


def sample(params, rng):
    """Draw one point per distribution in ``params`` using generator ``rng``.

    Zero-spread records and one-hot Dirichlet records return their location or
    vertex exactly; they still consume random draws so the stream position does
    not depend on the parameter values.
    """
    if params.family == GAUSSIAN:
        z = rng.standard_normal(params.mean.shape)
        out = params.mean + np.sqrt(params.variance)[..., None] * z
        return np.where(params.variance[..., None] == 0.0, params.mean, out)
    if params.family == LAPLACE:
        z = rng.laplace(size=params.location.shape)
        out = params.location + params.scale[..., None] * z
        return np.where(params.scale[..., None] == 0.0, params.location, out)
    if params.family == DIRICHLET:
        return _sample_dirichlet(params.concentration, rng)
    raise ValueError(f"unknown family {params.family!r}")


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def kl(p, q, include_constant=True):
    """Closed-form ``KL(p || q)``, one value per distribution in the batch.

    ``include_constant=False`` drops the ``-1`` per coordinate of the Laplace
    divergence (the gradient-equivalent form that is ``d`` rather than 0 at
    ``p == q``). It has no effect on the other families.
    """
    if p.family != q.family:
        raise ValueError(f"family mismatch: {p.family} vs {q.family}")
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")

    if p.family == GAUSSIAN:
        if np.any(q.variance <= 0.0):
            raise DegenerateSupportError("KL(p || q) undefined: q has zero variance")
        d = p.dim
        sq = np.sum((p.mean - q.mean) ** 2, axis=-1)
        with np.errstate(divide="ignore"):
            log_ratio = 0.5 * (np.log(q.variance) - np.log(p.variance))
        out = d * (log_ratio + p.variance / (2.0 * q.variance) - 0.5) + sq / (2.0 * q.variance)
        return _scalar_or_array(out)

    if p.family == LAPLACE:
        if np.any(q.scale <= 0.0):
            raise DegenerateSupportError("KL(p || q) undefined: q has zero scale")
        bp = p.scale[..., None]
        bq = q.scale[..., None]
        delta = np.abs(p.location - q.location)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(bp > 0.0, bp / bq * np.exp(-delta / np.where(bp > 0, bp, 1.0)), 0.0)
            per_dim = np.log(bq) - np.log(bp) + delta / bq + tail
        if include_constant:
            per_dim = per_dim - 1.0
        return _scalar_or_array(per_dim.sum(axis=-1))

    if p.family == DIRICHLET:
        if np.any(q.concentration <= 0.0):
            raise DegenerateSupportError("KL(p || q) undefined: q has a zero concentration")
        ap = np.maximum(p.concentration, CONCENTRATION_FLOOR)
        aq = q.concentration
        ap0 = ap.sum(axis=-1)
        aq0 = aq.sum(axis=-1)
        out = (
            ln_gamma(ap0)
            - ln_gamma(ap).sum(axis=-1)
            - ln_gamma(aq0)
            + ln_gamma(aq).sum(axis=-1)
            + ((ap - aq) * (digamma(ap) - np.asarray(digamma(ap0))[..., None])).sum(axis=-1)
        )
        return _scalar_or_array(out)

    raise ValueError(f"unknown family {p.family!r}")
