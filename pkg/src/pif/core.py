"""Training step, sampling chain, losses and masking for the interpolation flow.

Entities are :class:`PointSet` records whose arrays may carry a leading batch
axis: ``positions`` is ``(..., M, d)`` and ``types`` is ``(..., M, K)``. A batch
of B entities is therefore just a PointSet with ``positions.shape == (B, M, d)``.

Time indexing: the network sees a draw from grid node ``t`` and every loss is
evaluated on the interpolated pair at ``t + 1/n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dists
from .dists import (
    CONCENTRATION_FLOOR,
    DIRICHLET,
    GAUSSIAN,
    LAPLACE,
    DirichletParams,
    GaussParams,
    LaplaceParams,
)
from .net import Weights, adam_step, backward, forward
from .special import EULER_GAMMA, digamma, ln_gamma, trigamma

__all__ = [
    "PointSet",
    "MaskSpec",
    "LossWeights",
    "Priors",
    "FlowConfig",
    "NonFiniteLossError",
    "make_priors",
    "make_theta_t",
    "conditional_params",
    "draw_mask",
    "input_features",
    "feature_dim",
    "loss_gaussian",
    "loss_laplace",
    "loss_dirichlet",
    "total_loss",
    "train_step",
    "sample_chain",
]

# Floor on gamma**t in loss denominators.
DECAY_FLOOR = 1e-12


class NonFiniteLossError(FloatingPointError):
    """A training step or sampling chain produced NaN/inf."""


@dataclass(frozen=True, eq=False)
class PointSet:
    """``M`` points with positions and optional simplex-valued types."""

    positions: np.ndarray
    types: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim < 2 or pos.shape[-2] < 1:
            raise ValueError("positions must have shape (..., M, d) with M >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        if self.types is not None:
            typ = np.asarray(self.types, dtype=np.float64)
            if typ.shape[:-1] != pos.shape[:-1] or typ.shape[-1] < 2:
                raise ValueError("types must have shape (..., M, K) with K >= 2")
            if np.any(typ < 0.0) or np.any(np.abs(typ.sum(axis=-1) - 1.0) > 1e-9):
                raise ValueError("each type row must lie on the simplex")
            object.__setattr__(self, "types", typ)

    @classmethod
    def from_indices(cls, positions, type_index=None, K=None):
        positions = np.asarray(positions, dtype=np.float64)
        if type_index is None:
            return cls(positions)
        idx = np.asarray(type_index)
        if K is None:
            K = int(idx.max()) + 1
        return cls(positions, dists.dirac_of(idx, DIRICHLET, K=max(K, 2)).concentration)

    @classmethod
    def stack(cls, entities):
        entities = list(entities)
        pos = np.stack([e.positions for e in entities])
        if entities[0].types is None:
            return cls(pos)
        return cls(pos, np.stack([e.types for e in entities]))

    @property
    def n_points(self):
        return self.positions.shape[-2]

    @property
    def dim(self):
        return self.positions.shape[-1]

    @property
    def n_types(self):
        return 0 if self.types is None else self.types.shape[-1]

    @property
    def batch_shape(self):
        return self.positions.shape[:-2]

    @property
    def type_index(self):
        return None if self.types is None else self.types.argmax(axis=-1)

    def __len__(self):
        if not self.batch_shape:
            raise TypeError("unbatched PointSet has no length")
        return self.batch_shape[0]

    def __getitem__(self, item):
        if not self.batch_shape:
            raise TypeError("unbatched PointSet cannot be indexed")
        types = None if self.types is None else self.types[item]
        return PointSet(self.positions[item], types)


@dataclass(frozen=True, eq=False)
class MaskSpec:
    """Per-point flags for context held fixed at its data value.

    Arrays have shape ``(..., M)``, matching the entity's batch shape.
    """

    fixed_position: np.ndarray
    fixed_type: np.ndarray

    def __post_init__(self):
        fp = np.asarray(self.fixed_position, dtype=bool)
        ft = np.asarray(self.fixed_type, dtype=bool)
        if fp.shape != ft.shape:
            raise ValueError("fixed_position and fixed_type must share one shape")
        object.__setattr__(self, "fixed_position", fp)
        object.__setattr__(self, "fixed_type", ft)

    @classmethod
    def empty(cls, shape):
        z = np.zeros(shape, dtype=bool)
        return cls(z, z)

    @classmethod
    def fixing(cls, fixed):
        fixed = np.asarray(fixed, dtype=bool)
        return cls(fixed, fixed)

    def __getitem__(self, item):
        return MaskSpec(self.fixed_position[item], self.fixed_type[item])


@dataclass(frozen=True)
class LossWeights:
    lambda_x: float = 1.0
    lambda_v: float = 1.0

    def __post_init__(self):
        if self.lambda_x < 0 or self.lambda_v < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lambda_x == 0 and self.lambda_v == 0:
            raise ValueError("lambda_x and lambda_v cannot both be zero")


@dataclass(frozen=True, eq=False)
class Priors:
    coords: GaussParams | LaplaceParams
    types: DirichletParams | None = None

    @property
    def family(self):
        return self.coords.family


def make_priors(family, dim, n_types=0, eps0=1.0, beta0=1.0):
    coords = dists.prior_of(family, dim, eps0=eps0, beta0=beta0)
    types = dists.prior_of(DIRICHLET, n_types) if n_types else None
    return Priors(coords, types)


@dataclass(frozen=True)
class FlowConfig:
    """Everything :func:`train_step` needs besides weights, data and RNG."""

    family: str = GAUSSIAN
    eps0: float = 1.0
    beta0: float = 1.0
    loss_weights: LossWeights = LossWeights()
    p_mask: float = 0.3
    p_atom_mask: float = 0.3
    laplace_literal: bool = False

    def __post_init__(self):
        if self.family not in (GAUSSIAN, LAPLACE):
            raise ValueError(f"coordinate family must be gaussian or laplace, got {self.family!r}")
        for name in ("p_mask", "p_atom_mask"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _data_endpoint(entity, family):
    return dists.dirac_of(entity.positions, family)


def make_theta_t(entity, schedule, t, priors):
    """Interpolated coordinate and type parameters at time ``t``.

    ``t`` is a scalar or an array over the entity's batch shape. Returns
    ``(theta_x, theta_v)``; ``theta_v`` is None for untyped entities.
    """
    if priors.family not in (GAUSSIAN, LAPLACE):
        raise ValueError("coordinate prior must be gaussian or laplace")
    w = np.asarray(schedule.f(t))[..., None]
    w = np.broadcast_to(w, entity.positions.shape[:-1])
    theta_x = dists.interpolate(_data_endpoint(entity, priors.family), priors.coords, w)
    theta_v = None
    if entity.types is not None:
        if priors.types is None or priors.types.dim != entity.n_types:
            raise ValueError("typed entity needs a Dirichlet prior with matching K")
        theta_v = dists.interpolate(DirichletParams(entity.types), priors.types, w)
    return theta_x, theta_v


def conditional_params(theta_x, theta_v, mask, entity):
    """Replace fixed entries of ``theta_t`` by exact Dirac parameters of ``entity``."""
    shape = entity.positions.shape[:-1]
    if mask.fixed_position.shape != shape:
        raise ValueError(f"mask shape {mask.fixed_position.shape} does not match entity {shape}")
    fp = mask.fixed_position
    if theta_x.family == GAUSSIAN:
        theta_x = GaussParams(
            np.where(fp[..., None], entity.positions, theta_x.mean),
            np.where(fp, 0.0, theta_x.variance),
        )
    else:
        theta_x = LaplaceParams(
            np.where(fp[..., None], entity.positions, theta_x.location),
            np.where(fp, 0.0, theta_x.scale),
        )
    if theta_v is not None:
        if entity.types is None:
            raise ValueError("typed parameters need a typed entity")
        theta_v = DirichletParams(
            np.where(mask.fixed_type[..., None], entity.types, theta_v.concentration)
        )
    return theta_x, theta_v


def draw_mask(n_points, p_mask, p_atom_mask, rng, batch=None):
    """Draw the training-time context mask.

    With probability ``1 - p_mask`` the mask is empty; otherwise every point is
    fixed (position and type together) independently with probability
    ``p_atom_mask``. ``batch`` draws that many independent masks at once.
    """
    if not (0.0 <= p_mask <= 1.0 and 0.0 <= p_atom_mask <= 1.0):
        raise ValueError("mask probabilities must lie in [0, 1]")
    shape = () if batch is None else (batch,)
    masked_mode = rng.uniform(size=shape) < p_mask
    per_point = rng.uniform(size=shape + (n_points,)) < p_atom_mask
    fixed = per_point & np.asarray(masked_mode)[..., None]
    return MaskSpec.fixing(fixed)


def feature_dim(n_points, dim, n_types):
    return n_points * (dim + n_types + (2 if n_types else 1))


def input_features(m_x, m_v, mask):
    """Flatten a drawn entity plus its fixed-context flags into network rows."""
    parts = [m_x]
    if m_v is not None:
        parts.append(m_v)
    parts.append(mask.fixed_position[..., None].astype(np.float64))
    if m_v is not None:
        parts.append(mask.fixed_type[..., None].astype(np.float64))
    feats = np.concatenate(parts, axis=-1)
    return feats.reshape(feats.shape[:-2] + (-1,))


def _next_decay(schedule, t):
    s = np.asarray(t, dtype=np.float64) + schedule.dt
    return np.maximum(schedule.decay(np.minimum(s, 1.0)), DECAY_FLOOR)


def _point_weights(point_weights, shape):
    if point_weights is None:
        return np.ones(shape)
    return np.broadcast_to(np.asarray(point_weights, dtype=np.float64), shape)


def _as_batch(a, ndim):
    a = np.asarray(a, dtype=np.float64)
    while a.ndim < ndim:
        a = a[None]
    return a


def loss_gaussian(pred_means, data_positions, schedule, t, eps0, point_weights=None,
                  return_grad=False):
    """Coordinate loss for the Gaussian family.

    ``(1 - g)**2 / (2 g eps0**2) * sum_points ||pred - data||**2`` with
    ``g = gamma**(t + 1/n)``, averaged over the batch axis. ``t`` is the node
    the network input was drawn at (scalar or one value per entity).
    """
    pred = _as_batch(pred_means, 3)
    data = _as_batch(data_positions, 3)
    if pred.shape != data.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {data.shape}")
    B = pred.shape[0]
    g = np.broadcast_to(_next_decay(schedule, t), (B,))
    coef = (1.0 - g) ** 2 / (2.0 * g * eps0 * eps0)
    w = _point_weights(point_weights, pred.shape[:2])
    diff = pred - data
    per_entity = coef * np.einsum("bm,bmd->b", w, diff * diff)
    value = float(per_entity.sum() / B)
    if not return_grad:
        return value
    grad = (2.0 / B) * coef[:, None, None] * w[..., None] * diff
    return value, grad.reshape(np.shape(pred_means))


def loss_laplace(pred_locations, data_positions, schedule, t, beta0, literal=False,
                 point_weights=None, return_grad=False):
    """Coordinate loss for the Laplace family.

    Per coordinate ``exp(-|D|/s) + |D|/s`` with ``s = beta0 * gamma**(t + 1/n)``,
    summed over points and coordinates and averaged over the batch. The default
    subtracts 1 per coordinate so a perfect prediction scores 0;
    ``literal=True`` keeps it (``d`` per point at a perfect prediction).
    """
    pred = _as_batch(pred_locations, 3)
    data = _as_batch(data_positions, 3)
    if pred.shape != data.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {data.shape}")
    B = pred.shape[0]
    s = beta0 * np.broadcast_to(_next_decay(schedule, t), (B,))[:, None, None]
    w = _point_weights(point_weights, pred.shape[:2])
    diff = pred - data
    r = np.abs(diff) / s
    e = np.exp(-r)
    terms = e + r if literal else (e - 1.0) + r
    value = float(np.einsum("bm,bmd->", w, terms) / B)
    if not return_grad:
        return value
    grad = (np.sign(diff) * (1.0 - e) / s) * w[..., None] / B
    return value, grad.reshape(np.shape(pred_locations))


def loss_dirichlet(pred_simplex, data_types, schedule, t, point_weights=None,
                   return_grad=False):
    """Type loss on the concentrations interpolated at ``t + 1/n``.

    Both the predicted simplex and the true types (one-hot rows, or integer
    class indices) are mixed with the uniform prior at ``t + 1/n``; then
    ``sum_i lnG(a_i) - lnG(a_hat_i) + (a_hat_i - a_i) (psi(a_hat_i) - psi(1))``
    is summed over points and averaged over the batch.
    """
    pred = _as_batch(pred_simplex, 3)
    K = pred.shape[-1]
    data = np.asarray(data_types)
    if np.issubdtype(data.dtype, np.integer):
        data = np.eye(K)[data]
    data = _as_batch(data, 3)
    if pred.shape != data.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {data.shape}")
    if np.any(pred <= 0.0):
        raise ValueError("predicted simplex must be strictly positive")
    B = pred.shape[0]
    g = np.broadcast_to(_next_decay(schedule, t), (B,))[:, None, None]
    f = 1.0 - g
    a_hat_raw = f * pred + g / K
    a_hat = np.maximum(a_hat_raw, CONCENTRATION_FLOOR)
    a = np.maximum(f * data + g / K, CONCENTRATION_FLOOR)
    psi1 = -EULER_GAMMA
    terms = ln_gamma(a) - ln_gamma(a_hat) + (a_hat - a) * (digamma(a_hat) - psi1)
    w = _point_weights(point_weights, pred.shape[:2])
    value = float(np.einsum("bm,bmk->", w, terms) / B)
    if not return_grad:
        return value
    d_ahat = (a_hat - a) * trigamma(a_hat) - psi1
    d_ahat = np.where(a_hat_raw > CONCENTRATION_FLOOR, d_ahat, 0.0)
    grad = f * d_ahat * w[..., None] / B
    return value, grad.reshape(np.shape(pred_simplex))


def total_loss(loss_x, loss_v, weights):
    """``lambda_x * loss_x + lambda_v * loss_v``; a missing part counts as 0."""
    if loss_x is None and loss_v is None:
        raise ValueError("total_loss needs at least one part")
    out = 0.0
    if loss_x is not None:
        out += weights.lambda_x * loss_x
    if loss_v is not None:
        out += weights.lambda_v * loss_v
    return out


def _coord_loss(config, schedule, pred, data, t, point_weights, return_grad=True):
    if config.family == GAUSSIAN:
        return loss_gaussian(pred, data, schedule, t, config.eps0, point_weights, return_grad)
    return loss_laplace(pred, data, schedule, t, config.beta0, config.laplace_literal,
                        point_weights, return_grad)


def batch_loss_and_grads(model, batch, schedule, config, priors, t, mask, rng):
    """Draw network inputs, predict and return ``(loss, cache)`` for one batch.

    ``cache`` holds what :func:`train_step` needs for backpropagation. Exposed
    separately so the loss can be evaluated as a function of the weights.
    """
    B, M, d = batch.positions.shape
    theta_x, theta_v = make_theta_t(batch, schedule, t, priors)
    theta_x, theta_v = conditional_params(theta_x, theta_v, mask, batch)
    m_x = dists.sample(theta_x, rng)
    m_v = dists.sample(theta_v, rng) if theta_v is not None else None
    feats = input_features(m_x, m_v, mask)
    means, simplex, fcache = forward(model, feats, t, return_cache=True)
    lw = config.loss_weights

    loss_x, g_x = _coord_loss(
        config, schedule, means.reshape(B, M, d), batch.positions, t,
        ~mask.fixed_position,
    )
    loss = lw.lambda_x * loss_x
    grad_means = lw.lambda_x * g_x.reshape(B, -1)
    grad_simplex = None
    if batch.types is not None and lw.lambda_v > 0:
        loss_v, g_v = loss_dirichlet(
            simplex.reshape(batch.types.shape), batch.types, schedule, t,
            ~mask.fixed_type, return_grad=True,
        )
        loss += lw.lambda_v * loss_v
        grad_simplex = lw.lambda_v * g_v.reshape(B, -1)
    return loss, (feats, fcache, grad_means, grad_simplex)


def train_step(weights, opt_state, batch, schedule, config, rng, priors=None):
    """One optimisation step on a batch (a PointSet with a leading batch axis).

    Each entity draws its own grid node ``t = i/n`` and its own context mask.
    Returns the scalar batch loss before the update; ``weights`` and
    ``opt_state`` are updated in place.
    """
    if not batch.batch_shape or batch.positions.shape[0] == 0:
        raise ValueError("train_step needs a non-empty batched PointSet")
    B, M, d = batch.positions.shape
    if priors is None:
        priors = make_priors(config.family, d, batch.n_types, config.eps0, config.beta0)
    i = rng.integers(0, schedule.n_steps, size=B)
    t = i / schedule.n_steps
    mask = draw_mask(M, config.p_mask, config.p_atom_mask, rng, batch=B)
    loss, (feats, fcache, g_means, g_simplex) = batch_loss_and_grads(
        weights, batch, schedule, config, priors, t, mask, rng
    )
    if not np.isfinite(loss):
        bad = _first_bad_entity(g_means, g_simplex)
        raise NonFiniteLossError(
            f"non-finite loss: entity {bad} at t={t[bad]:.6g}"
        )
    grad = backward(weights, feats, t, g_means, g_simplex, cache=fcache)
    adam_step(opt_state, weights.flat, grad)
    return loss


def _first_bad_entity(g_means, g_simplex):
    bad = ~np.all(np.isfinite(g_means), axis=1)
    if g_simplex is not None:
        bad |= ~np.all(np.isfinite(g_simplex), axis=1)
    hits = np.flatnonzero(bad)
    return int(hits[0]) if hits.size else 0


def _predictor(model):
    if isinstance(model, Weights):
        return lambda feats, t: forward(model, feats, t)
    return model


def sample_chain(model, schedule, shape, priors, rng, n_samples=1, mask=None,
                 context=None, callback=None):
    """Generate ``n_samples`` entities by iterative refinement.

    ``model`` is trained :class:`Weights` or any callable
    ``(features, t) -> (means, simplex)``. ``shape`` is ``(M, d, K)`` with
    ``K = 0`` for untyped entities. With ``mask`` and ``context`` (both with
    batch axis ``n_samples``), fixed entries are held at their context values
    at every step and copied verbatim into the output. ``callback(step, m_x,
    m_v)`` is invoked with every network-input draw.
    """
    M, d, K = shape
    B = n_samples
    predict = _predictor(model)
    if mask is None:
        mask = MaskSpec.empty((B, M))
    else:
        if context is None:
            raise ValueError("a mask needs a context PointSet")
        if mask.fixed_position.shape != (B, M) or context.positions.shape != (B, M, d):
            raise ValueError("mask/context must have shape (n_samples, M[, d])")
        if K and context.types is None and mask.fixed_type.any():
            raise ValueError("fixed types need typed context")
    conditioned = bool(mask.fixed_position.any() or mask.fixed_type.any())
    if conditioned and K and context.types is None:
        context = PointSet(context.positions, np.full((B, M, K), 1.0 / K))

    coords_prior = priors.coords
    zeros = np.zeros((B, M))
    if coords_prior.family == GAUSSIAN:
        theta_x = GaussParams(np.broadcast_to(coords_prior.mean, (B, M, d)), zeros + coords_prior.variance)
    else:
        theta_x = LaplaceParams(np.broadcast_to(coords_prior.location, (B, M, d)), zeros + coords_prior.scale)
    theta_v = None
    if K:
        theta_v = DirichletParams(np.broadcast_to(priors.types.concentration, (B, M, K)))

    means = simplex = None
    for step, (t, dt) in enumerate(schedule.grid()):
        if conditioned:
            theta_x, theta_v = conditional_params(theta_x, theta_v, mask, context)
        m_x = dists.sample(theta_x, rng)
        m_v = dists.sample(theta_v, rng) if K else None
        if conditioned:
            _check_fixed(step, m_x, m_v, mask, context)
        if callback is not None:
            callback(step, m_x, m_v)
        means, simplex = predict(input_features(m_x, m_v, mask), np.full(B, t))
        means = np.asarray(means).reshape(B, M, d)
        if not np.all(np.isfinite(means)) or (K and not np.all(np.isfinite(simplex))):
            raise NonFiniteLossError(f"non-finite prediction at chain step {step}")
        w = np.full((B, M), schedule.f(min(t + dt, 1.0)))
        theta_x = dists.interpolate(dists.dirac_of(means, coords_prior.family), coords_prior, w)
        if K:
            simplex = np.asarray(simplex).reshape(B, M, K)
            theta_v = dists.interpolate(DirichletParams(simplex), priors.types, w)

    positions = means
    types = None
    if K:
        types = np.eye(K)[simplex.argmax(axis=-1)]
    if conditioned:
        positions = np.where(mask.fixed_position[..., None], context.positions, positions)
        if K:
            types = np.where(mask.fixed_type[..., None], context.types, types)
    return PointSet(positions, types)


def _check_fixed(step, m_x, m_v, mask, context):
    fp = mask.fixed_position
    if not np.array_equal(m_x[fp], context.positions[fp]):
        raise AssertionError(f"fixed positions drifted at chain step {step}")
    if m_v is not None:
        ft = mask.fixed_type
        if not np.array_equal(m_v[ft], context.types[ft]):
            raise AssertionError(f"fixed types drifted at chain step {step}")
