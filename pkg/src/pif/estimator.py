"""Scikit-learn style estimator around the training step and sampling chain."""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    FlowConfig,
    LossWeights,
    MaskSpec,
    PointSet,
    feature_dim,
    make_priors,
    sample_chain,
    train_step,
)
from .net import AdamState, NetConfig, init_weights
from .schedule import Schedule

__all__ = ["ParameterInterpolationFlow", "check_entities"]

log = logging.getLogger(__name__)


def check_entities(X, types=None, n_types=None):
    """Coerce ``X`` (and optional ``types``) to a batched :class:`PointSet`.

    ``X`` may be a PointSet, an ``(n, d)`` array of single points or an
    ``(n, M, d)`` array. ``types`` may be integer class ids of shape ``(n,)`` or
    ``(n, M)``, or one-hot/simplex rows of shape ``(n, M, K)``.
    """
    if isinstance(X, PointSet):
        if types is not None:
            raise ValueError("types are already part of the PointSet")
        if X.positions.ndim != 3:
            raise ValueError("expected a batched PointSet with shape (n, M, d)")
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValueError(f"expected X with shape (n, d) or (n, M, d), got {X.shape}")
    if types is None:
        return PointSet(X)
    types = np.asarray(types)
    if np.issubdtype(types.dtype, np.integer):
        types = types.reshape(X.shape[:2])
        return PointSet.from_indices(X, types, K=n_types)
    return PointSet(X, types.reshape(X.shape[:2] + (-1,)))


class ParameterInterpolationFlow(BaseEstimator):
    """Generative model trained by interpolating distribution parameters.

    Coordinates follow an isotropic Gaussian (or Laplace) path from a
    zero-centred prior to the Dirac at each data point; optional point types
    follow a Dirichlet path from the uniform concentration to the one-hot
    vertex. The network learns to predict the Dirac endpoint from a draw of
    the interpolated distribution.

    Parameters
    ----------
    family : {"gaussian", "laplace"}
        Coordinate distribution family.
    gamma : float
        Schedule base, ``f(t) = 1 - gamma**t``.
    n_steps : int
        Grid size used for training and, by default, for sampling.
    eps0, beta0 : float
        Prior standard deviation (Gaussian) or scale (Laplace).
    lambda_x, lambda_v : float
        Weights on the coordinate and type losses.
    p_mask, p_atom_mask : float
        Probability that an entity is trained in masked mode, and per-point
        probability of being held fixed as context in that mode.
    laplace_literal : bool
        Keep the constant term of the Laplace loss.
    hidden_dim, depth, time_embed_dim : int
        Backbone size; ``depth`` counts affine layers.
    lr, beta1, beta2, adam_eps : float
        Adam settings.
    epochs, batch_size : int
        Training length.
    n_types : int or None
        Number of point types; inferred from integer labels when None.
    warm_start : bool
        Continue from the fitted state instead of reinitialising.
    random_state : int
        Seed for initialisation, batching and all training draws.
    """

    def __init__(
        self,
        family="gaussian",
        gamma=0.009,
        n_steps=100,
        eps0=1.0,
        beta0=1.0,
        lambda_x=1.0,
        lambda_v=1.0,
        p_mask=0.3,
        p_atom_mask=0.3,
        laplace_literal=False,
        hidden_dim=64,
        depth=6,
        time_embed_dim=32,
        lr=1e-3,
        beta1=0.9,
        beta2=0.999,
        adam_eps=1e-8,
        epochs=100,
        batch_size=2048,
        n_types=None,
        warm_start=False,
        random_state=0,
    ):
        self.family = family
        self.gamma = gamma
        self.n_steps = n_steps
        self.eps0 = eps0
        self.beta0 = beta0
        self.lambda_x = lambda_x
        self.lambda_v = lambda_v
        self.p_mask = p_mask
        self.p_atom_mask = p_atom_mask
        self.laplace_literal = laplace_literal
        self.hidden_dim = hidden_dim
        self.depth = depth
        self.time_embed_dim = time_embed_dim
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_types = n_types
        self.warm_start = warm_start
        self.random_state = random_state

    # -- configuration -----------------------------------------------------

    def _schedule(self, n_steps=None):
        return Schedule(float(self.gamma), int(n_steps or self.n_steps))

    def _flow_config(self):
        return FlowConfig(
            family=self.family,
            eps0=float(self.eps0),
            beta0=float(self.beta0),
            loss_weights=LossWeights(float(self.lambda_x), float(self.lambda_v)),
            p_mask=float(self.p_mask),
            p_atom_mask=float(self.p_atom_mask),
            laplace_literal=bool(self.laplace_literal),
        )

    def _priors(self):
        return make_priors(self.family, self.n_dims_, self.n_types_, self.eps0, self.beta0)

    def _net_config(self, M, d, K):
        return NetConfig(
            in_dim=feature_dim(M, d, K),
            out_cont_dim=M * d,
            out_type_dim=M * K,
            type_group=K,
            hidden_dim=int(self.hidden_dim),
            depth=int(self.depth),
            time_embed_dim=int(self.time_embed_dim),
        )

    def _initialize(self, entities):
        M, d, K = entities.n_points, entities.dim, entities.n_types
        self.n_points_, self.n_dims_, self.n_types_ = M, d, K
        self.net_config_ = self._net_config(M, d, K)
        self.rng_ = np.random.default_rng(self.random_state)
        self.weights_ = init_weights(self.net_config_, self.rng_)
        self.opt_state_ = AdamState.zeros(
            self.net_config_.n_params, self.lr, self.beta1, self.beta2, self.adam_eps
        )
        self.epochs_done_ = 0
        self.loss_curve_ = []

    # -- training ----------------------------------------------------------

    def fit(self, X, types=None, callback=None):
        """Train for ``epochs`` passes over ``X``.

        ``callback(estimator, epoch)`` runs after every epoch; ``epoch`` counts
        from 1 across warm-started calls.
        """
        entities = check_entities(X, types, self.n_types)
        fitted = hasattr(self, "weights_")
        if not (self.warm_start and fitted):
            self._initialize(entities)
        elif (entities.n_points, entities.dim, entities.n_types) != (
            self.n_points_, self.n_dims_, self.n_types_,
        ):
            raise ValueError("warm start needs data of the shape seen in the first fit")
        schedule = self._schedule()
        config = self._flow_config()
        priors = self._priors()
        n = len(entities)
        bs = int(self.batch_size)
        steps_per_epoch = math.ceil(n / bs)
        for _ in range(int(self.epochs)):
            perm = self.rng_.permutation(n)
            epoch_loss = 0.0
            for k in range(steps_per_epoch):
                idx = perm[k * bs:(k + 1) * bs]
                loss = train_step(
                    self.weights_, self.opt_state_, entities[idx], schedule, config,
                    self.rng_, priors,
                )
                self.loss_curve_.append(loss)
                epoch_loss += loss
            self.epochs_done_ += 1
            log.info("epoch %d loss %.6g", self.epochs_done_, epoch_loss / steps_per_epoch)
            if callback is not None:
                callback(self, self.epochs_done_)
        return self

    # -- generation --------------------------------------------------------

    def sample(self, n_samples=1, mask=None, context=None, random_state=None, n_steps=None,
               chunk_size=8192, callback=None):
        """Generate ``n_samples`` entities as a batched :class:`PointSet`.

        ``mask`` (a :class:`MaskSpec` with shape ``(M,)`` or ``(n_samples, M)``)
        together with ``context`` holds the fixed entries at their context
        values. Chunks of ``chunk_size`` entities use independent random
        substreams derived from ``random_state`` (default: the estimator's
        ``random_state``), so the output does not depend on evaluation order.
        """
        check_is_fitted(self, "weights_")
        n_samples = int(n_samples)
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        M, d, K = self.n_points_, self.n_dims_, self.n_types_
        if mask is not None:
            if context is None:
                raise ValueError("a mask needs context")
            mask = MaskSpec(
                np.broadcast_to(mask.fixed_position, (n_samples, M)),
                np.broadcast_to(mask.fixed_type, (n_samples, M)),
            )
            ctx_types = None if context.types is None else np.broadcast_to(
                context.types, (n_samples, M, context.types.shape[-1]))
            context = PointSet(np.broadcast_to(context.positions, (n_samples, M, d)), ctx_types)
        seed = self.random_state if random_state is None else random_state
        children = np.random.SeedSequence(seed).spawn(math.ceil(n_samples / chunk_size))
        schedule = self._schedule(n_steps)
        priors = self._priors()
        parts = []
        for c, child in enumerate(children):
            sl = slice(c * chunk_size, min((c + 1) * chunk_size, n_samples))
            parts.append(sample_chain(
                self.weights_, schedule, (M, d, K), priors, np.random.default_rng(child),
                n_samples=sl.stop - sl.start,
                mask=None if mask is None else mask[sl],
                context=None if context is None else context[sl],
                callback=callback,
            ))
        positions = np.concatenate([p.positions for p in parts])
        types = None if not K else np.concatenate([p.types for p in parts])
        return PointSet(positions, types)
