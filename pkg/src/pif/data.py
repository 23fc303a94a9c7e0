"""Seeded toy datasets: 2-D densities and small typed point sets.

Every generator returns normalised data (zero mean, unit standard deviation
per coordinate over all points) together with the :class:`AffineNormalizer`
that maps back to the raw coordinates.

Raw geometry
------------
swissroll
    ``theta ~ U(1.5 pi, 4.5 pi)``, point ``(theta cos theta, theta sin theta) / 10``
    plus isotropic jitter of 0.05 times the clean spiral's spread.
swissroll_moons
    Half the samples from the spiral above, half from two interleaved
    half-circles (radius 0.5) shifted to ``x in [2.0, 3.0]`` so the two parts
    never overlap.
chessboard_sparse / chessboard_dense
    Uniform over the black squares of a 4x4 / 8x8 board on ``[-1, 1]^2``;
    square ``(i, j)`` is black when ``i + j`` is odd.
typed_mixture
    One point per entity from one of four isotropic Gaussians (sd 0.25) at
    ``(+-1, +-1)``; the type is the cluster id.
polygon5
    Five points per entity on a regular pentagon of radius 1, each vertex
    radius jittered uniformly by up to 2%, randomly rotated and translated by
    ``U(-1, 1)^2``. Point k has type k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import PointSet

__all__ = [
    "DATASETS",
    "AffineNormalizer",
    "DatasetSpec",
    "generate",
    "CLUSTER_CENTERS",
    "PENTAGON_RADIUS",
    "pentagon_chords",
]

DATASETS = (
    "swissroll",
    "swissroll_moons",
    "chessboard_sparse",
    "chessboard_dense",
    "typed_mixture",
    "polygon5",
)

SWISSROLL_JITTER = 0.05
CLUSTER_CENTERS = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
CLUSTER_SD = 0.25
PENTAGON_RADIUS = 1.0
PENTAGON_JITTER = 0.02


class AffineNormalizer(TransformerMixin, BaseEstimator):
    """Per-coordinate ``(x - center) / scale`` over the last axis of any array."""

    def __init__(self, center=None, scale=None):
        self.center = center
        self.scale = scale

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        flat = X.reshape(-1, X.shape[-1])
        self.center_ = flat.mean(axis=0) if self.center is None else np.asarray(self.center, float)
        self.scale_ = flat.std(axis=0) if self.scale is None else np.asarray(self.scale, float)
        if np.any(self.scale_ <= 0) or not np.all(np.isfinite(self.scale_)):
            raise ValueError("normalisation scale must be finite and > 0")
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        return (np.asarray(X, dtype=np.float64) - self.center_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        return np.asarray(X, dtype=np.float64) * self.scale_ + self.center_

    @classmethod
    def from_record(cls, record):
        norm = cls(center=record["center"], scale=record["scale"])
        return norm.fit(np.zeros((1, len(record["center"]))))

    def to_record(self):
        check_is_fitted(self, "scale_")
        return {"center": [float(c) for c in self.center_], "scale": [float(s) for s in self.scale_]}


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    n_samples: int = 100_000
    seed: int = 0
    normalization: AffineNormalizer | None = None

    def __post_init__(self):
        if self.name not in DATASETS:
            raise ValueError(f"unknown dataset {self.name!r}; expected one of {DATASETS}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError("n_samples must be a positive integer")


def _spiral(n, rng):
    theta = 1.5 * np.pi * (1.0 + 2.0 * rng.uniform(size=n))
    pts = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1) / 10.0
    spread = pts.std()
    return pts + SWISSROLL_JITTER * spread * rng.standard_normal((n, 2))


def _moons(n, rng):
    is_outer = rng.uniform(size=n) < 0.5
    a = np.pi * rng.uniform(size=n)
    outer = np.stack([np.cos(a), np.sin(a)], axis=1)
    inner = np.stack([1.0 - np.cos(a), 0.5 - np.sin(a)], axis=1)
    pts = np.where(is_outer[:, None], outer, inner)
    pts = pts + 0.05 * rng.standard_normal((n, 2))
    return 0.5 * pts + np.array([2.0, 0.0])


def _chessboard(n, cells, rng):
    black = np.array([(i, j) for i in range(cells) for j in range(cells) if (i + j) % 2 == 1])
    pick = black[rng.integers(0, len(black), size=n)]
    width = 2.0 / cells
    return -1.0 + (pick + rng.uniform(size=(n, 2))) * width


def _generate_raw(name, n, rng):
    if name == "swissroll":
        return _spiral(n, rng)[:, None, :], None
    if name == "swissroll_moons":
        which = rng.uniform(size=n) < 0.5
        pts = np.where(which[:, None], _spiral(n, rng), _moons(n, rng))
        return pts[:, None, :], None
    if name == "chessboard_sparse":
        return _chessboard(n, 4, rng)[:, None, :], None
    if name == "chessboard_dense":
        return _chessboard(n, 8, rng)[:, None, :], None
    if name == "typed_mixture":
        cls = rng.integers(0, 4, size=n)
        pts = CLUSTER_CENTERS[cls] + CLUSTER_SD * rng.standard_normal((n, 2))
        return pts[:, None, :], cls[:, None]
    if name == "polygon5":
        k = np.arange(5)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=(n, 1))
        radius = PENTAGON_RADIUS * (1.0 + PENTAGON_JITTER * rng.uniform(-1.0, 1.0, size=(n, 5)))
        ang = phi + 2.0 * np.pi * k / 5.0
        pts = radius[..., None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        pts = pts + rng.uniform(-1.0, 1.0, size=(n, 1, 2))
        return pts, np.broadcast_to(k, (n, 5)).copy()
    raise ValueError(f"unknown dataset {name!r}")


def generate(spec):
    """Return ``(entities, normalizer)`` for ``spec``.

    ``entities`` is a batched :class:`PointSet` of ``spec.n_samples`` entities in
    normalised coordinates. When ``spec.normalization`` is given (for instance
    the one fitted on a training set) it is applied instead of a fresh fit.
    """
    rng = np.random.default_rng(spec.seed)
    raw, types = _generate_raw(spec.name, int(spec.n_samples), rng)
    norm = spec.normalization
    if norm is None:
        norm = AffineNormalizer().fit(raw)
    positions = norm.transform(raw)
    if types is None:
        return PointSet(positions), norm
    K = 4 if spec.name == "typed_mixture" else 5
    return PointSet.from_indices(positions, types, K=K), norm


def pentagon_chords(radius=PENTAGON_RADIUS):
    """5x5 matrix of regular-pentagon vertex distances ``2 R sin(|i-j| pi / 5)``."""
    k = np.abs(np.arange(5)[:, None] - np.arange(5)[None, :])
    return 2.0 * radius * np.sin(k * np.pi / 5.0)
