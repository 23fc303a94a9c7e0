"""Histogram Jensen-Shannon divergence and simple sample-quality checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Histogram2D",
    "histogram_bounds",
    "hist_jsd",
    "outlier_rate",
    "class_proportion_error",
    "nearest_center_accuracy",
]

DEFAULT_BINS = 64


@dataclass(frozen=True, eq=False)
class Histogram2D:
    counts: np.ndarray
    bounds: tuple  # ((xmin, xmax), (ymin, ymax))

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("counts must be a square B x B array")
        if np.any(counts < 0) or counts.sum() <= 0:
            raise ValueError("histogram needs nonnegative counts with a positive total")
        bounds = tuple(tuple(float(v) for v in ax) for ax in self.bounds)
        if not np.all(np.isfinite(bounds)):
            raise ValueError("histogram bounds must be finite")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bounds", bounds)

    @property
    def bins(self):
        return self.counts.shape[0]

    @classmethod
    def from_points(cls, points, bounds, bins=DEFAULT_BINS):
        """Bin 2-D ``points``; points outside ``bounds`` are dropped."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=bins, range=bounds)
        return cls(counts.astype(np.int64), bounds)


def histogram_bounds(reference, inflate=0.10):
    """Bounding box of 2-D ``reference`` points widened by ``inflate`` of its size per side."""
    pts = np.asarray(reference, dtype=np.float64).reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = inflate * (hi - lo)
    return ((lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]))


def _kl2(p, q):
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def hist_jsd(a, b):
    """Base-2 Jensen-Shannon divergence between two normalised histograms, in [0, 1]."""
    if a.bins != b.bins or a.bounds != b.bounds:
        raise ValueError("histograms must share bins and bounds")
    p = a.counts.ravel() / a.counts.sum()
    q = b.counts.ravel() / b.counts.sum()
    m = 0.5 * (p + q)
    return 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)


def outlier_rate(samples, bounds, factor=1.5):
    """Fraction of samples outside ``bounds`` scaled by ``factor`` about its centre.

    ``bounds`` is a sequence of per-axis ``(lo, hi)`` pairs, usually the
    reference data's bounding box.
    """
    pts = np.asarray(samples, dtype=np.float64)
    pts = pts.reshape(-1, pts.shape[-1])
    if pts.shape[0] == 0:
        raise ValueError("outlier_rate needs at least one sample")
    b = np.asarray(bounds, dtype=np.float64)
    centre = b.mean(axis=1)
    half = 0.5 * (b[:, 1] - b[:, 0]) * factor
    outside = np.any(np.abs(pts - centre) > half, axis=1)
    return float(outside.mean())


def class_proportion_error(generated_types, reference_proportions):
    """Largest absolute gap between empirical and reference class frequencies."""
    ref = np.asarray(reference_proportions, dtype=np.float64)
    if ref.size < 2:
        raise ValueError("need at least two classes")
    labels = np.asarray(generated_types).ravel()
    if labels.size == 0:
        raise ValueError("class_proportion_error needs at least one label")
    freq = np.bincount(labels, minlength=ref.size) / labels.size
    return float(np.max(np.abs(freq[:ref.size] - ref)))


def nearest_center_accuracy(points, labels, centers):
    """Fraction of points whose label is the index of their nearest centre."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, np.shape(centers)[1])
    d2 = ((pts[:, None, :] - np.asarray(centers)[None]) ** 2).sum(axis=-1)
    return float(np.mean(d2.argmin(axis=1) == np.asarray(labels).ravel()))
