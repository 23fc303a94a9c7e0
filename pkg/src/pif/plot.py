"""Deterministic SVG scatter plots with an optional density underlay."""

from __future__ import annotations

import numpy as np

__all__ = ["scatter_svg", "MAX_POINTS"]

MAX_POINTS = 20_000
SIZE = 600
MARGIN = 20
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _subsample(n, limit):
    if n <= limit:
        return np.arange(n)
    return np.linspace(0, n - 1, limit).round().astype(np.int64)


def scatter_svg(points, labels=None, density_bins=64, title=None):
    """Render 2-D ``points`` (shape ``(n, 2)``) as an axis-equal SVG document.

    At most :data:`MAX_POINTS` evenly spaced points are drawn; the density
    underlay (skipped when ``density_bins`` is 0) uses all of them.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"plot needs 2-D points, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("plot needs at least one point")

    lo, hi = pts.min(axis=0), pts.max(axis=0)
    centre = 0.5 * (lo + hi)
    half = 0.5 * max(float((hi - lo).max()), 1e-9) * 1.05
    inner = SIZE - 2 * MARGIN

    def to_px(xy):
        u = (xy[:, 0] - (centre[0] - half)) / (2 * half) * inner + MARGIN
        v = SIZE - ((xy[:, 1] - (centre[1] - half)) / (2 * half) * inner + MARGIN)
        return u, v

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<title>{_escape(title)}</title>')

    if density_bins:
        rng_ = ((centre[0] - half, centre[0] + half), (centre[1] - half, centre[1] + half))
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=density_bins, range=rng_)
        cell = inner / density_bins
        peak = counts.max()
        out.append('<g id="density">')
        for i, j in zip(*np.nonzero(counts)):
            x = MARGIN + i * cell
            y = SIZE - MARGIN - (j + 1) * cell
            op = 0.6 * counts[i, j] / peak
            out.append(
                f'<rect x="{x:.3f}" y="{y:.3f}" width="{cell:.3f}" height="{cell:.3f}" '
                f'fill="#000000" fill-opacity="{op:.4f}"/>'
            )
        out.append("</g>")

    keep = _subsample(pts.shape[0], MAX_POINTS)
    u, v = to_px(pts[keep])
    lab = None if labels is None else np.asarray(labels).ravel()[keep]
    out.append('<g id="points">')
    for k in range(keep.size):
        colour = PALETTE[0] if lab is None else PALETTE[int(lab[k]) % len(PALETTE)]
        out.append(f'<circle cx="{u[k]:.3f}" cy="{v[k]:.3f}" r="1" fill="{colour}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text):
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
