"""Interpolation weight ``f(t) = 1 - gamma**t`` and the uniform timestep grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Schedule", "f_of_t", "grid"]


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def f_of_t(t, gamma):
    """Weight on the data endpoint at time ``t``; accepts scalars or arrays."""
    _check_gamma(gamma)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or not np.all(np.isfinite(t_arr)):
        raise ValueError("t must lie in [0, 1]")
    out = 1.0 - np.power(gamma, t_arr)
    return float(out) if out.ndim == 0 else out


def grid(n_steps):
    """``[(i / n, 1 / n) for i in range(n)]``."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    n = int(n_steps)
    return [(i / n, 1.0 / n) for i in range(n)]


@dataclass(frozen=True)
class Schedule:
    gamma: float = 0.009
    n_steps: int = 100

    def __post_init__(self):
        _check_gamma(self.gamma)
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self):
        return 1.0 / self.n_steps

    def f(self, t):
        return f_of_t(t, self.gamma)

    def decay(self, t):
        """``gamma**t``, the weight left on the prior (``1 - f(t)``)."""
        return np.power(self.gamma, np.asarray(t, dtype=np.float64))

    def grid(self):
        return grid(self.n_steps)

    def times(self):
        """Grid nodes ``i / n`` as an array."""
        return np.arange(self.n_steps) / self.n_steps
