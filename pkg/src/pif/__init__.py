"""Generative modelling by interpolating distribution parameters.

A datum is encoded as a Dirac endpoint (zero variance or scale for
coordinates, a one-hot concentration for categorical types). Parameters are
interpolated between that endpoint and a fixed prior with the weight
``f(t) = 1 - gamma**t``; a network learns to recover the endpoint from a draw
of the interpolated distribution, and sampling iterates
draw -> predict -> re-interpolate over a uniform time grid.
"""

from .core import LossWeights, MaskSpec, PointSet
from .data import AffineNormalizer, DatasetSpec, generate
from .estimator import ParameterInterpolationFlow
from .schedule import Schedule

__all__ = [
    "AffineNormalizer",
    "DatasetSpec",
    "LossWeights",
    "MaskSpec",
    "ParameterInterpolationFlow",
    "PointSet",
    "Schedule",
    "generate",
]

__version__ = "0.1.0"
