"""Run configuration: defaults, bundled presets and ``key = value`` files.

Precedence, lowest first: field defaults, ``--preset``, ``--config``, flags.

Keys (one per :class:`RunConfig` field)::

    dataset, n_samples              dataset name and size for gen-data
    family                          gaussian | laplace
    gamma, n_steps                  schedule
    eps0, beta0                     prior spread
    lambda_x, lambda_v              loss weights
    p_mask, p_atom_mask             context masking
    laplace_literal                 keep the Laplace loss constant
    hidden_dim, depth, time_embed_dim
    lr, beta1, beta2, adam_eps      optimizer
    epochs, batch_size, checkpoint_every
    seed, out, count
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from importlib import resources

__all__ = ["RunConfig", "PRESETS", "parse_config_text", "load_config_file", "load_preset"]

PRESETS = (
    "swissroll",
    "swissroll-moons",
    "chessboard-sparse",
    "chessboard-dense",
    "typed-mixture",
    "polygon5",
)


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "swissroll"
    n_samples: int = 100_000
    family: str = "gaussian"
    gamma: float = 0.009
    n_steps: int = 100
    eps0: float = 1.0
    beta0: float = 1.0
    lambda_x: float = 1.0
    lambda_v: float = 1.0
    p_mask: float = 0.3
    p_atom_mask: float = 0.3
    laplace_literal: bool = False
    hidden_dim: int = 64
    depth: int = 6
    time_embed_dim: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 2048
    checkpoint_every: int = 0
    seed: int = 0
    out: str = "."
    count: int = 10_000

    def __post_init__(self):
        if self.family not in ("gaussian", "laplace"):
            raise ValueError(f"family must be gaussian or laplace, got {self.family!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.eps0 <= 0 or self.beta0 <= 0:
            raise ValueError("eps0 and beta0 must be > 0")
        if not (0.0 <= self.p_mask <= 1.0 and 0.0 <= self.p_atom_mask <= 1.0):
            raise ValueError("mask probabilities must lie in [0, 1]")
        for name in ("n_samples", "n_steps", "depth", "hidden_dim", "epochs", "batch_size", "count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def estimator_params(self):
        keys = (
            "family", "gamma", "n_steps", "eps0", "beta0", "lambda_x", "lambda_v",
            "p_mask", "p_atom_mask", "laplace_literal", "hidden_dim", "depth",
            "time_embed_dim", "lr", "beta1", "beta2", "adam_eps", "epochs", "batch_size",
        )
        params = {k: getattr(self, k) for k in keys}
        params["random_state"] = self.seed
        return params

    def to_record(self):
        return dataclasses.asdict(self)

    def updated(self, values):
        return dataclasses.replace(self, **coerce(values))


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce_one(key, raw):
    if key not in _TYPES:
        raise ValueError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip()


def coerce(values):
    return {k: _coerce_one(k, v) for k, v in values.items()}


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return coerce(values)


def load_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def load_preset(name):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    text = resources.files("pif.presets").joinpath(f"{name}.cfg").read_text(encoding="utf-8")
    return parse_config_text(text)
