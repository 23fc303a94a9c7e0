"""Command line: ``pif {gen-data,train,sample,eval,plot}``.

Exit status is 0 on success. Failures print a single line
``error: <category>: <message>`` to stderr and exit with the category's code:
usage 2, io 3, invalid-input 4, version 5, numeric 6.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import io
from .config import PRESETS, RunConfig, load_config_file, load_preset
from .core import PointSet
from .data import DATASETS, DatasetSpec, generate
from .estimator import ParameterInterpolationFlow
from .metrics import (
    DEFAULT_BINS,
    Histogram2D,
    class_proportion_error,
    hist_jsd,
    histogram_bounds,
    outlier_rate,
)
from .plot import scatter_svg

__all__ = ["main", "build_parser"]

EXIT_CODES = {"usage": 2, "io": 3, "invalid-input": 4, "version": 5, "numeric": 6}


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--preset", choices=PRESETS, help="bundled run preset")
    p.add_argument("--seed", type=int, help="random seed (u64)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--steps", type=int, help="number of grid steps")
    p.add_argument("--count", type=int, help="number of entities to generate or sample")
    p.add_argument("--mask", help="mask/context CSV for conditional sampling")
    p.add_argument("--norm", help="normalisation sidecar (.norm.json)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="pif", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="write a toy dataset CSV")

    p = sub.add_parser("train", parents=[common], help="train on a dataset CSV")
    p.add_argument("data")

    p = sub.add_parser("sample", parents=[common], help="generate entities from a checkpoint")
    p.add_argument("checkpoint")

    p = sub.add_parser("eval", parents=[common], help="compare generated and reference CSVs")
    p.add_argument("generated")
    p.add_argument("reference")

    p = sub.add_parser("plot", parents=[common], help="render a 2-D CSV as SVG")
    p.add_argument("samples")
    p.add_argument("--output", help="SVG path (default: <out>/<samples stem>.svg)")
    return parser


def resolve_config(args, base=None):
    cfg = base if base is not None else RunConfig()
    if args.preset:
        cfg = cfg.updated(load_preset(args.preset))
    if args.config:
        cfg = cfg.updated(load_config_file(args.config))
    flags = {}
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.out is not None:
        flags["out"] = args.out
    if args.steps is not None:
        flags["n_steps"] = args.steps
    if args.count is not None:
        flags["count"] = args.count
    return cfg.updated(flags) if flags else cfg


def cmd_gen_data(args):
    cfg = resolve_config(args)
    if cfg.dataset not in DATASETS:
        raise ValueError(f"unknown dataset {cfg.dataset!r}")
    n = args.count if args.count is not None else cfg.n_samples
    norm = io.read_sidecar(args.norm)["normalizer"] if args.norm else None
    entities, normalizer = generate(DatasetSpec(cfg.dataset, n, cfg.seed, norm))
    path = os.path.join(cfg.out, f"{cfg.dataset}.csv")
    io.write_points_csv(path, entities)
    io.write_sidecar(io.sidecar_path(path), cfg.dataset, normalizer, entities.n_types,
                     entities.n_points)
    return [path, io.sidecar_path(path)]


def _data_sidecar(path):
    side = io.sidecar_path(path)
    return io.read_sidecar(side) if os.path.exists(side) else None


def cmd_train(args):
    cfg = resolve_config(args)
    side = _data_sidecar(args.data)
    n_types = side["n_types"] if side else None
    entities = io.read_points_csv(args.data, n_types=n_types or None)
    est = ParameterInterpolationFlow(**cfg.estimator_params())
    norm_record = side["normalization"] if side else None
    ckpt_path = os.path.join(cfg.out, "checkpoint.json")

    def on_epoch(estimator, epoch):
        if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            io.save_checkpoint(ckpt_path, io.checkpoint_record(estimator, cfg, norm_record))

    est.fit(entities, callback=on_epoch)
    io.save_checkpoint(ckpt_path, io.checkpoint_record(est, cfg, norm_record))
    loss_path = os.path.join(cfg.out, "loss.csv")
    io.write_loss_csv(loss_path, est.loss_curve_, math.ceil(len(entities) / cfg.batch_size))
    return [ckpt_path, loss_path]


def cmd_sample(args):
    record = io.load_checkpoint(args.checkpoint)
    est, trained_cfg = io.restore_estimator(record)
    # Sampling flags override the stored run config; training fields stay as saved.
    cfg = resolve_config(args, base=trained_cfg)
    count = args.count if args.count is not None else cfg.count
    mask = context = None
    if args.mask:
        context, mask = io.read_mask_csv(args.mask, n_types=est.n_types_ or None)
        if context.positions.shape[1:] != (est.n_points_, est.n_dims_):
            raise ValueError("mask file shape does not match the checkpoint")
        if bool(context.n_types) != bool(est.n_types_) or (
            context.n_types and context.n_types != est.n_types_
        ):
            raise ValueError("mask file types do not match the checkpoint")
        rows = np.arange(count) % len(context)
        context = context[rows]
        mask = mask[rows]
    steps = args.steps if args.steps is not None else None
    seed = args.seed if args.seed is not None else cfg.seed
    out = est.sample(count, mask=mask, context=context, random_state=seed, n_steps=steps)
    path = os.path.join(cfg.out, "samples.csv")
    io.write_points_csv(path, out)
    return [path]


def evaluate(generated, reference, bins=DEFAULT_BINS):
    """Metric rows ``(name, value, params)`` comparing two batched PointSets."""
    if generated.positions.shape[1:] != reference.positions.shape[1:]:
        raise ValueError(
            f"schema mismatch: entities of shape {generated.positions.shape[1:]} vs "
            f"{reference.positions.shape[1:]}"
        )
    if (generated.types is None) != (reference.types is None):
        raise ValueError("schema mismatch: only one file has types")
    d = reference.dim
    gen_pts = generated.positions.reshape(-1, d)
    ref_pts = reference.positions.reshape(-1, d)
    rows = []
    if d == 2:
        bounds = histogram_bounds(ref_pts)
        jsd = hist_jsd(
            Histogram2D.from_points(gen_pts, bounds, bins),
            Histogram2D.from_points(ref_pts, bounds, bins),
        )
        b = ";".join(io.format_float(v) for ax in bounds for v in ax)
        rows.append(("hist_jsd", jsd, f"B={bins};bounds={b}"))
    box = np.stack([ref_pts.min(axis=0), ref_pts.max(axis=0)], axis=1)
    b = ";".join(io.format_float(v) for v in box.ravel())
    rows.append(("outlier_rate", outlier_rate(gen_pts, box, 1.5), f"factor=1.5;bounds={b}"))
    if reference.types is not None:
        K = max(reference.n_types, generated.n_types)
        ref_labels = reference.type_index.ravel()
        gen_labels = generated.type_index.ravel()
        ref_prop = np.bincount(ref_labels, minlength=K) / ref_labels.size
        gen_prop = np.bincount(gen_labels, minlength=K) / gen_labels.size
        rows.append(("class_proportion_error", class_proportion_error(gen_labels, ref_prop), f"K={K}"))
        for k in range(K):
            rows.append((f"class_proportion_{k}", gen_prop[k], f"reference={io.format_float(ref_prop[k])}"))
    return rows


def cmd_eval(args):
    cfg = resolve_config(args)
    reference = io.read_points_csv(args.reference)
    generated = io.read_points_csv(args.generated, n_types=reference.n_types or None)
    if reference.types is not None and generated.types is not None and generated.n_types < reference.n_types:
        generated = PointSet.from_indices(generated.positions, generated.type_index, reference.n_types)
    rows = evaluate(generated, reference)
    text = "metric,value,params\n" + "".join(
        f"{name},{io.format_float(value)},{params}\n" for name, value, params in rows
    )
    path = os.path.join(cfg.out, "metrics.csv")
    io.atomic_write(path, text)
    return [path]


def cmd_plot(args):
    cfg = resolve_config(args)
    entities = io.read_points_csv(args.samples)
    if entities.dim != 2:
        raise ValueError(f"plot needs 2-D data, got d={entities.dim}")
    pts = entities.positions.reshape(-1, 2)
    if args.norm:
        pts = io.read_sidecar(args.norm)["normalizer"].inverse_transform(pts)
    labels = None if entities.types is None else entities.type_index.ravel()
    svg = scatter_svg(pts, labels, title=os.path.basename(args.samples))
    path = args.output or os.path.join(
        cfg.out, os.path.splitext(os.path.basename(args.samples))[0] + ".svg"
    )
    io.atomic_write(path, svg)
    return [path]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def _category(exc):
    if isinstance(exc, io.CheckpointVersionError):
        return "version"
    if isinstance(exc, FloatingPointError):
        return "numeric"
    if isinstance(exc, (OSError, json.JSONDecodeError)):
        return "io"
    return "invalid-input"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        written = COMMANDS[args.command](args)
    except (ValueError, OSError, FloatingPointError, KeyError) as exc:
        category = _category(exc)
        message = " ".join(str(exc).split())
        print(f"error: {category}: {message}", file=sys.stderr)
        return EXIT_CODES[category]
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
