"""Files: point CSVs, mask CSVs, normalisation sidecars, checkpoints, loss logs.

Point CSV: header ``entity_id,point_id,x0,...,x{d-1}[,type]``, one row per
point, ``type`` an integer class id. Mask CSV: the same columns followed by
``fixed_position,fixed_type`` (0/1); fixed rows carry the context values.

Checkpoints are JSON documents with sorted keys. Float arrays are stored as
space-separated ``%.17g`` strings, which round-trip float64 exactly, so
save -> load -> save reproduces the file byte for byte.

Every writer goes through :func:`atomic_write` (temp file, then rename).
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile

import numpy as np

from .core import MaskSpec, PointSet
from .data import AffineNormalizer
from .net import AdamState, Weights

__all__ = [
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
    "CheckpointVersionError",
    "atomic_write",
    "format_float",
    "write_points_csv",
    "read_points_csv",
    "write_mask_csv",
    "read_mask_csv",
    "write_sidecar",
    "read_sidecar",
    "sidecar_path",
    "checkpoint_record",
    "save_checkpoint",
    "load_checkpoint",
    "restore_estimator",
    "write_loss_csv",
]

CHECKPOINT_FORMAT = "pif-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointVersionError(ValueError):
    pass


def atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the file the usual umask-derived mode.
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x):
    return "%.17g" % x


def _encode_array(a):
    return " ".join(format_float(v) for v in np.asarray(a, dtype=np.float64).ravel())


def _decode_array(s):
    if not s:
        return np.zeros(0)
    return np.array([float(v) for v in s.split()], dtype=np.float64)


# -- point and mask CSVs -----------------------------------------------------

def _point_rows(entities, extra=None):
    pos = entities.positions
    n, M, d = pos.shape
    labels = entities.type_index
    for e in range(n):
        for p in range(M):
            row = [str(e), str(p)] + [format_float(v) for v in pos[e, p]]
            if labels is not None:
                row.append(str(int(labels[e, p])))
            if extra is not None:
                row.extend(extra(e, p))
            yield row


def _header(d, typed, extra=()):
    cols = ["entity_id", "point_id"] + [f"x{i}" for i in range(d)]
    if typed:
        cols.append("type")
    return cols + list(extra)


def _csv_text(header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_points_csv(path, entities):
    if entities.positions.ndim != 3:
        raise ValueError("expected a batched PointSet")
    header = _header(entities.dim, entities.types is not None)
    atomic_write(path, _csv_text(header, _point_rows(entities)))


def _read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def _parse_points(path, header, rows, n_types, extra=()):
    d = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    typed = "type" in header
    expected = _header(d, typed, extra)
    if header != expected:
        raise ValueError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        ids = np.array([[int(r[0]), int(r[1])] for r in rows])
        pos = np.array([[float(v) for v in r[2:2 + d]] for r in rows])
        labels = np.array([int(r[2 + d]) for r in rows]) if typed else None
        tail = np.array([[int(v) for v in r[len(r) - len(extra):]] for r in rows]) if extra else None
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    n = ids[:, 0].max() + 1
    M = ids[:, 1].max() + 1
    if len(rows) != n * M:
        raise ValueError(f"{path}: expected {n} x {M} rows, got {len(rows)}")
    order = np.lexsort((ids[:, 1], ids[:, 0]))
    if not np.array_equal(ids[order], np.stack(np.meshgrid(np.arange(n), np.arange(M), indexing="ij"), -1).reshape(-1, 2)):
        raise ValueError(f"{path}: entity/point ids must cover a full grid")
    pos = pos[order].reshape(n, M, d)
    if labels is not None:
        labels = labels[order].reshape(n, M)
        K = n_types if n_types else int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= K:
            raise ValueError(f"{path}: type id out of range [0, {K})")
        entities = PointSet.from_indices(pos, labels, K=K)
    else:
        entities = PointSet(pos)
    if tail is not None:
        tail = tail[order].reshape(n, M, len(extra))
    return entities, tail


def read_points_csv(path, n_types=None):
    header, rows = _read_table(path)
    entities, _ = _parse_points(path, header, rows, n_types)
    return entities


def write_mask_csv(path, context, mask):
    fp = np.broadcast_to(mask.fixed_position, context.positions.shape[:2])
    ft = np.broadcast_to(mask.fixed_type, context.positions.shape[:2])
    header = _header(context.dim, context.types is not None, ("fixed_position", "fixed_type"))
    rows = _point_rows(context, extra=lambda e, p: (str(int(fp[e, p])), str(int(ft[e, p]))))
    atomic_write(path, _csv_text(header, rows))


def read_mask_csv(path, n_types=None):
    """Return ``(context, mask)`` from a mask CSV."""
    header, rows = _read_table(path)
    context, flags = _parse_points(path, header, rows, n_types, ("fixed_position", "fixed_type"))
    if np.any((flags != 0) & (flags != 1)):
        raise ValueError(f"{path}: mask flags must be 0 or 1")
    return context, MaskSpec(flags[..., 0] == 1, flags[..., 1] == 1)


# -- sidecars and logs ---------------------------------------------------------

def sidecar_path(csv_path):
    root, _ = os.path.splitext(os.fspath(csv_path))
    return root + ".norm.json"


def write_sidecar(path, dataset, normalizer, n_types, n_points):
    record = {
        "dataset": dataset,
        "n_points": int(n_points),
        "n_types": int(n_types),
        "normalization": normalizer.to_record(),
    }
    atomic_write(path, json.dumps(record, indent=1, sort_keys=True) + "\n")


def read_sidecar(path):
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    record["normalizer"] = AffineNormalizer.from_record(record["normalization"])
    return record


def write_loss_csv(path, losses, steps_per_epoch):
    rows = (
        (str(i), str(i // steps_per_epoch + 1), format_float(v)) for i, v in enumerate(losses)
    )
    atomic_write(path, _csv_text(["step", "epoch", "loss"], rows))


# -- checkpoints -------------------------------------------------------------

def checkpoint_record(estimator, run_config, normalization=None):
    """Snapshot of a fitted estimator as a JSON-ready dict."""
    opt = estimator.opt_state_
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        # The output directory is an invocation detail, not model state.
        "config": {k: v for k, v in run_config.to_record().items() if k != "out"},
        "shape": {
            "n_points": estimator.n_points_,
            "n_dims": estimator.n_dims_,
            "n_types": estimator.n_types_,
        },
        "normalization": normalization,
        "epoch": estimator.epochs_done_,
        "weights": _encode_array(estimator.weights_.flat),
        "optimizer": {
            "step": opt.step,
            "lr": opt.lr,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "m": _encode_array(opt.m),
            "v": _encode_array(opt.v),
        },
        "rng_state": estimator.rng_.bit_generator.state,
    }


def _dumps(record):
    return json.dumps(record, indent=1, sort_keys=True) + "\n"


def save_checkpoint(path, record):
    atomic_write(path, _dumps(record))


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        try:
            record = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a checkpoint ({exc})") from None
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint")
    if record.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint version {record.get('version')} != {CHECKPOINT_VERSION}"
        )
    return record


def restore_estimator(record):
    """Rebuild a fitted :class:`ParameterInterpolationFlow` from a checkpoint record."""
    from .config import RunConfig
    from .estimator import ParameterInterpolationFlow

    run_config = RunConfig(**record["config"])
    est = ParameterInterpolationFlow(**run_config.estimator_params())
    shape = record["shape"]
    M, d, K = shape["n_points"], shape["n_dims"], shape["n_types"]
    est.n_points_, est.n_dims_, est.n_types_ = M, d, K
    est.net_config_ = est._net_config(M, d, K)
    est.weights_ = Weights(est.net_config_, _decode_array(record["weights"]))
    opt = record["optimizer"]
    est.opt_state_ = AdamState(
        _decode_array(opt["m"]), _decode_array(opt["v"]), opt["step"],
        opt["lr"], opt["beta1"], opt["beta2"], opt["eps"],
    )
    est.rng_ = np.random.default_rng()
    est.rng_.bit_generator.state = record["rng_state"]
    est.epochs_done_ = record["epoch"]
    est.loss_curve_ = []
    return est, run_config
