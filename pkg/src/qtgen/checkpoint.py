"""Binary checkpoint container and checkpoint averaging.

Layout (all integers little-endian)::

    b"QTGCKPT1"
    u32 manifest length, manifest JSON (format version, fingerprints, step, dev metric, dims)
    u32 tensor count
    per tensor: u32 name length, UTF-8 name, u32 ndim, u64 * ndim dims, float64 payload (row-major)
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import ModelDims, ModelParams

MAGIC = b"QTGCKPT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    dims: ModelDims
    step: int = 0
    dev_metric: Optional[float] = None
    config_fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def model(self) -> ModelParams:
        return ModelParams(self.dims, self.params)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_fingerprint": ckpt.dims.fingerprint(),
        "config_fingerprint": ckpt.config_fingerprint,
        "step": ckpt.step,
        "dev_metric": ckpt.dev_metric,
        "dims": asdict(ckpt.dims),
        "extra": ckpt.extra,
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(ckpt.params))]
    for name, arr in ckpt.params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, expect_fingerprint: Optional[str] = None) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (mlen,) = struct.unpack("<I", take(4))
    manifest = json.loads(take(mlen))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('format_version')}")
    dims = ModelDims(**manifest["dims"])
    if manifest["model_fingerprint"] != dims.fingerprint():
        raise CheckpointError(f"{path}: manifest fingerprint does not match its dimensions")
    if expect_fingerprint is not None and manifest["model_fingerprint"] != expect_fingerprint:
        raise CheckpointError(
            f"{path}: model fingerprint {manifest['model_fingerprint']} != expected {expect_fingerprint}"
        )
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    expected = dims.shapes()
    for name, shape in expected.items():
        if name not in params:
            raise CheckpointError(f"{path}: missing tensor {name}")
        if params[name].shape != shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {params[name].shape}, expected {shape}")
    return Checkpoint(
        params=params,
        dims=dims,
        step=manifest["step"],
        dev_metric=manifest["dev_metric"],
        config_fingerprint=manifest["config_fingerprint"],
        extra=manifest.get("extra", {}),
    )


def average_params(param_sets: Sequence[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    """Elementwise mean of identically shaped named tensors."""
    if not param_sets:
        raise CheckpointError("no checkpoints to average")
    names = list(param_sets[0])
    for i, ps in enumerate(param_sets[1:], start=1):
        if set(ps) != set(names):
            diff = sorted(set(ps) ^ set(names))
            raise CheckpointError(f"checkpoint {i}: tensor names differ at {diff[0]}")
        for name in names:
            if ps[name].shape != param_sets[0][name].shape:
                raise CheckpointError(
                    f"checkpoint {i}: tensor {name} shape {ps[name].shape} != {param_sets[0][name].shape}"
                )
    out = {}
    for name in names:
        stacked = np.stack([ps[name] for ps in param_sets])
        # sorting first makes the float sum independent of checkpoint order
        mean = np.sort(stacked, axis=0).sum(axis=0) / len(param_sets)
        # identical inputs must come back bit-identical
        same = np.all(stacked == stacked[0], axis=0)
        out[name] = np.where(same, stacked[0], mean)
    return out


def average_checkpoints(ckpts: Sequence[Checkpoint]) -> Checkpoint:
    if not ckpts:
        raise CheckpointError("no checkpoints to average")
    for c in ckpts[1:]:
        if c.dims != ckpts[0].dims:
            raise CheckpointError("checkpoints come from different model configurations")
    avg = average_params([c.params for c in ckpts])
    return Checkpoint(
        params=avg,
        dims=ckpts[0].dims,
        step=max(c.step for c in ckpts),
        dev_metric=None,
        config_fingerprint=ckpts[0].config_fingerprint,
        extra={"averaged_steps": [c.step for c in ckpts]},
    )


def nearest_checkpoints(ckpts: Sequence[Checkpoint], k: int) -> List[Checkpoint]:
    """The ``k`` checkpoints closest in step order to the best-dev one, inclusive."""
    if not ckpts:
        raise CheckpointError("no checkpoints")
    ordered = sorted(ckpts, key=lambda c: c.step)
    scored = [i for i, c in enumerate(ordered) if c.dev_metric is not None]
    if scored:
        # later (longer trained) checkpoint wins ties on the dev metric
        best = max(scored, key=lambda i: (ordered[i].dev_metric, i))
    else:
        best = len(ordered) - 1
    k = min(k, len(ordered))
    lo = max(0, min(best - (k - 1) // 2, len(ordered) - k))
    return ordered[lo:lo + k]
