"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"ACTCKPT\\0"  u32 version  u64 header_len  header (UTF-8 JSON)
    per block:  u32 ndim  u64 dims[ndim]  float64 data
    32-byte SHA-256 of everything before it

The JSON header echoes the model spec, window settings, training config and
final metrics, and lists the blocks in file order.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .fileio import PathLike, atomic_write
from .models.builders import build_model, spec_from_dict, spec_to_dict
from .models.training import TrainedModel

MAGIC = b"ACTCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _canonical(d: dict) -> dict:
    return json.loads(json.dumps(d, sort_keys=True))


def checkpoint_bytes(model: TrainedModel) -> bytes:
    graph = model.graph
    if not graph.ready:
        raise CheckpointError("graph parameters are not initialised")
    blocks = [("param", k, v) for k, v in graph.parameters().items()]
    blocks += [("buffer", k, v) for k, v in graph.buffers().items()]
    for _, key, v in blocks:
        if not np.all(np.isfinite(v)):
            raise CheckpointError(f"{key} holds non-finite values")
    header = {
        "spec": model.spec,
        "graph": graph.describe(),
        "window": model.window,
        "train_config": model.train_config,
        "metrics": model.metrics,
        "blocks": [{"kind": kind, "key": key, "shape": list(v.shape)} for kind, key, v in blocks],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    for _, _, v in blocks:
        parts.append(struct.pack("<I", v.ndim) + struct.pack(f"<{v.ndim}Q", *v.shape))
        parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: TrainedModel, path: PathLike) -> None:
    atomic_write(path, checkpoint_bytes(model))


def _read(data: bytes, at: int, n: int, what: str) -> bytes:
    if at + n > len(data):
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data[at:at + n]


def checkpoint_from_bytes(data: bytes, expect_spec: Optional[Union[dict, str]] = None) -> TrainedModel:
    if len(data) < len(MAGIC) + 12 + 32 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch: checkpoint is corrupted")
    at = len(MAGIC)
    version, head_len = struct.unpack("<IQ", _read(body, at, 12, "version"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    at += 12
    header = json.loads(_read(body, at, head_len, "header").decode("utf-8"))
    at += head_len

    spec = header["spec"]
    if isinstance(expect_spec, str):
        if spec["kind"] != expect_spec:
            raise CheckpointError(f"checkpoint holds a {spec['kind']} model, not {expect_spec}")
    elif expect_spec is not None and _canonical(expect_spec) != _canonical(spec):
        raise CheckpointError(f"checkpoint spec {spec} does not match requested {expect_spec}")

    graph = build_model(spec_from_dict(spec), seed=0)
    if _canonical(graph.describe()) != _canonical(header["graph"]):
        raise CheckpointError("stored graph layout does not match its spec")
    for block in header["blocks"]:
        (ndim,) = struct.unpack("<I", _read(body, at, 4, block["key"]))
        at += 4
        shape = struct.unpack(f"<{ndim}Q", _read(body, at, 8 * ndim, block["key"]))
        at += 8 * ndim
        if list(shape) != block["shape"]:
            raise CheckpointError(f"block {block['key']} shape header disagrees with the index")
        n = int(np.prod(shape)) * 8
        arr = np.frombuffer(_read(body, at, n, block["key"]), dtype="<f8").astype(np.float64).reshape(shape)
        at += n
        try:
            if block["kind"] == "param":
                graph.set_param(block["key"], arr)
            else:
                graph.set_buffer(block["key"], arr)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"block {block['key']} does not fit the model: {exc}") from None
    if at != len(body):
        raise CheckpointError("unexpected trailing data in checkpoint")
    expected = set(graph.parameters()) | set(graph.buffers())
    if {b["key"] for b in header["blocks"]} != expected:
        raise CheckpointError("checkpoint does not cover every parameter")
    graph.ready = True
    return TrainedModel(graph, spec, header["window"], header["train_config"], header["metrics"])


def load_checkpoint(path: PathLike, expect_spec: Optional[Union[dict, str]] = None) -> TrainedModel:
    return checkpoint_from_bytes(Path(path).read_bytes(), expect_spec)


def make_model(graph, spec, window: dict, train_config: Optional[dict] = None,
               metrics: Optional[dict] = None) -> TrainedModel:
    return TrainedModel(graph, spec if isinstance(spec, dict) else spec_to_dict(spec), window,
                        train_config or {}, metrics or {})
