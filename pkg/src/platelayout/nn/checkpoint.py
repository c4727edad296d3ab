"""Self-describing binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"PLTCKPT\\0"
    uint32    format version
    uint32    header length, then that many bytes of UTF-8 JSON
              (network config plus free-form metadata)
    uint32    tensor count, then per tensor:
              uint16 name length, name, uint8 ndim, ndim x uint32 dims,
              prod(dims) float64 values
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .adam import AdamState
from .unet import NetworkParams, UNetConfig, build_network

MAGIC = b"PLTCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<H", len(raw)) + raw)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_tensor(fh):
    (nlen,) = struct.unpack("<H", fh.read(2))
    name = fh.read(nlen).decode("utf-8")
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    buf = fh.read(8 * count)
    if len(buf) != 8 * count:
        raise CheckpointError(f"truncated tensor {name!r}")
    return name, np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)


def dumps(net: NetworkParams, metadata: dict | None = None, adam: AdamState | None = None) -> bytes:
    tensors = dict(net.state())
    header = {"config": net.config.to_dict(), "metadata": metadata or {}}
    if adam is not None:
        header["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                          "eps": adam.eps, "step": adam.step}
        for k, (m, v) in enumerate(zip(adam.m, adam.v)):
            tensors[f"adam.m.{k}"] = m
            tensors[f"adam.v.{k}"] = v
    fh = io.BytesIO()
    fh.write(MAGIC)
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    fh.write(struct.pack("<II", VERSION, len(hdr)) + hdr)
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        _write_tensor(fh, name, arr)
    return fh.getvalue()


def loads(data: bytes):
    """Return ``(net, metadata, adam_state_or_None)``."""
    fh = io.BytesIO(data)
    if fh.read(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", fh.read(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(fh.read(hlen).decode("utf-8"))
    (count,) = struct.unpack("<I", fh.read(4))
    tensors = dict(_read_tensor(fh) for _ in range(count))
    if fh.read(1):
        raise CheckpointError("trailing bytes after last tensor")
    net = build_network(UNetConfig(**header["config"]), np.random.default_rng(0))
    adam = None
    if "adam" in header:
        a = header["adam"]
        n = len(net.parameters())
        adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"],
                         [tensors.pop(f"adam.m.{k}").copy() for k in range(n)] if a["step"] else [],
                         [tensors.pop(f"adam.v.{k}").copy() for k in range(n)] if a["step"] else [])
    net.load_state(tensors)
    return net, header["metadata"], adam


def save(path, net: NetworkParams, metadata: dict | None = None, adam: AdamState | None = None) -> None:
    Path(path).write_bytes(dumps(net, metadata, adam))


def load(path):
    return loads(Path(path).read_bytes())
