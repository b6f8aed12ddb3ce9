"""Binary checkpoint container for :class:`NetParams`.

Layout (all integers little-endian)::

    magic   4 bytes  b"GSNP"
    version u32      1
    hlen    u32      length of the JSON header in bytes
    header  hlen     UTF-8 JSON: {"arch", "dims", "buffers": [[name, shape]...],
                                  "params": [[name, shape]...]}
    data             float64 LE; every buffer then every parameter, in header order

Parameters are written in the architecture's documented order
(``param_shapes``), so two identical networks produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError
from . import disgnet, mlp
from .disgnet import NetParams

MAGIC = b"GSNP"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def expected_shapes(arch: str, dims: dict) -> dict:
    if arch == "disgnet":
        return disgnet.param_shapes(dims)
    if arch == "plain-mlp":
        return mlp.param_shapes(dims)
    raise CheckpointError(f"unknown architecture {arch!r}")


def to_bytes(params: NetParams) -> bytes:
    order = list(expected_shapes(params.arch, params.dims))
    if set(order) != set(params.values):
        raise CheckpointError("parameter names do not match the architecture")
    buffers = [(k, np.asarray(params.buffers[k], dtype=float)) for k in sorted(params.buffers)]
    values = [(k, np.asarray(params.values[k], dtype=float)) for k in order]
    header = {
        "arch": params.arch,
        "dims": params.dims,
        "buffers": [[k, list(v.shape)] for k, v in buffers],
        "params": [[k, list(v.shape)] for k, v in values],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    data = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in buffers + values)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + data


def save(params: NetParams, path) -> None:
    Path(path).write_bytes(to_bytes(params))


def from_bytes(data: bytes, like: NetParams | None = None) -> NetParams:
    """Decode a checkpoint; with ``like`` the architecture and every shape must match it."""
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint is shorter than its fixed header")
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version}, reader supports {VERSION}")
    try:
        header = json.loads(data[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    arch, dims = header["arch"], header["dims"]
    expected = expected_shapes(arch, dims)
    listed = {name: tuple(shape) for name, shape in header["params"]}
    if listed != expected or [n for n, _ in header["params"]] != list(expected):
        raise CheckpointError("checkpoint parameter shapes do not match its dims header")
    if like is not None:
        if like.arch != arch:
            raise CheckpointError(f"checkpoint holds {arch!r}, expected {like.arch!r}")
        for name, arr in like.values.items():
            if listed.get(name) != arr.shape:
                raise CheckpointError(f"shape mismatch for {name}: file {listed.get(name)}, "
                                      f"expected {arr.shape}")
    entries = [(n, tuple(s)) for n, s in header["buffers"]] + list(listed.items())
    total = sum(int(np.prod(s, dtype=int)) for _, s in entries)
    offset = _PREFIX.size + hlen
    if len(data) - offset != 8 * total:
        raise CheckpointError(f"checkpoint payload has {len(data) - offset} bytes, "
                              f"expected {8 * total}")
    flat = np.frombuffer(data, dtype="<f8", count=total, offset=offset).astype(float)
    arrays, pos = {}, 0
    for name, shape in entries:
        size = int(np.prod(shape, dtype=int))
        arrays[name] = flat[pos:pos + size].reshape(shape)
        pos += size
    n_buf = len(header["buffers"])
    buffers = {n: arrays[n] for n, _ in entries[:n_buf]}
    for k, v in buffers.items():
        if v.shape == ():
            buffers[k] = np.float64(v)
    values = {n: arrays[n] for n in listed}
    return NetParams(arch, dims, values, buffers)


def load(path, like: NetParams | None = None) -> NetParams:
    return from_bytes(Path(path).read_bytes(), like)
