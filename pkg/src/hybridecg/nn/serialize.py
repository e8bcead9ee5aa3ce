"""Binary model files.

Layout (all integers little-endian)::

    magic        4 bytes  b"ECGM"
    version      uint16
    variant      uint8 length + ASCII
    n_classes    uint16
    input shape  uint8 ndim + uint32 dims
    n_extra      uint16
    layer table  uint16 count, then per layer:
                   uint8 kind length + ASCII kind,
                   uint8 n_ints + int32 values, uint8 n_floats + float64 values
    tensors      uint16 count, then per tensor:
                   uint8 name length + ASCII name, uint8 ndim + uint32 dims,
                   float32 data (C order)
    metadata     uint32 length + UTF-8 JSON
    checksum     uint32 CRC-32 of every preceding byte

Layer arguments are written in each layer type's field order; integer
fields go to the int list and float fields (batch-norm epsilon and momentum)
to the float list.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib

import numpy as np

from .layers import LAYER_TYPES
from .model import LayerSpec, ModelConfig, Network

MAGIC = b"ECGM"
VERSION = 1
FLOAT_FIELDS = {"eps", "momentum"}


class ModelFileError(ValueError):
    """The model file is corrupt, truncated or of an unsupported version."""


def _put_str(buf, s: str):
    raw = s.encode("ascii")
    buf.write(struct.pack("<B", len(raw)))
    buf.write(raw)


def _put_shape(buf, shape):
    buf.write(struct.pack("<B", len(shape)))
    buf.write(struct.pack(f"<{len(shape)}I", *shape))


def dumps_model(net: Network, metadata: dict | None = None) -> bytes:
    cfg = net.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    _put_str(buf, cfg.variant)
    buf.write(struct.pack("<H", cfg.n_classes))
    _put_shape(buf, cfg.input_shape)
    buf.write(struct.pack("<H", cfg.n_extra))

    buf.write(struct.pack("<H", len(cfg.layers)))
    for spec in cfg.layers:
        fields = LAYER_TYPES[spec.kind].fields
        ints = [int(spec.args[f]) for f in fields if f not in FLOAT_FIELDS]
        floats = [float(spec.args[f]) for f in fields if f in FLOAT_FIELDS]
        _put_str(buf, spec.kind)
        buf.write(struct.pack(f"<B{len(ints)}i", len(ints), *ints))
        buf.write(struct.pack(f"<B{len(floats)}d", len(floats), *floats))

    state = net.state()
    buf.write(struct.pack("<H", len(state)))
    for name, value in state.items():
        _put_str(buf, name)
        _put_shape(buf, value.shape)
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())

    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError("model file truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def string(self) -> str:
        (n,) = self.unpack("<B")
        return self.take(n).decode("ascii")

    def shape(self) -> tuple:
        (nd,) = self.unpack("<B")
        return self.unpack(f"<{nd}I")


def loads_model(data: bytes) -> tuple[Network, dict]:
    if len(data) < 10 or data[:4] != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    (version,) = struct.unpack("<H", data[4:6])
    if version != VERSION:
        raise ModelFileError(f"model file version {version}, this reader supports {VERSION}")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ModelFileError("model file checksum mismatch")

    r = _Reader(payload)
    r.take(6)
    variant = r.string()
    (n_classes,) = r.unpack("<H")
    input_shape = tuple(r.shape())
    (n_extra,) = r.unpack("<H")
    (n_layers,) = r.unpack("<H")
    layers = []
    for _ in range(n_layers):
        kind = r.string()
        if kind not in LAYER_TYPES:
            raise ModelFileError(f"unknown layer kind {kind!r}")
        (ni,) = r.unpack("<B")
        ints = list(r.unpack(f"<{ni}i"))
        (nf,) = r.unpack("<B")
        floats = list(r.unpack(f"<{nf}d"))
        args = {}
        for f in LAYER_TYPES[kind].fields:
            args[f] = floats.pop(0) if f in FLOAT_FIELDS else ints.pop(0)
        layers.append(LayerSpec(kind, args))
    config = ModelConfig(variant, layers, input_shape, n_extra, n_classes)
    net = Network(config, seed=0, dtype=np.float32)

    (n_tensors,) = r.unpack("<H")
    state = {}
    for _ in range(n_tensors):
        name = r.string()
        shape = r.shape()
        count = int(np.prod(shape)) if shape else 1
        state[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    try:
        net.load_state(state)
    except ValueError as exc:
        raise ModelFileError(str(exc)) from None
    (meta_len,) = r.unpack("<I")
    metadata = json.loads(r.take(meta_len).decode("utf-8"))
    if r.pos != len(payload):
        raise ModelFileError("trailing bytes in model file")
    return net, metadata


def save_model(net: Network, path: os.PathLike | str, metadata: dict | None = None):
    with open(path, "wb") as fh:
        fh.write(dumps_model(net, metadata))


def load_model(path: os.PathLike | str) -> tuple[Network, dict]:
    """Read a model file; returns the network and its metadata block."""
    with open(path, "rb") as fh:
        return loads_model(fh.read())
