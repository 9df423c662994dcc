"""Versioned binary checkpoint format (little-endian, fixed-width fields).

Layout (see README for the byte-level table):

    magic "PWNC" | u32 version | u8 storage dtype (4=f32, 8=f64)
    u64 rng step counter | u32 config-text length | utf-8 config text
    u8 input ndim | u32 dims...
    u32 layer count, then per layer: u16 name length | name | u8 kind code |
    kind parameters | presence-flagged arrays (weights, bias, bn state) |
    u8 init-std flag | f64 init std
    u8 optimizer flag | u64 t | u32 tensor count | tensors (m then v)

Array encoding: u8 dtype code | u8 ndim | u32 dims... | raw little-endian
data. Weights/bias/bn arrays use the file's storage dtype; optimizer moments
are always f64 because they exist only to resume training exactly.

load(save(x)) is bitwise for every stored field. The default storage dtype is
f32 (deployment export); the trainer writes f64 checkpoints so a resumed run
is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .ioutil import atomic_write_bytes
from .nn import (BATCHNORM, CONV, DENSE, FLATTEN, RELU, BatchNormState,
                 LayerSpec, Network)
from .trainer import AdamState

MAGIC = b"PWNC"
VERSION = 1

_KIND_CODES = {CONV: 1, DENSE: 2, RELU: 3, BATCHNORM: 4, FLATTEN: 5}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


@dataclass
class Checkpoint:
    net: Network
    config_text: str = ""
    rng_step: int = 0
    opt_state: AdamState | None = None


def save_checkpoint(net: Network, path, config_text: str = "",
                    rng_step: int = 0, opt_state: AdamState | None = None,
                    dtype=np.float32) -> None:
    dtype = np.dtype(dtype)
    code = {np.dtype(np.float32): 4, np.dtype(np.float64): 8}.get(dtype)
    if code is None:
        raise ValueError("checkpoint dtype must be float32 or float64")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<IB", VERSION, code)
    out += struct.pack("<Q", rng_step)
    cfg = config_text.encode("utf-8")
    out += struct.pack("<I", len(cfg)) + cfg
    out += struct.pack("<B", len(net.input_shape))
    out += struct.pack(f"<{len(net.input_shape)}I", *net.input_shape)
    out += struct.pack("<I", len(net.layers))
    store = _DTYPES[code]
    names = net.names
    for i, spec in enumerate(net.layers):
        name = names[i].encode("utf-8")
        out += struct.pack("<H", len(name)) + name
        out += struct.pack("<B", _KIND_CODES[spec.kind])
        if spec.kind == CONV:
            out += struct.pack("<6I", spec.kh, spec.kw, spec.in_channels,
                               spec.out_channels, spec.stride, spec.padding)
        elif spec.kind == DENSE:
            out += struct.pack("<2I", spec.in_features, spec.out_features)
        elif spec.kind == BATCHNORM:
            out += struct.pack("<Idd", spec.channels, spec.eps, spec.momentum)
        _pack_optional_array(out, net.weights[i], store)
        _pack_optional_array(out, net.biases[i], store)
        bn = net.bn_state[i]
        out += struct.pack("<B", 1 if bn is not None else 0)
        if bn is not None:
            for arr in (bn.gamma, bn.beta, bn.running_mean, bn.running_var):
                _pack_array(out, arr, store)
        std = net.init_std[i]
        out += struct.pack("<B", 1 if std is not None else 0)
        if std is not None:
            out += struct.pack("<d", std)
    out += struct.pack("<B", 1 if opt_state is not None else 0)
    if opt_state is not None:
        out += struct.pack("<QI", opt_state.t, len(opt_state.m))
        for arr in opt_state.m + opt_state.v:
            _pack_array(out, arr, _DTYPES[8])
    atomic_write_bytes(path, bytes(out))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, str(path))
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC!r}, found {magic!r}")
    version, code = r.unpack("<IB")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version, expected {VERSION}, found {version}")
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    (rng_step,) = r.unpack("<Q")
    (cfg_len,) = r.unpack("<I")
    config_text = r.take(cfg_len).decode("utf-8")
    (ndim,) = r.unpack("<B")
    input_shape = tuple(r.unpack(f"<{ndim}I"))
    (n_layers,) = r.unpack("<I")
    layers: list[LayerSpec] = []
    weights, biases, bn_states, init_stds = [], [], [], []
    for _ in range(n_layers):
        (name_len,) = r.unpack("<H")
        r.take(name_len)  # names are regenerated from the layer list
        (kcode,) = r.unpack("<B")
        kind = _CODE_KINDS.get(kcode)
        if kind is None:
            raise FormatError(f"{path}: unknown layer kind code {kcode}")
        if kind == CONV:
            kh, kw, cin, cout, stride, pad = r.unpack("<6I")
            spec = LayerSpec(CONV, kh=kh, kw=kw, in_channels=cin,
                             out_channels=cout, stride=stride, padding=pad)
        elif kind == DENSE:
            nin, nout = r.unpack("<2I")
            spec = LayerSpec(DENSE, in_features=nin, out_features=nout)
        elif kind == BATCHNORM:
            channels, eps, momentum = r.unpack("<Idd")
            spec = LayerSpec(BATCHNORM, channels=channels, eps=eps, momentum=momentum)
        else:
            spec = LayerSpec(kind)
        layers.append(spec)
        weights.append(r.optional_array())
        biases.append(r.optional_array())
        (has_bn,) = r.unpack("<B")
        if has_bn:
            bn_states.append(BatchNormState(*(r.array() for _ in range(4))))
        else:
            bn_states.append(None)
        (has_std,) = r.unpack("<B")
        init_stds.append(r.unpack("<d")[0] if has_std else None)
    (has_opt,) = r.unpack("<B")
    opt_state = None
    if has_opt:
        t, count = r.unpack("<QI")
        arrs = [r.array() for _ in range(2 * count)]
        opt_state = AdamState(t, arrs[:count], arrs[count:])
    if not r.done():
        raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    net = Network(input_shape=input_shape, layers=layers, weights=weights,
                  biases=biases, bn_state=bn_states, init_std=init_stds)
    return Checkpoint(net=net, config_text=config_text, rng_step=rng_step,
                      opt_state=opt_state)


def _pack_optional_array(out: bytearray, arr, store: np.dtype) -> None:
    out += struct.pack("<B", 1 if arr is not None else 0)
    if arr is not None:
        _pack_array(out, arr, store)


def _pack_array(out: bytearray, arr: np.ndarray, store: np.dtype) -> None:
    arr = np.ascontiguousarray(arr)
    code = 4 if store.itemsize == 4 else 8
    out += struct.pack("<BB", code, arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += arr.astype(store, copy=False).tobytes()


class _Reader:
    def __init__(self, blob: bytes, name: str):
        self.blob = blob
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.name}: truncated (needed {n} bytes at "
                              f"offset {self.pos}, have {len(self.blob)})")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def optional_array(self):
        (present,) = self.unpack("<B")
        return self.array() if present else None

    def array(self) -> np.ndarray:
        code, ndim = self.unpack("<BB")
        if code not in _DTYPES:
            raise FormatError(f"{self.name}: unknown array dtype code {code}")
        shape = self.unpack(f"<{ndim}I")
        dt = _DTYPES[code]
        raw = self.take(int(np.prod(shape, dtype=np.int64)) * dt.itemsize)
        # working precision is always f64; f4 -> f8 widening is exact
        return np.frombuffer(raw, dtype=dt).reshape(shape).astype(np.float64)

    def done(self) -> bool:
        return self.pos == len(self.blob)
