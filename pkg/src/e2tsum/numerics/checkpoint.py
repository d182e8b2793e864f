"""Binary checkpoint format and the named parameter collection.

Layout (all little-endian)::

    b"E2T1" | u64 count | count x (u32 name_len, utf-8 name, u32 rank,
                                   rank x u64 dim, prod(dims) x f64 row-major)
"""
from __future__ import annotations

import struct

import numpy as np

from .autodiff import parameter
from .optim import glorot_uniform

MAGIC = b"E2T1"


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8", order="C")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_tensors(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (count,) = take("<Q")
    tensors = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = take("<I")
        dims = take(f"<{rank}Q") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        values = take(f"<{n}d")
        tensors[name] = np.array(values, dtype=np.float64).reshape(dims)
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return tensors


class Parameters:
    """Ordered, named collection of trainable leaf nodes."""

    def __init__(self):
        self._nodes = {}

    def add(self, name, value):
        if name in self._nodes:
            raise KeyError(f"duplicate parameter {name}")
        node = parameter(value, name=name)
        self._nodes[name] = node
        return node

    def matrix(self, name, rows, cols, rng):
        return self.add(name, glorot_uniform((rows, cols), rng))

    def bias(self, name, size):
        return self.add(name, np.zeros(size))

    def __getitem__(self, name):
        return self._nodes[name]

    def __contains__(self, name):
        return name in self._nodes

    def __iter__(self):
        return iter(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def items(self):
        return self._nodes.items()

    def zero_grad(self):
        for node in self._nodes.values():
            node.grad = None

    def grads(self):
        return {k: n.grad for k, n in self._nodes.items() if n.grad is not None}

    def state_dict(self):
        return {k: n.value.copy() for k, n in self._nodes.items()}

    def load_state_dict(self, tensors):
        missing = set(self._nodes) - set(tensors)
        extra = set(tensors) - set(self._nodes)
        if missing or extra:
            raise CheckpointError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, node in self._nodes.items():
            if tensors[k].shape != node.value.shape:
                raise CheckpointError(f"{k}: shape {tensors[k].shape} != {node.value.shape}")
            node.value = np.array(tensors[k], dtype=np.float64)

    def save(self, path):
        save_tensors(path, {k: n.value for k, n in self._nodes.items()})

    def load(self, path):
        self.load_state_dict(load_tensors(path))

