"""Dense float64 tensors, named parameter sets, checkpoints and plain SGD."""
from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

MAGIC = b"RPK1"


class Tensor:
    """A float64 array with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if grad is not None:
            grad = np.ascontiguousarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError(f"grad shape {grad.shape} != data shape {self.data.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g):
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.grad is not None else 'no'})"


class Parameters:
    """Ordered, uniquely named tensors, each flagged for weight decay or not."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._decay: dict[str, bool] = {}

    def add(self, name: str, data, decay: bool = True) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data)
        self._tensors[name] = t
        self._decay[name] = decay
        return t

    def __getitem__(self, name) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def decays(self, name) -> bool:
        return self._decay[name]

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def clear_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def flat(self) -> np.ndarray:
        """All values concatenated in insertion order (a copy)."""
        return np.concatenate([t.data.ravel() for t in self._tensors.values()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([
            (t.grad if t.grad is not None else np.zeros_like(t.data)).ravel()
            for t in self._tensors.values()
        ])

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load_state(self, state):
        for k, v in state.items():
            if k not in self._tensors:
                raise KeyError(f"unknown parameter {k!r}")
            if v.shape != self._tensors[k].shape:
                raise ValueError(f"shape mismatch for {k!r}: {v.shape} vs {self._tensors[k].shape}")
            self._tensors[k].data[...] = v


def save_checkpoint(params: Parameters | dict, path) -> None:
    """Write ``RPK1`` + per-parameter (name, rank, dims, little-endian f64 values).

    Integers are little-endian: u32 name length, u32 rank, u64 dims. The file is
    written to a temporary sibling and renamed into place.
    """
    items = params.state().items() if isinstance(params, Parameters) else params.items()
    chunks = [MAGIC]
    for name, arr in items:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not an RPK1 checkpoint")
    out = {}
    pos = 4
    while pos < len(buf):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        count = math.prod(dims)
        out[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * count
    return out


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class SgdConfig:
    """Step-decayed SGD: lr(step) = lr * decay ** (step // interval).

    ``momentum`` defaults to 0, which is exactly the plain update
    theta <- theta - lr(step) * (grad + weight_decay * theta).
    """

    lr: float = 1e-4
    decay: float = 0.1
    interval: int = 10_000
    weight_decay: float = 5e-4
    steps: int = 50_000
    momentum: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay factor must be in (0, 1]")
        if self.interval <= 0:
            raise ValueError("decay interval must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")

    def rate(self, step: int) -> float:
        return self.lr * self.decay ** (step // self.interval)


def sgd_step(params: Parameters, cfg: SgdConfig, step: int, velocity: dict | None = None) -> None:
    """In-place SGD update; gradients are cleared afterwards.

    ``velocity`` carries momentum buffers between calls and is only consulted
    when ``cfg.momentum > 0``.
    """
    lr = cfg.rate(step)
    for name, t in params.items():
        if t.grad is None:
            raise RuntimeError(f"parameter {name!r} has no gradient; run backward first")
    for name, t in params.items():
        g = t.grad
        if cfg.weight_decay and params.decays(name):
            g = g + cfg.weight_decay * t.data
        if cfg.momentum:
            if velocity is None:
                raise ValueError("momentum requires a velocity dict")
            v = velocity.get(name)
            v = g.copy() if v is None else cfg.momentum * v + g
            velocity[name] = v
            g = v
        t.data -= lr * g
        t.grad = None
