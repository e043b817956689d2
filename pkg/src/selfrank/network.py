"""Layer catalog and the two-headed network.

A network is a stack of layers whose final output is the *regression head*
(a scalar per image, or a density map). The *ranking head* is the global sum
of the regression head, so both heads share every parameter and a scalar
network ranks by its own output.

Layer specs are short strings::

    conv:F[:k]   same-padded stride-1 convolution with F filters (k defaults to 3)
    relu         rectifier
    pool         2x2 max pooling, stride 2
    dense:U      fully connected, flattening everything after the batch axis
    gsp          global sum pool over H, W -> (N, C)
    gap          global average pool over H, W -> (N, C)
    mean         mean over all non-batch axes -> (N, 1)
"""
from __future__ import annotations

import math

import numpy as np

from . import _backend
from .tensor import Parameters


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"
    has_params = False

    def out_shape(self, in_shape):
        return in_shape

    def init(self, params, prefix, in_shape, rng):
        pass

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, dy, cache):
        raise NotImplementedError

    def describe(self):
        return self.kind


class Conv2d(Layer):
    kind = "conv"
    has_params = True

    def __init__(self, filters, ksize=3):
        if ksize % 2 != 1:
            raise ValueError("convolution kernel size must be odd")
        self.filters = filters
        self.ksize = ksize
        self.prefix = None

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv expects (C, H, W) input, got {in_shape}")
        return (self.filters, in_shape[1], in_shape[2])

    def init(self, params, prefix, in_shape, rng):
        self.prefix = prefix
        self.in_channels = in_shape[0]
        fan_in = in_shape[0] * self.ksize * self.ksize
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(self.filters, in_shape[0], self.ksize, self.ksize))
        params.add(prefix + ".w", w)
        params.add(prefix + ".b", np.zeros(self.filters), decay=False)

    def forward(self, params, x):
        w = params[self.prefix + ".w"].data
        b = params[self.prefix + ".b"].data
        return _backend.kernels.conv2d_forward(x, w, b), x

    def backward(self, params, dy, x):
        w = params[self.prefix + ".w"]
        dx, dw, db = _backend.kernels.conv2d_backward(np.ascontiguousarray(dy), x, w.data)
        w.accumulate(dw)
        params[self.prefix + ".b"].accumulate(db)
        return dx

    def describe(self):
        return f"conv:{self.filters}" + (f":{self.ksize}" if self.ksize != 3 else "")


class ReLU(Layer):
    kind = "relu"

    def forward(self, params, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, dy, mask):
        return dy * mask


class MaxPool2(Layer):
    kind = "pool"

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ShapeError(f"pool needs (C, H, W) with even H, W, got {in_shape}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    def forward(self, params, x):
        y, idx = _backend.kernels.maxpool2_forward(x)
        return y, idx

    def backward(self, params, dy, idx):
        return _backend.kernels.maxpool2_backward(np.ascontiguousarray(dy), idx)


class Dense(Layer):
    kind = "dense"
    has_params = True

    def __init__(self, units):
        self.units = units
        self.prefix = None

    def out_shape(self, in_shape):
        return (self.units,)

    def init(self, params, prefix, in_shape, rng):
        self.prefix = prefix
        fan_in = math.prod(in_shape)
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, self.units))
        params.add(prefix + ".w", w)
        params.add(prefix + ".b", np.zeros(self.units), decay=False)

    def forward(self, params, x):
        flat = x.reshape(x.shape[0], -1)
        y = flat @ params[self.prefix + ".w"].data + params[self.prefix + ".b"].data
        return y, (flat, x.shape)

    def backward(self, params, dy, cache):
        flat, shape = cache
        w = params[self.prefix + ".w"]
        w.accumulate(flat.T @ dy)
        params[self.prefix + ".b"].accumulate(dy.sum(axis=0))
        return (dy @ w.data.T).reshape(shape)

    def describe(self):
        return f"dense:{self.units}"


class GlobalSumPool(Layer):
    kind = "gsp"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"gsp expects (C, H, W) input, got {in_shape}")
        return (in_shape[0],)

    def forward(self, params, x):
        return x.sum(axis=(2, 3)), x.shape

    def backward(self, params, dy, shape):
        return np.broadcast_to(dy[:, :, None, None], shape).copy()


class GlobalAvgPool(GlobalSumPool):
    kind = "gap"

    def forward(self, params, x):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, params, dy, shape):
        return np.broadcast_to(dy[:, :, None, None] / (shape[2] * shape[3]), shape).copy()


class Mean(Layer):
    kind = "mean"

    def out_shape(self, in_shape):
        return (1,)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1).mean(axis=1, keepdims=True), x.shape

    def backward(self, params, dy, shape):
        per = math.prod(shape[1:])
        return np.broadcast_to((dy / per).reshape((shape[0],) + (1,) * (len(shape) - 1)), shape).copy()


def parse_layer(spec: str) -> Layer:
    parts = spec.strip().split(":")
    name, args = parts[0], [int(a) for a in parts[1:]]
    if name == "conv":
        return Conv2d(*args)
    if name == "dense":
        return Dense(*args)
    simple = {"relu": ReLU, "pool": MaxPool2, "gsp": GlobalSumPool, "gap": GlobalAvgPool, "mean": Mean}
    if name in simple and not args:
        return simple[name]()
    raise ValueError(f"unknown layer spec {spec!r}")


def parse_arch(arch: str) -> list[Layer]:
    return [parse_layer(s) for s in arch.split(",") if s.strip()]


class Network:
    """Layer stack with a regression head and a sum-pool ranking head.

    ``forward`` records what ``backward`` needs; exactly one ``backward`` may
    follow each recorded ``forward``. ``images_seen`` counts every image pushed
    through the trunk and is how callers audit forward passes.
    """

    def __init__(self, input_shape, layers, seed=0, head_scale=0.1):
        if isinstance(layers, str):
            layers = parse_arch(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = list(layers)
        self.params = Parameters()
        self.seed = seed
        self.images_seen = 0
        self._tape = None
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        self.shapes = [shape]
        for i, layer in enumerate(self.layers):
            try:
                out = layer.out_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.describe()}): {exc}") from None
            if layer.has_params:
                layer.init(self.params, f"{i}.{layer.kind}", shape, rng)
            shape = out
            self.shapes.append(shape)
        self.output_shape = shape
        # a small output layer keeps the first updates from killing the rectifiers
        last = [l for l in self.layers if l.has_params]
        if last:
            self.params[last[-1].prefix + ".w"].data *= head_scale
        self.head_scale = head_scale

    @property
    def arch(self) -> str:
        return ",".join(layer.describe() for layer in self.layers)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == len(self.input_shape):
            x = x[None]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"layer 0 ({self.layers[0].describe() if self.layers else 'input'}): "
                             f"expected input (N, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        return np.ascontiguousarray(x)

    def forward(self, x, record=True):
        """Return (regression output, ranking output) for a batch.

        The regression output has shape (N, *output_shape); the ranking output
        is its sum over all non-batch axes, shape (N,).
        """
        x = self._check_input(x)
        self.images_seen += x.shape[0]
        tape = []
        h = x
        for layer in self.layers:
            h, cache = layer.forward(self.params, h)
            if record:
                tape.append(cache)
        self._tape = tape if record else None
        rank = h.reshape(h.shape[0], -1).sum(axis=1)
        return h, rank

    def backward(self, grad_reg=None, grad_rank=None):
        """Accumulate parameter gradients from upstream gradients of both heads.

        Contributions of the two heads are summed at the regression output.
        """
        if self._tape is None:
            raise RuntimeError("backward called without a recorded forward pass")
        tape, self._tape = self._tape, None
        n = None
        g = None
        if grad_reg is not None:
            g = np.array(grad_reg, dtype=np.float64)
            n = g.shape[0]
            if g.shape[1:] != self.output_shape:
                raise ShapeError(f"regression gradient shape {g.shape} != (N, {self.output_shape})")
        if grad_rank is not None:
            gr = np.asarray(grad_rank, dtype=np.float64)
            if gr.ndim != 1 or (n is not None and gr.shape[0] != n):
                raise ShapeError(f"ranking gradient shape {gr.shape} does not match batch")
            spread = np.broadcast_to(gr.reshape((-1,) + (1,) * len(self.output_shape)),
                                     (gr.shape[0],) + self.output_shape)
            g = spread.copy() if g is None else g + spread
        if g is None:
            raise ValueError("backward needs at least one upstream gradient")
        for p in self.params._tensors.values():
            if p.grad is None:
                p.zero_grad()
        for layer, cache in zip(reversed(self.layers), reversed(tape)):
            g = layer.backward(self.params, g, cache)
        return g

    def predict(self, x, batch_size=64):
        """Ranking-head output (count or score) per image, without recording."""
        x = self._check_input(x)
        out = []
        for i in range(0, x.shape[0], batch_size):
            out.append(self.forward(x[i:i + batch_size], record=False)[1])
        return np.concatenate(out) if out else np.zeros(0)

    def predict_maps(self, x, batch_size=64):
        x = self._check_input(x)
        return np.concatenate([self.forward(x[i:i + batch_size], record=False)[0]
                               for i in range(0, x.shape[0], batch_size)])

    def copy(self) -> "Network":
        twin = Network(self.input_shape, self.arch, seed=self.seed, head_scale=self.head_scale)
        twin.params.load_state(self.params.state())
        return twin
