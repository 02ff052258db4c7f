"""Stateful layers with cached activations and a sequential container.

Inside a :class:`Sequential`, image activations travel channel-major as
``(C, B, H, W)``; the container converts from and to batch-first at its ends.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError
from ..rng import SplitMix64
from . import functional as F

KINDS = ("Conv2d", "ConvTranspose2d", "Dense", "ReLU", "Sigmoid", "MaxPool2", "Flatten")


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def hyperparams(self) -> dict:
        return {}

    def spec(self) -> dict:
        return {"kind": self.kind, **self.hyperparams()}

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called before forward")
        return self._cache

    def init(self, rng: SplitMix64) -> None:
        """Fill parameters with He-style uniform values; biases start at zero."""

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.hyperparams().items())
        return f"{self.kind}({args})"


def _he_uniform(rng: SplitMix64, shape: tuple[int, ...], fan_in: float) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(int(np.prod(shape)), -bound, bound).reshape(shape)


class Conv2d(Layer):
    kind = "Conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 1,
                 padding: int = 0):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.params = {"weight": np.zeros((out_channels, in_channels, kernel, kernel)),
                       "bias": np.zeros(out_channels)}

    def hyperparams(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}

    def init(self, rng):
        self.params["weight"] = _he_uniform(rng, self.params["weight"].shape,
                                            self.in_channels * self.kernel ** 2)
        self.params["bias"] = np.zeros(self.out_channels)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ValidationError(f"Conv2d expects {self.in_channels} channels, got {c}")
        return (self.out_channels,
                F.conv_out_size(h, self.kernel, self.stride, self.padding),
                F.conv_out_size(w, self.kernel, self.stride, self.padding))

    def forward(self, x):
        out, cols = F.conv2d_cm(x, self.params["weight"], self.params["bias"], self.stride, self.padding,
                                keep_cols=True)
        self._cache = (x, cols)
        return out

    def backward(self, grad, input_grad: bool = True):
        x, cols = self._cached()
        gx, gw, gb = F.conv2d_backward_cm(grad, x, self.params["weight"], self.stride, self.padding,
                                          cols=cols, input_grad=input_grad)
        self._cache = None
        self.grads = {"weight": gw, "bias": gb}
        return gx


class ConvTranspose2d(Layer):
    kind = "ConvTranspose2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 2, stride: int = 2,
                 padding: int = 0):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.params = {"weight": np.zeros((in_channels, out_channels, kernel, kernel)),
                       "bias": np.zeros(out_channels)}

    hyperparams = Conv2d.hyperparams

    def init(self, rng):
        # each output pixel sees in_channels * (kernel / stride)^2 inputs
        fan_in = self.in_channels * max(1.0, (self.kernel / self.stride) ** 2)
        self.params["weight"] = _he_uniform(rng, self.params["weight"].shape, fan_in)
        self.params["bias"] = np.zeros(self.out_channels)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ValidationError(f"ConvTranspose2d expects {self.in_channels} channels, got {c}")
        return (self.out_channels,
                F.conv_transpose_out_size(h, self.kernel, self.stride, self.padding),
                F.conv_transpose_out_size(w, self.kernel, self.stride, self.padding))

    def forward(self, x):
        self._cache = x
        return F.conv_transpose2d_cm(x, self.params["weight"], self.params["bias"], self.stride, self.padding)

    def backward(self, grad):
        gx, gw, gb = F.conv_transpose2d_backward_cm(grad, self._cached(), self.params["weight"],
                                                 self.stride, self.padding)
        self.grads = {"weight": gw, "bias": gb}
        return gx


class Dense(Layer):
    kind = "Dense"

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.params = {"weight": np.zeros((out_features, in_features)), "bias": np.zeros(out_features)}

    def hyperparams(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def init(self, rng):
        self.params["weight"] = _he_uniform(rng, (self.out_features, self.in_features), self.in_features)
        self.params["bias"] = np.zeros(self.out_features)

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ValidationError(f"Dense expects ({self.in_features},), got {shape}")
        return (self.out_features,)

    def forward(self, x):
        self._cache = x
        return F.dense(x, self.params["weight"], self.params["bias"])

    def backward(self, grad):
        gx, gw, gb = F.dense_backward(grad, self._cached(), self.params["weight"])
        self.grads = {"weight": gw, "bias": gb}
        return gx


class ReLU(Layer):
    """With ``inplace`` set (done by Sequential when safe) it overwrites its
    input on the way forward and its incoming gradient on the way back."""

    kind = "ReLU"

    def __init__(self):
        super().__init__()
        self.inplace = False

    def forward(self, x):
        y = np.maximum(x, 0.0, out=x) if self.inplace else F.relu(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._cached()
        if self.inplace:
            return np.multiply(grad, y > 0.0, out=grad)
        return F.relu_backward(grad, y)


class Sigmoid(Layer):
    kind = "Sigmoid"

    def forward(self, x):
        y = F.sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad):
        return F.sigmoid_backward(grad, self._cached())


class MaxPool2(Layer):
    kind = "MaxPool2"

    def output_shape(self, shape):
        c, h, w = shape
        if h % 2 or w % 2:
            raise ValidationError(f"MaxPool2 needs even extents, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x):
        out, arg = F.maxpool2(x)
        self._cache = arg
        return out

    def backward(self, grad):
        return F.maxpool2_backward(grad, self._cached())


class Flatten(Layer):
    """Channel-major images to batch-first rows of ``C*H*W`` features (C slowest)."""

    kind = "Flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._cache = x.shape
        return x.transpose(1, 0, 2, 3).reshape(x.shape[1], -1)

    def backward(self, grad):
        c, b, h, w = self._cached()
        return grad.reshape(b, c, h, w).transpose(1, 0, 2, 3)


_BY_KIND = {cls.kind: cls for cls in (Conv2d, ConvTranspose2d, Dense, ReLU, Sigmoid, MaxPool2, Flatten)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in _BY_KIND:
        raise ValidationError(f"unknown layer kind {kind!r}")
    return _BY_KIND[kind](**spec)


class Sequential:
    def __init__(self, layers, input_shape: tuple[int, ...] | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        if self.input_shape is not None:
            self.output_shape = self.shape_chain()[-1]
        # activations may reuse buffers only between layers that allocate fresh
        # outputs and gradients, never at the container's ends
        for k, layer in enumerate(self.layers):
            if isinstance(layer, ReLU):
                layer.inplace = (0 < k < len(self.layers) - 1
                                 and isinstance(self.layers[k - 1], (Conv2d, ConvTranspose2d, Dense)))

    def shape_chain(self) -> list[tuple[int, ...]]:
        """Per-sample shapes from input through every layer; raises on any mismatch."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    def init(self, rng: SplitMix64) -> None:
        for k, layer in enumerate(self.layers):
            layer.init(rng.spawn(k))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch-first input ``(B, ...)`` to batch-first output."""
        x = np.asarray(x, dtype=np.float64)
        if self.input_shape is not None and x.shape[1:] != self.input_shape:
            raise ValidationError(f"expected batches of {self.input_shape}, got {x.shape}")
        if x.ndim == 4:
            x = F.to_cm(x)
        for layer in self.layers:
            x = layer.forward(x)
        return F.from_cm(x) if x.ndim == 4 else x

    __call__ = forward

    def backward(self, grad: np.ndarray, input_grad: bool = True) -> np.ndarray | None:
        """Accumulate parameter gradients; returns d_input unless ``input_grad`` is false."""
        if grad.ndim == 4:
            grad = F.to_cm(grad)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            if k == 0 and not input_grad and isinstance(layer, Conv2d):
                layer.backward(grad, input_grad=False)
                return None
            grad = layer.backward(grad)
        if not input_grad:
            return None
        return F.from_cm(grad) if grad.ndim == 4 else grad

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{k}.{name}", arr) for k, layer in enumerate(self.layers)
                for name, arr in layer.params.items()]

    def params(self) -> list[np.ndarray]:
        return [arr for _, arr in self.named_params()]

    def grads(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            for name, arr in layer.params.items():
                g = layer.grads.get(name)
                if g is None:
                    raise RuntimeError(f"{layer.kind}: no gradient for {name}; run backward first")
                out.append(g)
        return out

    def set_params(self, arrays) -> None:
        it = iter(arrays)
        for layer in self.layers:
            for name in layer.params:
                layer.params[name] = next(it)

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def n_params(self) -> int:
        return sum(a.size for a in self.params())
