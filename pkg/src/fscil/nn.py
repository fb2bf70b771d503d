"""Dense feedforward stacks with hand-written gradients and plain SGD.

The feature extractor is an ordered stack of affine layers with an
elementwise nonlinearity. A stack can be split into a frozen body and a
trainable tail: frozen layers never receive parameter updates (their
arrays stay bit-identical), but they still propagate input gradients so
that layers behind them can train.

Conventions:
    - everything is float64
    - weights have shape (in_dim, out_dim); a batch X of shape
      (B, in_dim) maps to act(X @ W + b)
    - gradients come back as {layer_index: (dW, db)} with entries only
      for trainable layers
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, ShapeError, StateError

ACTIVATIONS = ("linear", "tanh", "relu")

CHECKPOINT_MAGIC = b"FSC1"


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d act(z) / dz, given pre-activation z and activation a = act(z)."""
    if name == "linear":
        return np.ones_like(z)
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return np.where(z > 0, 1.0, 0.0)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """One affine layer: act(x @ weights + bias)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "tanh"
    trainable: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError("layer weights must be a matrix")
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeError("bias length must equal the layer output width")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(),
                          self.activation, self.trainable)


@dataclass
class SgdConfig:
    """Plain constant-rate SGD settings for one training phase."""

    learning_rate: float
    epochs: int
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


class LayerStack:
    """An ordered stack of dense layers, trained by backprop + SGD.

    ``forward(x, remember=True)`` caches the per-layer pre-activations
    needed by ``backward``; a plain ``forward`` is pure and safe to call
    concurrently on an immutable stack.
    """

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ValueError("a stack needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer widths do not compose: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = list(layers)
        self._cache = None

    @classmethod
    def create(cls, dims: list[int], activation: str = "tanh",
               rng: np.random.Generator | int | None = 0) -> "LayerStack":
        """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)), zero bias."""
        if len(dims) < 2:
            raise ValueError("need an input and an output width")
        rng = np.random.default_rng(rng)
        layers = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            layers.append(DenseLayer(w, np.zeros(fan_out), activation))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def __len__(self) -> int:
        return len(self.layers)

    def copy(self, trainable: bool | None = None) -> "LayerStack":
        layers = [layer.copy() for layer in self.layers]
        if trainable is not None:
            for layer in layers:
                layer.trainable = trainable
        return LayerStack(layers)

    def forward(self, x: np.ndarray, remember: bool = False) -> np.ndarray:
        """Feed x (single vector or batch) through every layer.

        With ``remember=True`` the inputs and pre-activations of each
        layer are kept for a subsequent ``backward`` call.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.in_dim:
            raise ShapeError(
                f"input width {a.shape[-1] if a.ndim else 0} != stack input {self.in_dim}")
        cache = []
        for layer in self.layers:
            z = a @ layer.weights + layer.bias
            out = _apply_activation(layer.activation, z)
            cache.append((a, z, out))
            a = out
        if remember:
            self._cache = cache
        return a[0] if single else a

    def backward(self, output_grad: np.ndarray) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Backpropagate a loss gradient at the stack output.

        Returns {layer_index: (dW, db)} for trainable layers only;
        frozen layers contribute nothing to the dict but still pass the
        gradient through to earlier layers.
        """
        if self._cache is None:
            raise StateError("backward called before a remembered forward pass")
        grad = np.asarray(output_grad, dtype=np.float64)
        if grad.ndim == 1:
            grad = grad[None, :]
        if grad.shape != self._cache[-1][2].shape:
            raise ShapeError("output gradient shape does not match the last forward pass")
        grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            a_in, z, a_out = self._cache[idx]
            dz = grad * _activation_grad(layer.activation, z, a_out)
            if layer.trainable:
                grads[idx] = (a_in.T @ dz, dz.sum(axis=0))
            grad = dz @ layer.weights.T
        return grads

    def sgd_step(self, grads: dict[int, tuple[np.ndarray, np.ndarray]],
                 cfg: SgdConfig | float) -> None:
        """params <- params - lr * grad, trainable layers only, in place."""
        lr = cfg.learning_rate if isinstance(cfg, SgdConfig) else float(cfg)
        for idx, (dw, db) in grads.items():
            layer = self.layers[idx]
            if not layer.trainable:
                raise ValueError(f"gradient supplied for frozen layer {idx}")
            if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
                raise ShapeError(f"gradient shape mismatch at layer {idx}")
            layer.weights -= lr * dw
            layer.bias -= lr * db

    def parameter_bytes(self) -> bytes:
        """Concatenated raw parameter bytes, for bit-identity checks."""
        return b"".join(layer.weights.tobytes() + layer.bias.tobytes()
                        for layer in self.layers)


def split_freeze(stack: LayerStack, body_depth: int) -> tuple[LayerStack, LayerStack]:
    """Split a stack into a frozen body and a trainable tail.

    Layers [0, body_depth) become the body with trainable=False; the
    rest become the tail. Parameter arrays are shared with the original
    stack, so the split changes no values: tail(body(x)) == stack(x).
    """
    if not 0 < body_depth < len(stack.layers):
        raise ValueError(
            f"body_depth must be in (0, {len(stack.layers)}), got {body_depth}")
    body = LayerStack([replace(l, trainable=False) for l in stack.layers[:body_depth]])
    tail = LayerStack([replace(l, trainable=True) for l in stack.layers[body_depth:]])
    return body, tail


# --- checkpoint format ------------------------------------------------
#
# magic "FSC1", u32 layer count, then per layer:
#   u32 rows (in_dim), u32 cols (out_dim),
#   rows*cols f64 weights row-major, cols f64 biases, u8 frozen flag.
# All integers and floats little-endian. The activation is an
# architecture setting carried by config, not by the checkpoint.

def dump_stack(stack: LayerStack) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(stack.layers))]
    for layer in stack.layers:
        parts.append(struct.pack("<II", layer.in_dim, layer.out_dim))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
        parts.append(struct.pack("<B", 0 if layer.trainable else 1))
    return b"".join(parts)


def parse_stack(buf: bytes, offset: int = 0,
                activation: str = "tanh") -> tuple[LayerStack, int]:
    """Parse one serialized stack out of buf, returning the next offset."""
    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(buf):
            raise FormatError(f"truncated checkpoint at byte {offset}")
        piece = buf[offset:offset + n]
        offset += n
        return piece

    if take(4) != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic, expected FSC1")
    (count,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(count):
        rows, cols = struct.unpack("<II", take(8))
        w = np.frombuffer(take(rows * cols * 8), dtype="<f8").reshape(rows, cols)
        b = np.frombuffer(take(cols * 8), dtype="<f8")
        (frozen,) = struct.unpack("<B", take(1))
        layers.append(DenseLayer(w.copy(), b.copy(), activation, trainable=frozen == 0))
    return LayerStack(layers), offset


def save_stack(stack: LayerStack, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_stack(stack))


def load_stack(path, activation: str = "tanh") -> LayerStack:
    with open(path, "rb") as fh:
        buf = fh.read()
    stack, offset = parse_stack(buf, 0, activation)
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after checkpoint")
    return stack
