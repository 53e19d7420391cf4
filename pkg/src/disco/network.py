"""Fully-connected ReLU networks with exact rational parameters.

The canonical on-disk format is JSON (``disco-net-v1``)::

    {"format": "disco-net-v1",
     "input_dim": 2,
     "layers": [{"weights": [["1", "-1/2"], ...], "bias": ["0", ...], "relu": true},
                ...,
                {"weights": [[...]], "bias": [...], "relu": false}]}

Every rational is a decimal string, a ``"p/q"`` string, a JSON number (read
as its exact decimal literal) or a ``[num, den]`` pair. The last layer is the
affine output head and must not carry a ReLU.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .rational import RationalError, encode, to_fraction

FORMAT = "disco-net-v1"

Pattern = tuple[int, ...]


class NetworkError(ValueError):
    """Malformed network document or inconsistent dimensions."""

    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Layer:
    weights: tuple[tuple[Fraction, ...], ...]
    biases: tuple[Fraction, ...]
    has_relu: bool

    @property
    def in_width(self) -> int:
        return len(self.weights[0])

    @property
    def out_width(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    input_dim: int

    def __post_init__(self):
        if not self.layers:
            raise NetworkError("network needs at least one layer")
        width = self.input_dim
        if width < 1:
            raise NetworkError("input_dim must be positive")
        for i, layer in enumerate(self.layers):
            if not layer.weights or any(len(row) != width for row in layer.weights):
                raise NetworkError(f"expected {width} columns per weight row", i)
            if len(layer.biases) != len(layer.weights):
                raise NetworkError(
                    f"bias length {len(layer.biases)} != weight rows {len(layer.weights)}", i
                )
            width = layer.out_width
        if self.layers[-1].has_relu:
            raise NetworkError("output head must not have a ReLU", len(self.layers) - 1)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_width

    @property
    def relu_count(self) -> int:
        return sum(l.out_width for l in self.layers if l.has_relu)

    def relu_layout(self) -> list[tuple[int, int]]:
        """(layer index, neuron index) for every ReLU neuron in topological order."""
        return [(li, j) for li, l in enumerate(self.layers) if l.has_relu for j in range(l.out_width)]

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()


def forward(net: Network, x: Sequence) -> tuple[tuple[Fraction, ...], Pattern]:
    """Exact evaluation. A neuron whose pre-activation is exactly 0 counts as active."""
    if len(x) != net.input_dim:
        raise NetworkError(f"input has length {len(x)}, network expects {net.input_dim}")
    h = [to_fraction(v) for v in x]
    bits: list[int] = []
    for layer in net.layers:
        pre = [sum((w * v for w, v in zip(row, h)), b) for row, b in zip(layer.weights, layer.biases)]
        if layer.has_relu:
            for v in pre:
                bits.append(1 if v >= 0 else 0)
            h = [v if v >= 0 else Fraction(0) for v in pre]
        else:
            h = pre
    return tuple(h), tuple(bits)


def float_params(net: Network) -> list[tuple[np.ndarray, np.ndarray, bool]]:
    return [
        (np.array(l.weights, dtype=float), np.array(l.biases, dtype=float), l.has_relu)
        for l in net.layers
    ]


def patterns_batch(net: Network, X: np.ndarray, rel_tol: float = 1e-9) -> list[Pattern]:
    """Activation patterns for many float inputs.

    Uses float64 evaluation and falls back to exact evaluation of the (dyadic)
    input whenever some pre-activation is too close to zero to trust its sign.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    params = float_params(net)
    h = X
    bits = []
    scale = np.abs(X).sum(axis=1) + 1.0
    suspect = np.zeros(len(X), dtype=bool)
    for W, b, relu in params:
        pre = h @ W.T + b
        if relu:
            mag = np.abs(h) @ np.abs(W).T + np.abs(b)
            suspect |= (np.abs(pre) <= rel_tol * (mag + scale[:, None])).any(axis=1)
            bits.append(pre >= 0)
            h = np.maximum(pre, 0.0)
        else:
            h = pre
    mat = np.concatenate(bits, axis=1).astype(int) if bits else np.zeros((len(X), 0), int)
    out = [tuple(int(v) for v in row) for row in mat]
    for i in np.flatnonzero(suspect):
        out[i] = forward(net, [Fraction(float(v)) for v in X[i]])[1]
    return out


# -- construction --------------------------------------------------------------

def from_arrays(
    weights: Iterable[Sequence[Sequence]],
    biases: Iterable[Sequence],
    relu: Iterable[bool] | None = None,
    input_dim: int | None = None,
) -> Network:
    """Build a network from nested sequences; all layers but the last get a ReLU by default."""
    weights = list(weights)
    biases = list(biases)
    if relu is None:
        relu = [True] * (len(weights) - 1) + [False]
    layers = []
    for i, (W, b, r) in enumerate(zip(weights, biases, relu)):
        try:
            rows = tuple(tuple(to_fraction(v) for v in row) for row in W)
            bias = tuple(to_fraction(v) for v in b)
        except RationalError as exc:
            raise NetworkError(str(exc), i) from exc
        layers.append(Layer(rows, bias, bool(r)))
    if input_dim is None:
        input_dim = len(layers[0].weights[0]) if layers and layers[0].weights else 0
    return Network(tuple(layers), input_dim)


def identity_network() -> Network:
    """relu(x) followed by a unit output head."""
    return from_arrays([[[1]], [[1]]], [[0], [0]])


def toy_network() -> Network:
    """Two inputs, three ReLUs in one hidden layer, summed by the output head.

    On [-1, 1]^2 the hyperplanes x1 = 1/2, x2 = 1/2 and x1 + x2 = 0 cut out
    seven regions; the pattern (1, 1, 0) is unreachable. The point (1/5, 1/5)
    lies in the region with pattern (0, 0, 1).
    """
    W1 = [[1, 0], [0, 1], [1, 1]]
    b1 = ["-1/2", "-1/2", 0]
    return from_arrays([W1, [[1, 1, 1]]], [b1, [0]])


# -- architectures -------------------------------------------------------------

@dataclass(frozen=True)
class Architecture:
    name: str
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int = 1

    @property
    def widths(self) -> tuple[int, ...]:
        return (*self.hidden, self.output_dim)


_SHAPES = {
    "simple": ((2, 1), (1, 1), (1, 2)),
    "big": ((3, 1), (1, 1), (1, 2)),
    "super": ((4, 1), (2, 1), (1, 1)),
    "perception": ((1, 2), (1, 4)),
}


def make_architecture(name: str, n: int) -> Architecture:
    """Hidden-layer widths of the benchmark architectures, plus a width-1 output head.

    Fractional widths are floored with a warning; widths are clamped to at least 1.
    """
    if name not in _SHAPES:
        raise ValueError(f"unknown architecture {name!r}; expected one of {sorted(_SHAPES)}")
    if n < 1:
        raise ValueError("input dimension must be positive")
    hidden = []
    for num, den in _SHAPES[name]:
        width, rem = divmod(num * n, den)
        if rem:
            warnings.warn(f"{name} with N={n}: width {num}*N/{den} floored to {width}", stacklevel=2)
        if width < 1:
            warnings.warn(f"{name} with N={n}: width clamped to 1", stacklevel=2)
            width = 1
        hidden.append(width)
    return Architecture(name, n, tuple(hidden))


# -- JSON ----------------------------------------------------------------------

def to_dict(net: Network) -> dict:
    return {
        "format": FORMAT,
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": [[encode(w) for w in row] for row in l.weights],
                "bias": [encode(b) for b in l.biases],
                "relu": l.has_relu,
            }
            for l in net.layers
        ],
    }


def dumps(net: Network) -> str:
    return json.dumps(to_dict(net), separators=(",", ":"), sort_keys=True)


def from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise NetworkError("network document must be a JSON object")
    fmt = doc.get("format", FORMAT)
    if fmt != FORMAT:
        raise NetworkError(f"unsupported format {fmt!r}")
    input_dim = doc.get("input_dim")
    if not isinstance(input_dim, int) or isinstance(input_dim, bool) or input_dim < 1:
        raise NetworkError("input_dim must be a positive integer")
    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list) or not layers_doc:
        raise NetworkError("layers must be a non-empty list")
    layers = []
    for i, ld in enumerate(layers_doc):
        if not isinstance(ld, dict):
            raise NetworkError("layer must be an object", i)
        missing = {"weights", "bias", "relu"} - set(ld)
        if missing:
            raise NetworkError(f"missing keys {sorted(missing)}", i)
        W, b, relu = ld["weights"], ld["bias"], ld["relu"]
        if not isinstance(relu, bool):
            raise NetworkError("relu must be a boolean", i)
        if not isinstance(W, list) or not W or not all(isinstance(r, list) and r for r in W):
            raise NetworkError("weights must be a non-empty matrix", i)
        if not isinstance(b, list):
            raise NetworkError("bias must be a list", i)
        try:
            rows = tuple(tuple(to_fraction(v) for v in row) for row in W)
            bias = tuple(to_fraction(v) for v in b)
        except RationalError as exc:
            raise NetworkError(str(exc), i) from exc
        if len({len(r) for r in rows}) != 1:
            raise NetworkError("ragged weight matrix", i)
        layers.append(Layer(rows, bias, relu))
    return Network(tuple(layers), input_dim)


def load_network(text: str) -> Network:
    try:
        doc = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"invalid JSON: {exc}") from exc
    return from_dict(doc)


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(net), fh, indent=1)
        fh.write("\n")
