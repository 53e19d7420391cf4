"""Benchmark datasets and small-MLP training with the maximum-margin (MMR) penalty.

Training runs in float64 with torch autograd and plain SGD. The MMR term
looks at every ReLU boundary of the facet containing a sample: the boundary
of neuron k is the hyperplane ``a_k . x + b_k = 0`` given by the neuron's
pre-activation restricted to the facet, so its distance to the sample is
``|n_k(s)| / ||a_k||_p`` where ``a_k`` is the input gradient of the
pre-activation. The penalty is ``max(0, 1 - min_k dist_k / gamma_rb)``.

Trained parameters are converted once, exactly, to rational networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import torch

from .affine import facet_output_forms
from .network import Architecture, Network, forward, from_arrays
from .verify import lower_half_pixels


class TrainingError(RuntimeError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    kind: str  # "multiplication" | "perception"
    seed: int
    side: int | None = None

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]


def gen_multiplication(n: int, count: int, seed: int) -> Dataset:
    if n < 1 or count < 1:
        raise ValueError("n and count must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.5, 2.0, size=(count, n))
    return Dataset(X, np.prod(X, axis=1), "multiplication", seed)


def perception_label(image: Sequence[float], side: int) -> int:
    image = np.asarray(image).reshape(-1)
    return 1 if any(image[p] >= 1 for p in lower_half_pixels(side)) else -1


def gen_perception(side: int, count: int, seed: int, density: float = 0.2) -> Dataset:
    """Class-balanced binary images; label +1 iff a lower-half pixel is white."""
    if side < 2:
        raise ValueError("side must be at least 2")
    rng = np.random.default_rng(seed)
    n = side * side
    lower = np.array(lower_half_pixels(side))
    X = (rng.random((count, n)) < density).astype(float)
    y = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    for i in range(count):
        if y[i] < 0:
            X[i, lower] = 0.0
        elif not X[i, lower].any():
            X[i, rng.choice(lower)] = 1.0
    return Dataset(X, y, "perception", seed, side)


@dataclass(frozen=True)
class MmrConfig:
    gamma_rb: float = 0.5
    p: float = 2
    weight: float = 1.0

    def __post_init__(self):
        if not self.gamma_rb > 0:
            raise ValueError("gamma_rb must be positive")
        if self.p not in (1, 2, math.inf):
            raise ValueError("p must be 1, 2 or inf")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.02
    epochs: int = 100
    batch: int = 10
    seed: int = 0
    mmr: MmrConfig | None = None


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    penalties: list[float] = field(default_factory=list)
    accuracy: float = 0.0
    params: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list, repr=False)


# -- exact penalty on a rational network ---------------------------------------

def _norm(coeffs: Sequence[Fraction], p) -> float:
    if p == 1:
        return float(sum(abs(a) for a in coeffs))
    if p == math.inf:
        return float(max(abs(a) for a in coeffs))
    return math.sqrt(float(sum(a * a for a in coeffs)))


def boundary_distances(net: Network, sample: Sequence, p=2) -> list[float]:
    """Distance from ``sample`` to each ReLU boundary of its facet; inf for constant neurons."""
    x = tuple(Fraction(v) for v in sample)
    _, pattern = forward(net, x)
    pre, _ = facet_output_forms(net, pattern)
    out = []
    for form in pre:
        if form.is_constant():
            out.append(math.inf)
            continue
        out.append(float(abs(form(x))) / _norm(form.coeffs, p))
    return out


def mmr_penalty(net: Network, sample: Sequence, cfg: MmrConfig) -> float:
    d = boundary_distances(net, sample, cfg.p)
    dmin = min(d, default=math.inf)
    return max(0.0, 1.0 - dmin / cfg.gamma_rb)


# -- torch objective -----------------------------------------------------------

def _draw(arch: Architecture, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    params = []
    fan_in = arch.input_dim
    widths = arch.widths
    for i, width in enumerate(widths):
        bound = 1.0 / math.sqrt(fan_in)
        gain = 3.0 if i == len(widths) - 1 else 6.0  # the output layer is linear
        W = rng.uniform(-math.sqrt(gain / fan_in), math.sqrt(gain / fan_in), size=(width, fan_in))
        b = rng.uniform(-bound, bound, size=width)
        params.append((W, b))
        fan_in = width
    return params


def _all_alive(params, X: np.ndarray) -> bool:
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W.T + b, 0.0)
        if (h.max(axis=0) <= 0).any():
            return False
    return True


def init_params(arch: Architecture, seed: int, inputs: np.ndarray | None = None, max_draws: int = 1000):
    """He-uniform weights (LeCun on the linear head), small uniform biases.

    With ``inputs``, draws are repeated until every hidden neuron fires on at
    least one of them: a dead width-1 layer would freeze the whole net.
    """
    rng = np.random.default_rng(seed)
    params = _draw(arch, rng)
    if inputs is None:
        return params
    for _ in range(max_draws):
        if _all_alive(params, inputs):
            return params
        params = _draw(arch, rng)
    raise TrainingError(f"no live initialisation in {max_draws} draws")


def _torch_params(params) -> list[torch.Tensor]:
    out = []
    for W, b in params:
        out.append(torch.tensor(W, dtype=torch.float64, requires_grad=True))
        out.append(torch.tensor(b, dtype=torch.float64, requires_grad=True))
    return out


def _forward(tp: list[torch.Tensor], X: torch.Tensor, with_jacobian: bool):
    """Output plus, optionally, every hidden pre-activation and its input gradient."""
    h = X
    pres, jacs = [], []
    J = None
    n_layers = len(tp) // 2
    for l in range(n_layers):
        W, b = tp[2 * l], tp[2 * l + 1]
        pre = h @ W.T + b
        if l == n_layers - 1:
            return pre[:, 0], pres, jacs
        if with_jacobian:
            if J is None:
                J = W.unsqueeze(0).expand(X.shape[0], -1, -1)
            else:
                J = torch.einsum("ij,bjd->bid", W, J)
            pres.append(pre)
            jacs.append(J)
            mask = (pre >= 0).to(pre.dtype).detach()
            J = mask.unsqueeze(-1) * J
        h = torch.relu(pre)
    raise AssertionError("unreachable")


def _distances(pres, jacs, p) -> torch.Tensor:
    cols = []
    for pre, J in zip(pres, jacs):
        if p == 1:
            norm = J.abs().sum(-1)
            ok = norm > 0
            safe = torch.where(ok, norm, torch.ones_like(norm))
        elif p == math.inf:
            norm = J.abs().amax(-1)
            ok = norm > 0
            safe = torch.where(ok, norm, torch.ones_like(norm))
        else:
            sq = (J * J).sum(-1)
            ok = sq > 0
            safe = torch.sqrt(torch.where(ok, sq, torch.ones_like(sq)))
        inf = torch.full_like(pre, math.inf)
        cols.append(torch.where(ok, pre.abs() / safe, inf))
    return torch.cat(cols, dim=1)


def penalty_batch(tp, X: torch.Tensor, cfg: MmrConfig) -> torch.Tensor:
    """Per-sample MMR penalty; argmin ties go to the lowest neuron index."""
    _, pres, jacs = _forward(tp, X, True)
    if not pres:
        return torch.zeros(X.shape[0], dtype=X.dtype)
    d = _distances(pres, jacs, cfg.p)
    idx = torch.from_numpy(np.argmin(d.detach().numpy(), axis=1))
    dmin = d.gather(1, idx.unsqueeze(1)).squeeze(1)
    return torch.relu(1.0 - dmin / cfg.gamma_rb)


def objective(tp, X: torch.Tensor, Y: torch.Tensor, kind: str, mmr: MmrConfig | None):
    """(total loss, data loss, mean penalty)."""
    out, _, _ = _forward(tp, X, False)
    if kind == "multiplication":
        data = ((out - Y) ** 2).mean()
    elif kind == "perception":
        data = (torch.relu(1.0 - Y * out) ** 2).mean()
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if mmr is None or mmr.weight == 0:
        return data, data, torch.zeros((), dtype=X.dtype)
    pen = penalty_batch(tp, X, mmr).mean()
    return data + mmr.weight * pen, data, pen


def loss_and_grad(params, X: np.ndarray, Y: np.ndarray, kind: str, mmr: MmrConfig | None):
    """Total loss and its gradient (list of arrays matching ``params``)."""
    tp = _torch_params(params)
    total, _, _ = objective(tp, torch.from_numpy(X), torch.from_numpy(Y), kind, mmr)
    total.backward()
    grads = [t.grad.numpy().copy() for t in tp]
    return float(total.detach()), [(grads[2 * i], grads[2 * i + 1]) for i in range(len(params))]


def loss_value(params, X: np.ndarray, Y: np.ndarray, kind: str, mmr: MmrConfig | None) -> float:
    with torch.no_grad():
        tp = [torch.tensor(a, dtype=torch.float64) for pair in params for a in pair]
        total, _, _ = objective(tp, torch.from_numpy(X), torch.from_numpy(Y), kind, mmr)
    return float(total)


def piece_signature(params, X: np.ndarray, Y: np.ndarray, kind: str, mmr: MmrConfig | None):
    """Discrete state the loss is smooth within: patterns, argmins, active hinges and signs."""
    with torch.no_grad():
        tp = [torch.tensor(a, dtype=torch.float64) for pair in params for a in pair]
        Xt, Yt = torch.from_numpy(X), torch.from_numpy(Y)
        out, pres, jacs = _forward(tp, Xt, True)
        sig = [tuple(torch.sign(p).flatten().tolist()) for p in pres]
        if kind == "perception":
            sig.append(tuple((1.0 - Yt * out > 0).tolist()))
        if mmr is not None and mmr.weight and pres:
            d = _distances(pres, jacs, mmr.p).numpy()
            sig.append(tuple(np.argmin(d, axis=1).tolist()))
            sig.append(tuple((1.0 - d.min(axis=1) / mmr.gamma_rb > 0).tolist()))
            if mmr.p == math.inf:
                sig.append(tuple(torch.cat([J.abs().argmax(-1) for J in jacs], 1).flatten().tolist()))
        return [tuple(s) for s in sig]


# -- training ------------------------------------------------------------------

def to_network(params, input_dim: int) -> Network:
    """Exact (dyadic) rational copy of float parameters."""
    Ws = [[[Fraction(float(v)) for v in row] for row in W] for W, _ in params]
    bs = [[Fraction(float(v)) for v in b] for _, b in params]
    return from_arrays(Ws, bs, input_dim=input_dim)


def _float_accuracy(out: np.ndarray, ds: Dataset, tol: float) -> float:
    if ds.kind == "multiplication":
        return float(np.mean(np.abs(out - ds.targets) <= tol * np.abs(ds.targets)))
    pred = np.where(out > 0, 1.0, -1.0)
    return float(np.mean(pred == ds.targets))


def train(arch: Architecture, dataset: Dataset, config: TrainConfig) -> tuple[Network, TrainResult]:
    if arch.input_dim != dataset.input_dim:
        raise ValueError("architecture and dataset disagree on the input dimension")
    if arch.output_dim != 1:
        raise ValueError("training supports a scalar output head only")
    params = init_params(arch, config.seed, dataset.inputs)
    tp = _torch_params(params)
    X = torch.from_numpy(np.ascontiguousarray(dataset.inputs, dtype=np.float64))
    Y = torch.from_numpy(np.ascontiguousarray(dataset.targets, dtype=np.float64))
    rng = np.random.default_rng(config.seed + 1)
    result = TrainResult()
    count = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(count)
        tot = pen_sum = 0.0
        for start in range(0, count, config.batch):
            idx = torch.from_numpy(order[start:start + config.batch])
            total, _, pen = objective(tp, X[idx], Y[idx], dataset.kind, config.mmr)
            if not torch.isfinite(total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            for t in tp:
                t.grad = None
            total.backward()
            with torch.no_grad():
                for t in tp:
                    t -= config.lr * t.grad
            tot += float(total.detach()) * len(idx)
            pen_sum += float(pen.detach()) * len(idx)
        with torch.no_grad():
            out, _, _ = _forward(tp, X, False)
        result.losses.append(tot / count)
        result.penalties.append(pen_sum / count)
        result.accuracies.append(_float_accuracy(out.numpy(), dataset, 0.05))
    final = [(tp[2 * i].detach().numpy().copy(), tp[2 * i + 1].detach().numpy().copy()) for i in range(len(params))]
    result.params = final
    net = to_network(final, arch.input_dim)
    result.accuracy = accuracy(net, dataset)
    return net, result


def accuracy(net: Network, dataset: Dataset, tol: float = 0.05) -> float:
    """Fraction of correct samples.

    multiplication: relative error at most ``tol``; perception: ``sign(f(x))``
    equals the label, with ``f(x) = 0`` read as the negative class.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    h = dataset.inputs
    for l in net.layers:
        W = np.array(l.weights, dtype=float)
        b = np.array(l.biases, dtype=float)
        h = h @ W.T + b
        if l.has_relu:
            h = np.maximum(h, 0.0)
    return _float_accuracy(h[:, 0], dataset, tol)
