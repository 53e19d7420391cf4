"""Affine forms over the network inputs and their propagation through ReLU layers."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .network import Network, NetworkError
from .rational import fmt, to_fraction

ZERO = Fraction(0)


@dataclass(frozen=True)
class AffineForm:
    """``coeffs . x + const`` with exact rational coefficients."""

    coeffs: tuple[Fraction, ...]
    const: Fraction = ZERO

    @classmethod
    def zero(cls, dim: int) -> "AffineForm":
        return cls((ZERO,) * dim, ZERO)

    @classmethod
    def variable(cls, dim: int, i: int) -> "AffineForm":
        return cls(tuple(Fraction(int(k == i)) for k in range(dim)), ZERO)

    @classmethod
    def of(cls, coeffs: Sequence, const=0) -> "AffineForm":
        return cls(tuple(to_fraction(c) for c in coeffs), to_fraction(const))

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def __call__(self, x: Sequence) -> Fraction:
        return sum((a * v for a, v in zip(self.coeffs, x)), self.const)

    def __add__(self, other: "AffineForm") -> "AffineForm":
        return AffineForm(
            tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.const + other.const
        )

    def __neg__(self) -> "AffineForm":
        return AffineForm(tuple(-a for a in self.coeffs), -self.const)

    def __sub__(self, other: "AffineForm") -> "AffineForm":
        return self + (-other)

    def scale(self, k) -> "AffineForm":
        k = to_fraction(k)
        return AffineForm(tuple(k * a for a in self.coeffs), k * self.const)

    def shift(self, c) -> "AffineForm":
        return AffineForm(self.coeffs, self.const + to_fraction(c))

    def is_constant(self) -> bool:
        return not any(self.coeffs)

    def __str__(self) -> str:
        terms = [f"{fmt(a)}*x{i}" for i, a in enumerate(self.coeffs) if a]
        return " + ".join(terms + [fmt(self.const)])


def combine(weights: Sequence[Fraction], forms: Sequence[AffineForm], bias: Fraction, dim: int) -> AffineForm:
    """``sum_j weights[j] * forms[j] + bias``."""
    coeffs = [ZERO] * dim
    const = bias
    for w, f in zip(weights, forms):
        if not w:
            continue
        const += w * f.const
        for k, a in enumerate(f.coeffs):
            if a:
                coeffs[k] += w * a
    return AffineForm(tuple(coeffs), const)


@dataclass(frozen=True)
class LinearConstraint:
    """``form >= 0`` or, when ``strict``, ``form < 0``."""

    form: AffineForm
    strict: bool = False

    def holds(self, x: Sequence) -> bool:
        v = self.form(x)
        return v < 0 if self.strict else v >= 0

    def closure(self) -> "LinearConstraint":
        """Non-strict closure: ``form < 0`` becomes ``-form >= 0``."""
        return LinearConstraint(-self.form) if self.strict else self

    def __str__(self) -> str:
        return f"{self.form} {'< 0' if self.strict else '>= 0'}"


def neuron_constraint(form: AffineForm, active: bool | int) -> LinearConstraint:
    """Active neurons satisfy ``form >= 0``; inactive ones ``form < 0``."""
    return LinearConstraint(form, strict=not active)


def ge(form: AffineForm) -> LinearConstraint:
    return LinearConstraint(form)


def le(form: AffineForm) -> LinearConstraint:
    """``form <= 0`` as a non-strict constraint."""
    return LinearConstraint(-form)


def box_constraints(lo: Sequence, hi: Sequence) -> list[LinearConstraint]:
    n = len(lo)
    out = []
    for i, (a, b) in enumerate(zip(lo, hi)):
        v = AffineForm.variable(n, i)
        out.append(ge(v.shift(-to_fraction(a))))
        out.append(le(v.shift(-to_fraction(b))))
    return out


class PrefixError(ValueError):
    pass


class Propagator:
    """Incremental symbolic forward pass under a growing activation prefix.

    Holds the post-activation forms of the last completed layer and the
    pre-activation forms of the layer in progress. Instances are cheap to
    copy because all forms are immutable.
    """

    __slots__ = ("net", "layer", "prev", "pre", "bits")

    def __init__(self, net: Network):
        self.net = net
        dim = net.input_dim
        self.layer = 0
        self.prev = tuple(AffineForm.variable(dim, i) for i in range(dim))
        self.pre: tuple[AffineForm, ...] = ()
        self.bits: tuple[int, ...] = ()
        self._skip_linear()

    def copy(self) -> "Propagator":
        new = object.__new__(Propagator)
        new.net, new.layer, new.prev, new.pre, new.bits = (
            self.net, self.layer, self.prev, self.pre, self.bits
        )
        return new

    def _affine(self, layer_index: int, j: int) -> AffineForm:
        L = self.net.layers[layer_index]
        return combine(L.weights[j], self.prev, L.biases[j], self.net.input_dim)

    def _skip_linear(self):
        # ReLU-free hidden layers are folded directly into ``prev``.
        layers = self.net.layers
        while self.layer < len(layers) - 1 and not layers[self.layer].has_relu:
            self.prev = tuple(self._affine(self.layer, j) for j in range(layers[self.layer].out_width))
            self.layer += 1

    @property
    def done(self) -> bool:
        return self.layer >= len(self.net.layers) - 1 and not self.net.layers[self.layer].has_relu

    def next_form(self) -> AffineForm:
        """Pre-activation form of the first undecided ReLU neuron."""
        if self.done:
            raise PrefixError("all ReLU neurons are decided")
        j = len(self.pre)
        return self._affine(self.layer, j)

    def push(self, bit: int, form: AffineForm | None = None) -> None:
        if form is None:
            form = self.next_form()
        self.pre = self.pre + (form,)
        self.bits = self.bits + (int(bit),)
        width = self.net.layers[self.layer].out_width
        if len(self.pre) == width:
            bits = self.bits[-width:]
            zero = AffineForm.zero(self.net.input_dim)
            self.prev = tuple(f if b else zero for f, b in zip(self.pre, bits))
            self.pre = ()
            self.layer += 1
            self._skip_linear()

    def output_forms(self) -> tuple[AffineForm, ...]:
        if not self.done:
            raise PrefixError("pattern is incomplete")
        last = self.net.layers[-1]
        return tuple(self._affine(len(self.net.layers) - 1, j) for j in range(last.out_width))


def propagate_affine(net: Network, prefix: Sequence[int]) -> list[AffineForm]:
    """Pre-activation forms of every neuron decided by ``prefix`` plus the next one.

    For a complete pattern the output forms are appended instead of a next
    neuron. Forms of decided ReLU neurons are listed in topological order.
    """
    prefix = list(prefix)
    if len(prefix) > net.relu_count:
        raise PrefixError(f"prefix has {len(prefix)} bits but the network has {net.relu_count} ReLUs")
    if any(b not in (0, 1) for b in prefix):
        raise PrefixError("prefix bits must be 0 or 1 with no gaps")
    prop = Propagator(net)
    forms = []
    for b in prefix:
        f = prop.next_form()
        forms.append(f)
        prop.push(b, f)
    if prop.done:
        forms.extend(prop.output_forms())
    else:
        forms.append(prop.next_form())
    return forms


def facet_output_forms(net: Network, pattern: Sequence[int]) -> tuple[list[AffineForm], tuple[AffineForm, ...]]:
    """(pre-activation forms of all ReLUs, output forms) for a complete pattern."""
    if len(pattern) != net.relu_count:
        raise PrefixError("pattern must be complete")
    prop = Propagator(net)
    pre = []
    for b in pattern:
        f = prop.next_form()
        pre.append(f)
        prop.push(b, f)
    return pre, prop.output_forms()


def interval_bounds(net: Network, lo: Sequence, hi: Sequence) -> list[list[tuple[Fraction, Fraction]]]:
    """Interval enclosure of every pre-activation (per layer, per neuron) over a box."""
    lo = [to_fraction(v) for v in lo]
    hi = [to_fraction(v) for v in hi]
    if len(lo) != net.input_dim or len(hi) != net.input_dim:
        raise NetworkError("box dimension does not match the network input")
    if any(a > b for a, b in zip(lo, hi)):
        raise ValueError("box has lo > hi")
    out = []
    for layer in net.layers:
        bounds = []
        for row, b in zip(layer.weights, layer.biases):
            l = u = b
            for w, a, c in zip(row, lo, hi):
                if w >= 0:
                    l += w * a
                    u += w * c
                else:
                    l += w * c
                    u += w * a
            bounds.append((l, u))
        out.append(bounds)
        if layer.has_relu:
            lo = [max(l, ZERO) for l, _ in bounds]
            hi = [max(u, ZERO) for _, u in bounds]
        else:
            lo = [l for l, _ in bounds]
            hi = [u for _, u in bounds]
    return out
