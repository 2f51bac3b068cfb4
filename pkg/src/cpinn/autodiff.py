"""Reverse-mode tape over numpy arrays plus forward-mode dual numbers.

A :class:`Var` is a node on a :class:`Tape`; arithmetic on it records a
primitive together with its vector-Jacobian product.  A :class:`DualVector`
carries a value and ``d`` tangent channels (leading axis) through the
network.  Values and tangents may themselves be tape variables, so a loss
built from input derivatives can be differentiated with respect to the
weights: forward mode for d/dx nested inside reverse mode for d/dw.

The primitives dispatch on their argument: plain arrays go straight to
numpy, tape variables are recorded, duals propagate tangents.
"""

from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "EmptyTapeError",
    "Tape",
    "Var",
    "DualVector",
    "tanh",
    "cosh",
    "sqrt",
    "square",
    "reciprocal",
    "grad_weights",
    "finite_difference_gradient",
    "eval_with_input_jacobian",
]

Array = NDArray[np.float64]
Operand = Union["Var", ArrayLike]
VJP = Callable[[Array], Array]


class EmptyTapeError(RuntimeError):
    """Gradient requested from a tape that recorded nothing."""


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    size = int(np.prod(shape))
    if size == grad.shape[-1] and (not shape or shape[-1] == size):
        # reduce everything but the last axis; a BLAS dot beats strided sums
        flat = grad.reshape(-1, size)
        return (np.ones(flat.shape[0]) @ flat).reshape(shape)
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Ordered record of primitives; the reverse sweep walks it backwards.

    Nodes are appended in evaluation order, which is a topological order,
    so the sweep needs no graph search.
    """

    def __init__(self) -> None:
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[tuple[VJP, ...]] = []
        self._shapes: list[tuple[int, ...]] = []
        self.watched: Var | None = None

    def __len__(self) -> int:
        return len(self._parents)

    def variable(self, value: ArrayLike) -> Var:
        return self._record(np.asarray(value, dtype=np.float64), (), ())

    def watch(self, flat: ArrayLike) -> Var:
        """Register the flat weight vector that :func:`grad_weights` differentiates against."""
        self.watched = self.variable(np.array(flat, dtype=np.float64))
        return self.watched

    def _record(self, value: Array, parents: tuple[int, ...], vjps: tuple[VJP, ...]) -> Var:
        self._parents.append(parents)
        self._vjps.append(vjps)
        self._shapes.append(np.shape(value))
        return Var(self, len(self._parents) - 1, value)

    def gradient(self, output: Var, wrt: Sequence[Var]) -> list[Array]:
        if len(self) == 0:
            raise EmptyTapeError("nothing recorded on tape")
        if output.tape is not self:
            raise ValueError("output was recorded on a different tape")
        if np.size(output.value) != 1:
            raise ValueError("gradient requires a scalar output")
        grads: list[Array | None] = [None] * (output.index + 1)
        grads[output.index] = np.ones(self._shapes[output.index])
        for i in range(output.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for parent, vjp in zip(self._parents[i], self._vjps[i]):
                contrib = vjp(g)
                prev = grads[parent]
                grads[parent] = contrib if prev is None else prev + contrib
        out = []
        for v in wrt:
            g = grads[v.index] if v.index < len(grads) else None
            out.append(np.zeros(self._shapes[v.index]) if g is None else g)
        return out


class Var:
    """An array-valued node on a tape."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make numpy defer mixed operations to Var

    def __init__(self, tape: Tape, index: int, value: Array) -> None:
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self) -> str:
        return f"Var(index={self.index}, shape={np.shape(self.value)})"

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.value)

    def _unary(self, value: Array, vjp: VJP) -> Var:
        return self.tape._record(value, (self.index,), (vjp,))

    def _binary(self, other: Operand, value: Array, vjp_self: VJP, vjp_other: VJP) -> Var:
        if isinstance(other, Var):
            return self.tape._record(value, (self.index, other.index), (vjp_self, vjp_other))
        return self.tape._record(value, (self.index,), (vjp_self,))

    def __add__(self, other: Operand) -> Var:
        o = other.value if isinstance(other, Var) else np.asarray(other, dtype=np.float64)
        s_shape, o_shape = self.shape, np.shape(o)
        return self._binary(
            other,
            self.value + o,
            lambda g: _unbroadcast(g, s_shape),
            lambda g: _unbroadcast(g, o_shape),
        )

    __radd__ = __add__

    def __neg__(self) -> Var:
        return self._unary(-self.value, lambda g: -g)

    def __sub__(self, other: Operand) -> Var:
        return self + (-other if isinstance(other, Var) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other: Operand) -> Var:
        return (-self) + other

    def __mul__(self, other: Operand) -> Var:
        a = self.value
        b = other.value if isinstance(other, Var) else np.asarray(other, dtype=np.float64)
        a_shape, b_shape = np.shape(a), np.shape(b)
        return self._binary(
            other,
            a * b,
            lambda g: _unbroadcast(g * b, a_shape),
            lambda g: _unbroadcast(g * a, b_shape),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> Var:
        if isinstance(other, Var):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other: Operand) -> Var:
        return reciprocal(self) * other

    def __pow__(self, exponent: int) -> Var:
        if exponent != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def __matmul__(self, other: Operand) -> Var:
        a = self.value
        b = other.value if isinstance(other, Var) else np.asarray(other, dtype=np.float64)
        return _matmul(self, other, a, b)

    def __rmatmul__(self, other: ArrayLike) -> Var:
        a = np.asarray(other, dtype=np.float64)
        b = self.value
        out = a @ b
        a2 = a.reshape(-1, a.shape[-1])
        return self._unary(out, lambda g: a2.T @ g.reshape(-1, g.shape[-1]))

    def __getitem__(self, key) -> Var:
        shape = self.shape

        def vjp(g: Array) -> Array:
            full = np.zeros(shape)
            if _fancy(key):
                np.add.at(full, key, g)
            else:
                full[key] = g
            return full

        return self._unary(self.value[key], vjp)

    def reshape(self, *shape) -> Var:
        old = self.shape
        return self._unary(self.value.reshape(*shape), lambda g: g.reshape(old))

    def sum(self, axis: int | tuple[int, ...] | None = None) -> Var:
        shape = self.shape
        if axis is None:
            return self._unary(np.sum(self.value), lambda g: np.broadcast_to(g, shape).copy())
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(a % len(shape) for a in axes)
        kept = tuple(1 if i in axes else n for i, n in enumerate(shape))
        return self._unary(
            np.sum(self.value, axis=axes),
            lambda g: np.broadcast_to(g.reshape(kept), shape).copy(),
        )

    def mean(self, axis: int | None = None) -> Var:
        n = np.size(self.value) if axis is None else self.shape[axis]
        return self.sum(axis) * (1.0 / n)


def _fancy(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def _matmul(left: Var, right: Operand, a: Array, b: Array) -> Var:
    if b.ndim != 2:
        raise NotImplementedError("right operand of matmul must be a matrix")
    # stacked operands go through one 2-D BLAS call
    out = (a.reshape(-1, a.shape[-1]) @ b).reshape(a.shape[:-1] + (b.shape[1],))

    def vjp_left(g: Array) -> Array:
        return (g.reshape(-1, g.shape[-1]) @ b.T).reshape(g.shape[:-1] + (b.shape[0],))

    def vjp_right(g: Array) -> Array:
        return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    return left._binary(right, out, vjp_left, vjp_right)


def _value(x):
    return x.value if isinstance(x, Var) else x


# ----------------------------------------------------------------------------
# primitives; each accepts ndarray, Var or DualVector


def tanh(x):
    if isinstance(x, DualVector):
        return _dual_tanh(x)
    if isinstance(x, Var):
        t = np.tanh(x.value)
        return x._unary(t, lambda g: g * (1.0 - t * t))
    return np.tanh(x)


def _dual_tanh(x: DualVector) -> DualVector:
    # Two nodes instead of the five that tanh/square/sub/mul would record:
    #   t = tanh(z),  s = (1 - t^2) * dz
    #   ds/dz = -2 t (1 - t^2) dz,  ds/d(dz) = 1 - t^2
    z, dz = x.value, x.tangents
    t = tanh(z)
    tv = _value(t)
    slope = 1.0 - tv * tv
    dzv = _value(dz)
    tangent = slope * dzv
    if not isinstance(z, Var) and not isinstance(dz, Var):
        return DualVector(t, tangent)
    tape = z.tape if isinstance(z, Var) else dz.tape
    parents: list[int] = []
    vjps: list[VJP] = []
    if isinstance(z, Var):
        parents.append(z.index)
        z_shape = z.shape

        def vjp_value(g: Array) -> Array:
            gd = np.broadcast_to(dzv, g.shape)
            return _unbroadcast(np.einsum("d...,d...->...", g, gd) * (-2.0 * tv * slope), z_shape)

        vjps.append(vjp_value)
    if isinstance(dz, Var):
        dz_shape = dz.shape
        parents.append(dz.index)
        vjps.append(lambda g: _unbroadcast(g * slope, dz_shape))
    return DualVector(t, tape._record(tangent, tuple(parents), tuple(vjps)))


def cosh(x):
    if isinstance(x, DualVector):
        return DualVector(cosh(x.value), _sinh(x.value) * x.tangents)
    if isinstance(x, Var):
        v = x.value
        return x._unary(np.cosh(v), lambda g: g * np.sinh(v))
    return np.cosh(x)


def _sinh(x):
    if isinstance(x, Var):
        v = x.value
        return x._unary(np.sinh(v), lambda g: g * np.cosh(v))
    return np.sinh(x)


def square(x):
    if isinstance(x, DualVector):
        return DualVector(square(x.value), 2.0 * x.value * x.tangents)
    if isinstance(x, Var):
        v = x.value
        return x._unary(v * v, lambda g: 2.0 * g * v)
    return np.square(x)


def sqrt(x):
    if isinstance(x, DualVector):
        s = sqrt(x.value)
        return DualVector(s, x.tangents * reciprocal(2.0 * s))
    if isinstance(x, Var):
        s = np.sqrt(x.value)
        return x._unary(s, lambda g: g / (2.0 * s))
    return np.sqrt(x)


def reciprocal(x):
    if isinstance(x, DualVector):
        r = reciprocal(x.value)
        return DualVector(r, -square(r) * x.tangents)
    if isinstance(x, Var):
        r = 1.0 / x.value
        return x._unary(r, lambda g: -g * r * r)
    return 1.0 / np.asarray(x, dtype=np.float64)


class DualVector:
    """Value with ``d`` tangent channels stacked on a leading axis.

    ``tangents`` has shape ``(d, *value.shape)`` or anything broadcastable to
    it; both fields may be arrays or tape variables.
    """

    __slots__ = ("value", "tangents")
    __array_ufunc__ = None

    def __init__(self, value, tangents) -> None:
        self.value = value
        self.tangents = tangents

    @classmethod
    def seed(cls, value: ArrayLike) -> DualVector:
        """Independent variables: one tangent channel per trailing coordinate."""
        v = np.asarray(value, dtype=np.float64)
        d = v.shape[-1]
        eye = np.eye(d).reshape((d,) + (1,) * (v.ndim - 1) + (d,))
        return cls(v, np.broadcast_to(eye, (d,) + v.shape).copy())

    def __add__(self, other) -> DualVector:
        if isinstance(other, DualVector):
            return DualVector(self.value + other.value, self.tangents + other.tangents)
        return DualVector(self.value + other, self.tangents)

    __radd__ = __add__

    def __neg__(self) -> DualVector:
        return DualVector(-self.value, -self.tangents)

    def __sub__(self, other) -> DualVector:
        return self + (-other)

    def __rsub__(self, other) -> DualVector:
        return (-self) + other

    def __mul__(self, other) -> DualVector:
        if isinstance(other, DualVector):
            return DualVector(
                self.value * other.value,
                self.tangents * other.value + other.tangents * self.value,
            )
        return DualVector(self.value * other, self.tangents * other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> DualVector:
        return self * reciprocal(other)

    def __matmul__(self, matrix) -> DualVector:
        return DualVector(self.value @ matrix, self.tangents @ matrix)


# ----------------------------------------------------------------------------


def grad_weights(loss: Var) -> Array:
    """Gradient of a recorded scalar with respect to the tape's watched weights."""
    tape = loss.tape
    if len(tape) == 0:
        raise EmptyTapeError("nothing recorded on tape")
    if tape.watched is None:
        raise ValueError("tape has no watched weight vector")
    return tape.gradient(loss, [tape.watched])[0]


def finite_difference_gradient(
    f: Callable[[Array], float], at: ArrayLike, step: float = 1e-6
) -> Array:
    """Central-difference gradient of ``f`` at ``at``."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(at, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        grad.flat[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def eval_with_input_jacobian(network, inputs: ArrayLike) -> tuple[float, Array]:
    """Plain forward pass of ``network`` at one raw input, plus d(out)/d(spatial inputs).

    ``network`` is a :class:`cpinn.network.NetworkParams` or a list of
    ``(W, b)`` layers (then every input coordinate is treated as spatial).
    """
    from cpinn.network import NetworkParams, mlp_forward

    x = np.atleast_1d(np.asarray(inputs, dtype=np.float64))
    if isinstance(network, NetworkParams):
        layers = network.layers()
        spatial = network.layout.spatial_dim
        width = network.layout.input_width
    else:
        layers = list(network)
        width = np.shape(layers[0][0])[0]
        spatial = width
    if x.shape != (width,):
        raise ValueError(f"expected input of width {width}, got shape {x.shape}")
    seed = np.zeros((spatial, 1, width))
    seed[np.arange(spatial), 0, np.arange(spatial)] = 1.0
    y, gy = mlp_forward(layers, x[None, :], seed)
    return float(y[0]), np.asarray(gy)[:, 0].copy()
