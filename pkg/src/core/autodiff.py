"""
Minimal reverse-mode automatic differentiation.

A program is recorded on a Tape as it runs: every primitive applied to a
Var appends a node holding its value and, per parent, a vector-Jacobian
product. gradient() then sweeps the tape backwards once. Node values are
numpy arrays (0-d for scalars), so per-event likelihood terms are recorded
as a handful of vectorised nodes rather than one node per event.

Subgradient conventions:
- abs'(0) = 0
- maximum / minimum send the whole adjoint to the first argument on ties

The free functions (exp, log, sigmoid, ...) accept plain floats and arrays
too, in which case they just evaluate, so model code is written once and
runs both with and without a tape.
"""

from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from core.errors import BCMInferError, NonFiniteGradientError, UnsupportedPrimitiveError


SUPPORTED_PRIMITIVES = (
    "input", "add", "sub", "mul", "div", "neg", "exp", "log", "sigmoid", "log_sigmoid",
    "abs", "minimum", "maximum", "sum", "dot", "take", "concat", "reshape", "logsumexp",
)

VJP = Callable[[np.ndarray], np.ndarray]


@dataclass
class _Node:
    value: np.ndarray
    parents: Tuple[Tuple[int, VJP], ...]
    primitive: str


class Tape:
    """Append-only record of one forward pass."""

    def __init__(self):
        self.nodes: List[_Node] = []
        self.input: Optional["Var"] = None
        self.output: Optional["Var"] = None
        self.first_poisoned: Optional[int] = None
        self._frozen = False

    def __len__(self) -> int:
        return len(self.nodes)

    def push(self, value, parents: Sequence[Tuple["Var", VJP]], primitive: str) -> "Var":
        if self._frozen:
            raise BCMInferError("Tape is frozen; record a new forward pass instead")
        if primitive not in SUPPORTED_PRIMITIVES:
            raise UnsupportedPrimitiveError(primitive)
        value = np.asarray(value, dtype=float)
        index = len(self.nodes)
        if self.first_poisoned is None and not np.all(np.isfinite(value)):
            self.first_poisoned = index
        self.nodes.append(_Node(value, tuple((p.index, vjp) for p, vjp in parents), primitive))
        return Var(self, index, value)

    def variable(self, value) -> "Var":
        return self.push(np.array(value, dtype=float), (), "input")

    def freeze(self):
        self._frozen = True


class Var:
    """A recorded value (the differentiable scalar, generalised to arrays)."""

    __slots__ = ("tape", "index", "value")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    # numpy interop: route supported ufuncs to primitives, refuse the rest

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        handler = _UFUNC_PRIMITIVES.get(ufunc.__name__) if method == "__call__" and not kwargs else None
        if handler is None:
            raise UnsupportedPrimitiveError(f"numpy.{ufunc.__name__}")
        return handler(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        handler = _ARRAY_FUNCTIONS.get(func.__name__)
        if handler is None:
            raise UnsupportedPrimitiveError(f"numpy.{func.__name__}")
        return handler(*args, **kwargs)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __len__(self) -> int:
        return len(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Var(index={self.index}, value={self.value!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        raise UnsupportedPrimitiveError("power")

    def __rpow__(self, other):
        raise UnsupportedPrimitiveError("power")

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis: Optional[int] = None):
        return sum_(self, axis=axis)

    def dot(self, other):
        return dot(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


# === Helpers ===

def is_var(x: Any) -> bool:
    return isinstance(x, Var)


def value_of(x: Any):
    """Plain value of a Var, or the argument itself."""
    return x.value if isinstance(x, Var) else x


def _tape_of(*args) -> Optional[Tape]:
    tape = None
    for arg in args:
        if isinstance(arg, Var):
            if tape is None:
                tape = arg.tape
            elif arg.tape is not tape:
                raise BCMInferError("Cannot combine variables from different tapes")
    return tape


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a, b, value, da: VJP, db: VJP, primitive: str):
    tape = _tape_of(a, b)
    parents = []
    if isinstance(a, Var):
        shape = a.shape
        parents.append((a, lambda g, f=da, s=shape: _unbroadcast(f(g), s)))
    if isinstance(b, Var):
        shape = b.shape
        parents.append((b, lambda g, f=db, s=shape: _unbroadcast(f(g), s)))
    return tape.push(value, parents, primitive)


# === Primitives ===

def add(a, b):
    if _tape_of(a, b) is None:
        return np.add(a, b)
    return _binary(a, b, value_of(a) + value_of(b), lambda g: g, lambda g: g, "add")


def sub(a, b):
    if _tape_of(a, b) is None:
        return np.subtract(a, b)
    return _binary(a, b, value_of(a) - value_of(b), lambda g: g, lambda g: -g, "sub")


def mul(a, b):
    if _tape_of(a, b) is None:
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av, "mul")


def div(a, b):
    if _tape_of(a, b) is None:
        return np.divide(a, b)
    av, bv = value_of(a), value_of(b)
    return _binary(a, b, av / bv, lambda g: g / bv, lambda g: -g * av / (bv * bv), "div")


def neg(a):
    if not isinstance(a, Var):
        return np.negative(a)
    return a.tape.push(-a.value, [(a, lambda g: -g)], "neg")


def exp(a):
    if not isinstance(a, Var):
        return np.exp(a)
    out = np.exp(a.value)
    return a.tape.push(out, [(a, lambda g: g * out)], "exp")


def log(a):
    if not isinstance(a, Var):
        return np.log(a)
    av = a.value
    with np.errstate(divide="ignore"):
        out = np.log(av)
    return a.tape.push(out, [(a, lambda g: g / av)], "log")


def sigmoid(a):
    if not isinstance(a, Var):
        return special.expit(a)
    out = special.expit(a.value)
    return a.tape.push(out, [(a, lambda g: g * out * (1.0 - out))], "sigmoid")


def log_sigmoid(a):
    """log(sigmoid(a)), stable for large |a|."""
    if not isinstance(a, Var):
        return special.log_expit(a)
    av = a.value
    return a.tape.push(special.log_expit(av), [(a, lambda g: g * special.expit(-av))], "log_sigmoid")


def absolute(a):
    if not isinstance(a, Var):
        return np.abs(a)
    sign = np.sign(a.value)  # 0 at the kink
    return a.tape.push(np.abs(a.value), [(a, lambda g: g * sign)], "abs")


def maximum(a, b):
    if _tape_of(a, b) is None:
        return np.maximum(a, b)
    av, bv = np.asarray(value_of(a), dtype=float), np.asarray(value_of(b), dtype=float)
    first = av >= bv
    return _binary(a, b, np.where(first, av, bv), lambda g: g * first, lambda g: g * ~first, "maximum")


def minimum(a, b):
    if _tape_of(a, b) is None:
        return np.minimum(a, b)
    av, bv = np.asarray(value_of(a), dtype=float), np.asarray(value_of(b), dtype=float)
    first = av <= bv
    return _binary(a, b, np.where(first, av, bv), lambda g: g * first, lambda g: g * ~first, "minimum")


def sum_(a, axis: Optional[int] = None):
    if not isinstance(a, Var):
        return np.sum(a, axis=axis)
    shape = a.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

    return a.tape.push(np.sum(a.value, axis=axis), [(a, vjp)], "sum")


def dot(a, b):
    """Vector-vector or matrix-vector product."""
    if _tape_of(a, b) is None:
        return np.dot(a, b)
    av, bv = np.asarray(value_of(a), dtype=float), np.asarray(value_of(b), dtype=float)
    if bv.ndim != 1 or av.ndim not in (1, 2):
        raise UnsupportedPrimitiveError(f"dot with shapes {av.shape} and {bv.shape}")
    tape = _tape_of(a, b)
    parents = []
    if av.ndim == 1:
        if isinstance(a, Var):
            parents.append((a, lambda g: g * bv))
        if isinstance(b, Var):
            parents.append((b, lambda g: g * av))
    else:
        if isinstance(a, Var):
            parents.append((a, lambda g: np.outer(g, bv)))
        if isinstance(b, Var):
            parents.append((b, lambda g: av.T @ g))
    return tape.push(np.dot(av, bv), parents, "dot")


def take(a, index):
    """a[index] for integer, slice, or integer-array indices."""
    if not isinstance(a, Var):
        return np.asarray(a)[index]
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return out

    return a.tape.push(a.value[index], [(a, vjp)], "take")


def concat(parts: Sequence[Any]):
    """Concatenate 1-D pieces (Vars or arrays) along axis 0."""
    values = [np.atleast_1d(np.asarray(value_of(p), dtype=float)) for p in parts]
    tape = _tape_of(*parts)
    if tape is None:
        return np.concatenate(values)
    offsets = np.cumsum([0] + [v.shape[0] for v in values])
    parents = []
    for i, part in enumerate(parts):
        if isinstance(part, Var):
            lo, hi, shape = offsets[i], offsets[i + 1], part.shape
            parents.append((part, lambda g, lo=lo, hi=hi, s=shape: g[lo:hi].reshape(s)))
    return tape.push(np.concatenate(values), parents, "concat")


def reshape(a, shape):
    if not isinstance(a, Var):
        return np.reshape(a, shape)
    original = a.shape
    return a.tape.push(a.value.reshape(shape), [(a, lambda g: np.reshape(g, original))], "reshape")


def logsumexp(a, axis: Optional[int] = None):
    if not isinstance(a, Var):
        return special.logsumexp(a, axis=axis)
    av = a.value
    out = special.logsumexp(av, axis=axis)
    expanded = out if axis is None else np.expand_dims(out, axis)
    with np.errstate(invalid="ignore"):
        weights = np.exp(av - expanded)

    def vjp(g):
        g = g if axis is None else np.expand_dims(g, axis)
        return g * weights

    return a.tape.push(out, [(a, vjp)], "logsumexp")


_UFUNC_PRIMITIVES = {
    "add": add,
    "subtract": sub,
    "multiply": mul,
    "true_divide": div,
    "divide": div,
    "negative": neg,
    "exp": exp,
    "log": log,
    "absolute": absolute,
    "maximum": maximum,
    "minimum": minimum,
}

_ARRAY_FUNCTIONS = {
    "sum": lambda a, axis=None: sum_(a, axis=axis),
    "dot": dot,
    "concatenate": lambda parts, axis=0: concat(parts),
    "reshape": lambda a, newshape: reshape(a, newshape),
}


# === Recording and differentiation ===

def record(f: Callable[[Var], Any], x) -> Tuple[Any, Tape]:
    """Run f on a fresh tape with input x; return (value, tape)."""
    tape = Tape()
    inp = tape.variable(x)
    tape.input = inp
    out = f(inp)
    if not isinstance(out, Var):
        # f ignored its input: record the constant so gradient() still works
        out = tape.push(np.asarray(out, dtype=float), (), "input")
    tape.output = out
    tape.freeze()
    value = out.value
    return (float(value) if value.ndim == 0 else value.copy()), tape


def gradient(tape: Tape) -> np.ndarray:
    """Gradient of the recorded scalar output with respect to the input."""
    if tape.input is None or tape.output is None:
        raise BCMInferError("Tape has not been recorded by record()")
    if tape.output.value.ndim != 0:
        raise BCMInferError(f"gradient() needs a scalar output, got shape {tape.output.shape}")

    adjoints: List[Optional[np.ndarray]] = [None] * len(tape.nodes)
    adjoints[tape.output.index] = np.ones(())
    for index in range(tape.output.index, -1, -1):
        adjoint = adjoints[index]
        if adjoint is None:
            continue
        node = tape.nodes[index]
        if not np.all(np.isfinite(adjoint)):
            raise NonFiniteGradientError(index, node.primitive)
        if node.parents and not np.all(np.isfinite(node.value)) and np.any(adjoint != 0):
            raise NonFiniteGradientError(index, node.primitive)
        for parent, vjp in node.parents:
            contribution = vjp(adjoint)
            if adjoints[parent] is None:
                adjoints[parent] = np.array(contribution, dtype=float)
            else:
                adjoints[parent] = adjoints[parent] + contribution

    grad = adjoints[tape.input.index]
    if grad is None:
        return np.zeros_like(tape.input.value)
    return np.asarray(grad, dtype=float).reshape(tape.input.shape)


def value_and_grad(f: Callable[[Var], Any], x) -> Tuple[float, np.ndarray]:
    """Convenience: record f at x and return (f(x), grad f(x))."""
    value, tape = record(f, x)
    return value, gradient(tape)
