"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

Define-by-run tape: every operation returns a Var remembering its parents and
a closure that accumulates gradients.  backward() on a scalar Var walks the
graph once; calling it again without rebuilding the graph raises GraphReuse.
"""

import numpy as np


class GraphReuse(Exception):
    pass


class ShapeMismatch(Exception):
    pass


def _unbroadcast(grad, shape):
    """Sum a gradient back down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Var:
    __slots__ = ("data", "grad", "parents", "_backward", "_consumed")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_var(other)
        out = Var(self.data + other.data, (self, other))
        def bw(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(g, other.data.shape))
        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.data, (self,))
        out._backward = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-as_var(other))

    def __rsub__(self, other):
        return as_var(other) + (-self)

    def __mul__(self, other):
        other = as_var(other)
        out = Var(self.data * other.data, (self, other))
        def bw(g):
            self._accum(_unbroadcast(g * other.data, self.data.shape))
            other._accum(_unbroadcast(g * self.data, other.data.shape))
        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other)
        out = Var(self.data / other.data, (self, other))
        def bw(g):
            self._accum(_unbroadcast(g / other.data, self.data.shape))
            other._accum(_unbroadcast(-g * self.data / other.data**2, other.data.shape))
        out._backward = bw
        return out

    def __matmul__(self, other):
        other = as_var(other)
        if self.data.shape[-1] != other.data.shape[0]:
            raise ShapeMismatch(f"matmul {self.data.shape} @ {other.data.shape}")
        out = Var(self.data @ other.data, (self, other))
        def bw(g):
            self._accum(g @ other.data.T)
            other._accum(self.data.T @ g)
        out._backward = bw
        return out

    def __getitem__(self, idx):
        out = Var(self.data[idx], (self,))
        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accum(full)
        out._backward = bw
        return out


def as_var(x):
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


# -- elementwise functions -----------------------------------------------

def exp(x):
    x = as_var(x)
    out = Var(np.exp(x.data), (x,))
    out._backward = lambda g: x._accum(g * out.data)
    return out


def log(x):
    x = as_var(x)
    out = Var(np.log(x.data), (x,))
    out._backward = lambda g: x._accum(g / x.data)
    return out


def tanh(x):
    x = as_var(x)
    out = Var(np.tanh(x.data), (x,))
    out._backward = lambda g: x._accum(g * (1.0 - out.data**2))
    return out


def sigmoid(x):
    x = as_var(x)
    out = Var(1.0 / (1.0 + np.exp(-x.data)), (x,))
    out._backward = lambda g: x._accum(g * out.data * (1.0 - out.data))
    return out


def elu(x):
    """x for x > 0, exp(x) - 1 otherwise; derivative continuous at 0."""
    x = as_var(x)
    neg = x.data <= 0.0
    out = Var(np.where(neg, np.expm1(x.data), x.data), (x,))
    out._backward = lambda g: x._accum(g * np.where(neg, np.exp(x.data), 1.0))
    return out


def square(x):
    x = as_var(x)
    out = Var(x.data**2, (x,))
    out._backward = lambda g: x._accum(g * 2.0 * x.data)
    return out


def clip(x, lo, hi):
    """Hard clamp; gradient passes through only where unclamped."""
    x = as_var(x)
    inside = (x.data > lo) & (x.data < hi)
    out = Var(np.clip(x.data, lo, hi), (x,))
    out._backward = lambda g: x._accum(g * inside)
    return out


def vsum(x, axis=None):
    x = as_var(x)
    out = Var(x.data.sum(axis=axis), (x,))
    def bw(g):
        if axis is None:
            x._accum(np.broadcast_to(g, x.data.shape).copy())
        else:
            x._accum(np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())
    out._backward = bw
    return out


def vmean(x, axis=None):
    x = as_var(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return vsum(x, axis=axis) * (1.0 / n)


def concat(vars_, axis=0):
    vars_ = [as_var(v) for v in vars_]
    out = Var(np.concatenate([v.data for v in vars_], axis=axis), tuple(vars_))
    sizes = [v.data.shape[axis] for v in vars_]
    def bw(g):
        start = 0
        for v, n in zip(vars_, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            v._accum(g[tuple(sl)])
            start += n
    out._backward = bw
    return out


def backward(loss):
    """Reverse pass from a scalar loss; fills .grad on every reachable Var."""
    if loss._consumed:
        raise GraphReuse("backward already called on this graph; rerun the forward pass")
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeMismatch("backward requires a scalar loss")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    loss._consumed = True


class ParamVector:
    """Flat float64 parameter storage with named slices and a paired gradient
    accumulator of identical shape."""

    def __init__(self):
        self.flat = np.zeros(0)
        self.grad_flat = np.zeros(0)
        self.slices = {}  # name -> (start, stop, shape)

    def add(self, name, init):
        init = np.asarray(init, dtype=np.float64)
        start = self.flat.size
        self.flat = np.concatenate([self.flat, init.ravel()])
        self.grad_flat = np.zeros_like(self.flat)
        self.slices[name] = (start, start + init.size, init.shape)

    def get(self, name):
        start, stop, shape = self.slices[name]
        return self.flat[start:stop].reshape(shape)

    def set_flat(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.flat.shape:
            raise ShapeMismatch("flat parameter size mismatch")
        self.flat = values.copy()

    def get_flat(self):
        return self.flat.copy()

    def store_grads(self, var_map):
        """Copy gradients from forward-pass param Vars into grad_flat."""
        self.grad_flat = np.zeros_like(self.flat)
        for name, var in var_map.items():
            start, stop, shape = self.slices[name]
            if var.grad is not None:
                self.grad_flat[start:stop] = var.grad.ravel()

    @property
    def size(self):
        return self.flat.size
