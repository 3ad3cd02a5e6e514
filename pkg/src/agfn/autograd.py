"""Layer contract with hand-written backward passes, and a finite-difference checker.

Every layer caches what its backward pass needs during ``forward``; the cache
is consumed by exactly one ``backward`` call.  Parameter gradients are
accumulated into ``layer.grads`` until ``zero_grad`` is called.

Inputs may be a single array or a tuple of arrays; ``backward`` returns the
input gradient with the same structure.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, StateError
from .numerics import Rng


_NO_FORWARD = object()


class Layer:
    def __init__(self):
        self._params = {}
        self._grads = {}
        self._cache = _NO_FORWARD
        self._out_shape = None

    @property
    def params(self):
        return self._params

    @property
    def grads(self):
        return self._grads

    def reset(self):
        """Drop any pending forward state."""
        self._cache = _NO_FORWARD

    def zero_grad(self):
        for name, p in self._params.items():
            g = self._grads.get(name)
            if g is None or g.shape != p.shape:
                self._grads[name] = np.zeros_like(p)
            else:
                g.fill(0.0)

    def add_param(self, name, value):
        self._params[name] = np.array(value, dtype=np.float64)
        self._grads[name] = np.zeros_like(self._params[name])
        return self._params[name]

    def _acc(self, name, g):
        self._grads[name] += g

    def forward(self, x):
        out, cache = self._forward(x)
        self._cache = cache
        self._out_shape = np.shape(out)
        return out

    def backward(self, grad_out):
        if self._cache is _NO_FORWARD:
            raise StateError(f"{type(self).__name__}.backward called without a pending forward")
        if np.shape(grad_out) != self._out_shape:
            raise ShapeError(f"grad_out shape {np.shape(grad_out)} != output shape {self._out_shape}")
        cache, self._cache = self._cache, _NO_FORWARD
        return self._backward(np.asarray(grad_out, dtype=np.float64), cache)

    __call__ = forward

    def _forward(self, x):
        raise NotImplementedError

    def _backward(self, grad_out, cache):
        raise NotImplementedError


class Composite(Layer):
    """Layer built from named children; exposes their parameters as ``child.name``."""

    def __init__(self):
        super().__init__()
        self.children = {}

    def add_child(self, name, layer):
        self.children[name] = layer
        return layer

    @property
    def params(self):
        out = dict(self._params)
        for cname, child in self.children.items():
            for pname, p in child.params.items():
                out[f"{cname}.{pname}"] = p
        return out

    @property
    def grads(self):
        out = dict(self._grads)
        for cname, child in self.children.items():
            for pname, g in child.grads.items():
                out[f"{cname}.{pname}"] = g
        return out

    def reset(self):
        super().reset()
        for child in self.children.values():
            child.reset()

    def zero_grad(self):
        super().zero_grad()
        for child in self.children.values():
            child.zero_grad()


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Affine(Layer):
    """``x @ W + b`` applied over the last axis of any batched input."""

    def __init__(self, n_in, n_out, rng=None, bias=True):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        W = glorot(rng, n_in, n_out) if rng is not None else np.zeros((n_in, n_out))
        self.add_param("W", W)
        self.has_bias = bias
        if bias:
            self.add_param("b", np.zeros(n_out))

    def _forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"Affine expects last dim {self.n_in}, got {x.shape[-1]}")
        y = x @ self.params["W"]
        if self.has_bias:
            y = y + self.params["b"]
        return y, x

    def _backward(self, g, x):
        flat_x = x.reshape(-1, self.n_in)
        flat_g = g.reshape(-1, self.n_out)
        self._acc("W", flat_x.T @ flat_g)
        if self.has_bias:
            self._acc("b", flat_g.sum(axis=0))
        return g @ self.params["W"].T


class Tanh(Layer):
    def _forward(self, x):
        y = np.tanh(x)
        return y, y

    def _backward(self, g, y):
        return g * (1.0 - y * y)


class Scale(Layer):
    def __init__(self, factor):
        super().__init__()
        self.factor = float(factor)

    def _forward(self, x):
        return self.factor * np.asarray(x, dtype=np.float64), True

    def _backward(self, g, _):
        return self.factor * g


class Identity(Layer):
    def _forward(self, x):
        return np.asarray(x, dtype=np.float64), True

    def _backward(self, g, _):
        return g


class MeanPool(Layer):
    """Average over the sequence axis: (B, L, d) -> (B, d)."""

    def _forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] < 1:
            raise ShapeError(f"MeanPool expects (batch, length>=1, dim), got {x.shape}")
        return x.mean(axis=1), x.shape

    def _backward(self, g, shape):
        return np.broadcast_to(g[:, None, :] / shape[1], shape).copy()


@dataclass
class GradReport:
    layer: str
    param_errors: dict = field(default_factory=dict)
    input_errors: list = field(default_factory=list)

    @property
    def max_param_error(self):
        return max(self.param_errors.values(), default=0.0)

    @property
    def max_input_error(self):
        return max(self.input_errors, default=0.0)

    @property
    def max_error(self):
        return max(self.max_param_error, self.max_input_error)


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return np.abs(a - n) / denom


def _as_tuple(x):
    return (x, True) if isinstance(x, tuple) else ((x,), False)


def grad_check(layer, inputs, h=1e-5, rng=None, corrupt=0.0, check_inputs=True):
    """Compare analytic gradients against central differences.

    The scalar objective is ``sum(R * layer(x))`` for a fixed random ``R``.
    ``corrupt`` adds a relative perturbation to the analytic gradients and
    exists only to prove the checker notices broken backward passes.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    rng = rng or Rng(0)
    xs, is_tuple = _as_tuple(inputs)
    xs = tuple(np.array(x, dtype=np.float64) for x in xs)
    call_in = xs if is_tuple else xs[0]

    out = layer.forward(call_in)
    R = rng.normal(np.shape(out))
    layer.zero_grad()
    layer.forward(call_in)
    gin = layer.backward(R)
    gins, _ = _as_tuple(gin)
    analytic_params = {k: g.copy() * (1.0 + corrupt) for k, g in layer.grads.items()}

    def objective():
        return float(np.sum(R * layer.forward(call_in)))

    report = GradReport(layer=type(layer).__name__)
    for name, p in layer.params.items():
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = objective()
            flat[i] = old - h
            fm = objective()
            flat[i] = old
            nflat[i] = (fp - fm) / (2.0 * h)
        err = relative_error(analytic_params[name], num)
        report.param_errors[name] = float(err.max()) if err.size else 0.0

    if check_inputs:
        for x, ga in zip(xs, gins):
            num = np.zeros_like(x)
            flat = x.reshape(-1)
            nflat = num.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                fp = objective()
                flat[i] = old - h
                fm = objective()
                flat[i] = old
                nflat[i] = (fp - fm) / (2.0 * h)
            err = relative_error(np.asarray(ga) * (1.0 + corrupt), num)
            report.input_errors.append(float(err.max()) if err.size else 0.0)
    layer.reset()
    return report
