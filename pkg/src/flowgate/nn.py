"""Minimal dense-network substrate: tensors, reverse-mode gradients, Adam.

Everything runs eagerly on float64 numpy arrays. While a GradTape is active,
operations also record backward closures; `backward` replays them in reverse
to produce exact gradients for every tensor the tape touched. Double precision
keeps the finite-difference checks in the test suite tight; frozen models can
be evaluated through the cheaper `eval_np` paths.
"""
from __future__ import annotations

import math
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DetachedLoss, ShapeMismatch

Array = np.ndarray


class Activation(Enum):
    LINEAR = "linear"
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"


LEAKY_RELU_SLOPE = 0.2


class Tensor:
    """A float64 array plus the gradient slot filled in by backward()."""

    __slots__ = ("data", "grad")

    def __init__(self, data) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


BackwardFn = Callable[[Array], tuple[Array | None, ...]]

_TAPE_STACK: list["GradTape"] = []


class GradTape:
    """Records operations so a scalar loss can be differentiated in reverse.

    Creation order of tape records is a topological order of the computation,
    so the backward pass simply walks the records once, back to front.
    """

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "GradTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._records)


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    if _TAPE_STACK:
        tape = _TAPE_STACK[-1]
        tape._records.append((out, inputs, backward_fn))
        tape._outputs.add(id(out))
    return out


def backward(tape: GradTape, loss: Tensor) -> dict[Tensor, Array]:
    """Gradients of a scalar loss w.r.t. every tensor on the tape.

    Tensors never touched by the tape are simply absent from the result;
    callers treat them as zero-gradient (see `grads_for`).
    """
    if id(loss) not in tape._outputs:
        raise DetachedLoss("loss was not produced by an operation recorded on this tape")
    if loss.data.size != 1:
        raise ShapeMismatch(f"loss must be a scalar, got shape {loss.data.shape}")
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, backward_fn in reversed(tape._records):
        g_out = grads.get(id(out))
        if g_out is None:
            continue
        for tensor, g in zip(inputs, backward_fn(g_out)):
            if g is None:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                by_id[key] = tensor
    result = {by_id[k]: g for k, g in grads.items()}
    for tensor, g in result.items():
        tensor.grad = g
    return result


def grads_for(grads: dict[Tensor, Array], params: Sequence[Tensor]) -> list[Array]:
    """Gradient per parameter, zeros for parameters the tape never saw."""
    return [grads[p] if p in grads else np.zeros_like(p.data) for p in params]


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise operations ---

def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bw(g: Array):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def bw(g: Array):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def bw(g: Array):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def bw(g: Array):
        return (-g,)

    return _record(out, (a,), bw)


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    out = Tensor(e)

    def bw(g: Array):
        return (g * e,)

    return _record(out, (a,), bw)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))
    ad = a.data

    def bw(g: Array):
        return (g / ad,)

    return _record(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)

    def bw(g: Array):
        return (g * (1.0 - t * t),)

    return _record(out, (a,), bw)


def _sigmoid_np(x: Array) -> Array:
    # overflow-safe in both tails
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_np(a.data)
    out = Tensor(s)

    def bw(g: Array):
        return (g * s * (1.0 - s),)

    return _record(out, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0))

    def bw(g: Array):
        return (g * mask,)

    return _record(out, (a,), bw)


def leaky_relu(a: Tensor, slope: float = LEAKY_RELU_SLOPE) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, slope * a.data))

    def bw(g: Array):
        return (g * np.where(mask, 1.0, slope),)

    return _record(out, (a,), bw)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi))
    inside = (a.data > lo) & (a.data < hi)

    def bw(g: Array):
        return (g * inside,)

    return _record(out, (a,), bw)


# --- reductions ---

def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))
    shape = a.data.shape

    def bw(g: Array):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _record(out, (a,), bw)


def mean(a: Tensor) -> Tensor:
    out = Tensor(a.data.mean())
    n = a.data.size
    shape = a.data.shape

    def bw(g: Array):
        return (np.broadcast_to(g / n, shape),)

    return _record(out, (a,), bw)


# --- structural ops ---

def take_cols(a: Tensor, idx: Array) -> Tensor:
    out = Tensor(a.data[..., idx])
    shape = a.data.shape

    def bw(g: Array):
        ga = np.zeros(shape)
        ga[..., idx] = g
        return (ga,)

    return _record(out, (a,), bw)


def put_cols(vals: Tensor, idx: Array, width: int) -> Tensor:
    data = np.zeros(vals.data.shape[:-1] + (width,))
    data[..., idx] = vals.data
    out = Tensor(data)

    def bw(g: Array):
        return (g[..., idx],)

    return _record(out, (vals,), bw)


def linear(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """x @ W.T + b for weights shaped [out, in]; x may be [in] or [N, in]."""
    xd, wd, bd = x.data, weights.data, bias.data
    if xd.ndim not in (1, 2) or xd.shape[-1] != wd.shape[1]:
        raise ShapeMismatch(
            f"input shape {xd.shape} incompatible with weights {wd.shape}")
    out = Tensor(xd @ wd.T + bd)

    def bw(g: Array):
        gx = g @ wd
        if xd.ndim == 1:
            return gx, np.outer(g, xd), g
        return gx, g.T @ xd, g.sum(axis=0)

    return _record(out, (x, weights, bias), bw)


def activate(x: Tensor, activation: Activation) -> Tensor:
    if activation is Activation.LINEAR:
        return x
    if activation is Activation.RELU:
        return relu(x)
    if activation is Activation.LEAKY_RELU:
        return leaky_relu(x)
    if activation is Activation.TANH:
        return tanh(x)
    if activation is Activation.SIGMOID:
        return sigmoid(x)
    raise ValueError(f"unknown activation {activation!r}")


def _activate_np(x: Array, activation: Activation) -> Array:
    if activation is Activation.LINEAR:
        return x
    if activation is Activation.RELU:
        return np.where(x > 0, x, 0.0)
    if activation is Activation.LEAKY_RELU:
        return np.where(x > 0, x, LEAKY_RELU_SLOPE * x)
    if activation is Activation.TANH:
        return np.tanh(x)
    if activation is Activation.SIGMOID:
        return _sigmoid_np(x)
    raise ValueError(f"unknown activation {activation!r}")


# --- losses ---

def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean of squared element differences."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mse shapes differ: {a.data.shape} vs {b.data.shape}")
    d = sub(a, b)
    return mean(mul(d, d))


def bce(pred: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7]."""
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(f"bce shapes differ: {pred.data.shape} vs {target.data.shape}")
    p = clamp(pred, 1e-7, 1.0 - 1e-7)
    t = target
    return neg(mean(t * log(p) + (1.0 - t) * log(1.0 - p)))


# --- layers ---

class DenseLayer:
    """One fully-connected layer: activation(W x + b) with W shaped [out, in]."""

    def __init__(self, weights: Tensor, bias: Tensor,
                 activation: Activation = Activation.LINEAR) -> None:
        wd, bd = weights.data, bias.data
        if wd.ndim != 2:
            raise ShapeMismatch(f"weights must be 2-D, got {wd.shape}")
        if bd.shape != (wd.shape[0],):
            raise ShapeMismatch(f"bias shape {bd.shape} does not match weights {wd.shape}")
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @classmethod
    def create(cls, rng: np.random.Generator, n_in: int, n_out: int,
               activation: Activation = Activation.LINEAR,
               zero_init: bool = False) -> "DenseLayer":
        if zero_init:
            w = np.zeros((n_out, n_in))
        else:
            limit = math.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
        return cls(Tensor(w), Tensor(np.zeros(n_out)), activation)

    @property
    def n_in(self) -> int:
        return self.weights.data.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.data.shape[0]

    @property
    def params(self) -> list[Tensor]:
        return [self.weights, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return forward(self, x)

    def eval_np(self, x: Array) -> Array:
        return _activate_np(x @ self.weights.data.T + self.bias.data, self.activation)


def forward(layer: DenseLayer, x: Tensor) -> Tensor:
    return activate(linear(x, layer.weights, layer.bias), layer.activation)


class MLP:
    """A stack of dense layers."""

    def __init__(self, layers: Sequence[DenseLayer]) -> None:
        self.layers = list(layers)

    @classmethod
    def create(cls, rng: np.random.Generator, widths: Sequence[int],
               hidden_activation: Activation, final_activation: Activation,
               zero_init_final: bool = False) -> "MLP":
        if len(widths) < 2:
            raise ShapeMismatch("an MLP needs at least two widths")
        layers = []
        for i in range(len(widths) - 1):
            last = i == len(widths) - 2
            layers.append(DenseLayer.create(
                rng, widths[i], widths[i + 1],
                final_activation if last else hidden_activation,
                zero_init=zero_init_final and last))
        return cls(layers)

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].n_in] + [lay.n_out for lay in self.layers]

    @property
    def params(self) -> list[Tensor]:
        out: list[Tensor] = []
        for layer in self.layers:
            out.extend(layer.params)
        return out

    def param_items(self, prefix: str) -> list[tuple[str, Tensor]]:
        items = []
        for i, layer in enumerate(self.layers):
            items.append((f"{prefix}{i}.W", layer.weights))
            items.append((f"{prefix}{i}.b", layer.bias))
        return items

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def forward_hidden(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Output plus the activation feeding the final layer (the feature tap)."""
        h = x
        for layer in self.layers[:-1]:
            h = layer(h)
        return self.layers[-1](h), h

    def eval_np(self, x: Array) -> Array:
        for layer in self.layers:
            x = layer.eval_np(x)
        return x

    def hidden_np(self, x: Array) -> Array:
        for layer in self.layers[:-1]:
            x = layer.eval_np(x)
        return x


# --- optimizer ---

class AdamState:
    """Adam moments for one parameter list; moments start at zero."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.001,
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8) -> None:
        if lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self._shapes = [p.data.shape for p in params]


def adam_step(state: AdamState, params: Sequence[Tensor],
              grads: Sequence[Array]) -> Sequence[Tensor]:
    """One bias-corrected Adam update, in place; returns the same params."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeMismatch("parameter/gradient count does not match optimizer state")
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.data.shape != state._shapes[i] or g.shape != state._shapes[i]:
            raise ShapeMismatch(f"parameter {i} shape changed under the optimizer")
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        gg = g * g
        gg *= 1.0 - state.beta2
        v += gg
        denom = np.asarray(v / bc2)
        np.sqrt(denom, out=denom)
        denom += state.eps
        step = np.asarray(m / denom)
        step *= state.lr / bc1
        p.data = p.data - step
    state.step_count = t
    return params


# --- training utilities ---

def minibatches(rng: np.random.Generator, n: int, batch_size: int) -> Iterator[Array]:
    """Shuffled index batches covering range(n) once."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def snapshot(params: Sequence[Tensor]) -> list[Array]:
    return [p.data.copy() for p in params]


def restore(params: Sequence[Tensor], saved: Sequence[Array]) -> None:
    for p, s in zip(params, saved):
        p.data = s.copy()


class EarlyStopper:
    """Tracks a held-out metric; stops after `patience` epochs without improvement."""

    def __init__(self, patience: int) -> None:
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, metric: float, epoch: int) -> bool:
        """Returns True when this epoch is a new best."""
        if metric < self.best:
            self.best = metric
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience
