"""A small hand-differentiated dense network engine in double precision."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, UsageError

ACTIVATIONS = ("relu", "sigmoid", "identity")


def _sigmoid(a):
    # split on sign to avoid overflow in exp
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "sigmoid":
        return _sigmoid(a)
    if name == "identity":
        return a
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name, a, y):
    """Derivative of the activation at pre-activation ``a`` with output ``y``."""
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(a)


@dataclass
class DenseLayer:
    weights: np.ndarray  # [out, in]
    biases: np.ndarray   # [out]
    activation: str = "identity"
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"weights {self.weights.shape} and biases {self.biases.shape} disagree"
            )

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    @classmethod
    def glorot(cls, n_in, n_out, activation, rng):
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, (n_out, n_in)), np.zeros(n_out), activation)

    @classmethod
    def zeros(cls, n_in, n_out, activation):
        return cls(np.zeros((n_out, n_in)), np.zeros(n_out), activation)

    def copy(self):
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


def build_stack(widths, activations, rng):
    """Glorot-initialised stack; ``widths`` includes the input width."""
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    return [
        DenseLayer.glorot(widths[i], widths[i + 1], activations[i], rng)
        for i in range(len(activations))
    ]


@dataclass
class Cache:
    stack_id: tuple
    versions: tuple
    inputs: list   # layer inputs
    preacts: list
    outputs: list


def forward(stack, x):
    """Run ``x`` through the stack, keeping what :func:`backward` needs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-d batch, got shape {x.shape}")
    inputs, preacts, outputs = [], [], []
    h = x
    for i, layer in enumerate(stack):
        if h.shape[1] != layer.n_in:
            raise DimensionError(f"layer {i} expects width {layer.n_in}, got {h.shape[1]}")
        a = h @ layer.weights.T + layer.biases
        y = activate(layer.activation, a)
        inputs.append(h)
        preacts.append(a)
        outputs.append(y)
        h = y
    cache = Cache(tuple(id(l) for l in stack), tuple(l.version for l in stack), inputs, preacts, outputs)
    return h, cache


def backward(stack, cache, grad_out):
    """Return ([(dW, db), ...], d_input) for the cached forward pass."""
    if cache.stack_id != tuple(id(l) for l in stack) or cache.versions != tuple(l.version for l in stack):
        raise UsageError("cache does not belong to the current parameters of this stack")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.outputs[-1].shape:
        raise DimensionError(f"output gradient shape {g.shape} != {cache.outputs[-1].shape}")
    grads = [None] * len(stack)
    for i in range(len(stack) - 1, -1, -1):
        layer = stack[i]
        da = g * activation_grad(layer.activation, cache.preacts[i], cache.outputs[i])
        grads[i] = (da.T @ cache.inputs[i], da.sum(axis=0))
        g = da @ layer.weights
    return grads, g


def stack_params(stack, prefix="layer"):
    """Named view of the stack parameters (the arrays themselves, not copies)."""
    out = {}
    for i, layer in enumerate(stack):
        out[f"{prefix}{i}.W"] = layer.weights
        out[f"{prefix}{i}.b"] = layer.biases
    return out


def stack_grads(grads, prefix="layer"):
    out = {}
    for i, (dw, db) in enumerate(grads):
        out[f"{prefix}{i}.W"] = dw
        out[f"{prefix}{i}.b"] = db
    return out


def bump_versions(stack):
    for layer in stack:
        layer.version += 1


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update applied in place to the arrays in ``params``.

    ``params`` and ``grads`` are dicts keyed by parameter name.  Raises
    :class:`NumericError` naming the first parameter with a non-finite
    gradient, before anything is modified.
    """
    for name, g in grads.items():
        if name not in params:
            raise UsageError(f"gradient for unknown parameter {name}")
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    per_param: dict


def rel_error(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def grad_check(stack, loss_fn, x, tolerance=1e-4, h=1e-5, backward_fn=backward):
    """Compare analytic gradients with central finite differences.

    ``loss_fn(output) -> (loss, d_loss/d_output)``.  ``backward_fn`` is
    injectable so a faulty backward pass can be checked to fail.
    """
    out, cache = forward(stack, x)
    _, g = loss_fn(out)
    analytic = stack_grads(backward_fn(stack, cache, g)[0])
    params = stack_params(stack)
    per_param = {}
    worst = 0.0
    for name, p in params.items():
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss_fn(forward(stack, x)[0])[0]
            flat[k] = orig - h
            lm = loss_fn(forward(stack, x)[0])[0]
            flat[k] = orig
            num.reshape(-1)[k] = (lp - lm) / (2.0 * h)
        err = float(rel_error(analytic[name], num).max()) if p.size else 0.0
        per_param[name] = err
        worst = max(worst, err)
    return GradCheckReport(worst, worst < tolerance, per_param)


def to_json(stack):
    return [
        {
            "shape": list(l.weights.shape),
            "activation": l.activation,
            "weights": l.weights.reshape(-1).tolist(),
            "biases": l.biases.tolist(),
        }
        for l in stack
    ]


def from_json(items):
    return [
        DenseLayer(
            np.array(d["weights"], dtype=np.float64).reshape(d["shape"]),
            np.array(d["biases"], dtype=np.float64),
            d["activation"],
        )
        for d in items
    ]
