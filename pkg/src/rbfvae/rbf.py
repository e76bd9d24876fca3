"""RBF kernel feature layer, its training-time cache and the explicit inverse net."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import nn
from .errors import ConfigError, NumericError, StaleCacheError, TrainingError

GAMMA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
MAX_CENTERS = 512


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class RbfLayer:
    centers: np.ndarray  # [M, n_plants]
    gamma: float
    n_evaluations: int = field(default=0, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")

    @property
    def n_centers(self):
        return self.centers.shape[0]

    @property
    def n_plants(self):
        return self.centers.shape[1]

    def config_hash(self):
        return _digest(self.centers, np.array([self.gamma]))

    def to_json(self):
        return {
            "gamma": self.gamma,
            "centers": self.centers.tolist(),
            "config_hash": self.config_hash(),
        }

    @classmethod
    def from_json(cls, d):
        layer = cls(np.array(d["centers"], dtype=np.float64), float(d["gamma"]))
        if d.get("config_hash") and d["config_hash"] != layer.config_hash():
            raise StaleCacheError("rbf layer parameters do not match their stored hash")
        return layer


def rbf_features(layer: RbfLayer, x):
    """``exp(-gamma * ||x_b - c_i||^2)`` for every row of ``x`` and every center."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != layer.n_plants:
        raise ConfigError(f"input width {x.shape[1]} != {layer.n_plants} plants")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input to rbf layer")
    if not layer.gamma > 0:
        raise ConfigError("gamma must be positive")
    layer.n_evaluations += 1
    return _kernels.rbf(x, layer.centers, layer.gamma)


def precompute_features(layer: RbfLayer, data, key="train"):
    """Evaluate the kernel layer once for ``data`` and keep the result.

    The cache remembers the gamma/centers it was built with; reading it after
    either changed raises :class:`StaleCacheError`.
    """
    values = np.asarray(getattr(data, "values", data), dtype=np.float64)
    feats = rbf_features(layer, values)
    layer._cache[key] = (layer.config_hash(), _digest(values), feats)
    return feats


def cached_features(layer: RbfLayer, key="train", data=None):
    if key not in layer._cache:
        raise StaleCacheError(f"no precomputed features under {key!r}")
    cfg, data_hash, feats = layer._cache[key]
    if cfg != layer.config_hash():
        raise StaleCacheError("gamma or centers changed since the features were precomputed")
    if data is not None:
        values = np.asarray(getattr(data, "values", data), dtype=np.float64)
        if _digest(values) != data_hash:
            raise StaleCacheError(f"cached features under {key!r} belong to other data")
    return feats


def select_centers(train, cap=MAX_CENTERS, seed=0):
    values = np.asarray(getattr(train, "values", train), dtype=np.float64)
    if cap < 2:
        raise ConfigError("center cap must be >= 2")
    n = values.shape[0]
    if n <= cap:
        return values.copy()
    idx = np.random.default_rng(seed).choice(n, size=cap, replace=False)
    return values[np.sort(idx)].copy()


def median_sq_distance(values):
    """Median of the pairwise squared distances between distinct rows."""
    d2 = _kernels.sq_dists(values, values)
    iu = np.triu_indices(values.shape[0], k=1)
    med = float(np.median(d2[iu]))
    return med if med > 0 else 1.0


def gamma_grid(values, grid=GAMMA_GRID):
    """Scale-free gamma candidates: ``grid / median squared distance``."""
    med = median_sq_distance(values)
    return [g / med for g in grid]


# --------------------------------------------------------------------------
# explicit inverse network
# --------------------------------------------------------------------------

@dataclass
class InverseNetConfig:
    epochs: int = 300
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0


@dataclass
class InverseNet:
    stack: list
    final_loss: float
    epochs: int

    @property
    def n_out(self):
        return self.stack[-1].n_out

    def predict(self, feats):
        return nn.forward(self.stack, feats)[0]

    def to_json(self):
        return {"stack": nn.to_json(self.stack), "final_loss": self.final_loss, "epochs": self.epochs}

    @classmethod
    def from_json(cls, d):
        return cls(nn.from_json(d["stack"]), float(d["final_loss"]), int(d["epochs"]))


def train_inverse_net(layer: RbfLayer, train, config: InverseNetConfig | None = None) -> InverseNet:
    """Regress the original observations from their kernel features (MSE).

    Topology: M -> 2P (relu) -> 2P (relu) -> P (sigmoid).
    """
    config = config or InverseNetConfig()
    values = np.asarray(getattr(train, "values", train), dtype=np.float64)
    feats = cached_features(layer, "train", values)
    n, p = values.shape
    rng = np.random.default_rng(config.seed)
    stack = nn.build_stack(
        [layer.n_centers, 2 * p, 2 * p, p], ["relu", "relu", "sigmoid"], rng
    )
    params = nn.stack_params(stack)
    state = nn.AdamState(learning_rate=config.learning_rate)
    loss = np.inf
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out, cache = nn.forward(stack, feats[idx])
            diff = out - values[idx]
            grads, _ = nn.backward(stack, cache, 2.0 * diff / diff.size)
            nn.adam_step(params, nn.stack_grads(grads), state)
            nn.bump_versions(stack)
        loss = float(np.mean((nn.forward(stack, feats)[0] - values) ** 2))
        if not np.isfinite(loss):
            raise TrainingError(f"inverse net diverged at epoch {epoch + 1}")
    return InverseNet(stack, loss, config.epochs)
