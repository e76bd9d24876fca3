"""Mahalanobis similarity in latent space and disaggregation-profile selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, UsageError

VAR_FLOOR = 1e-6


@dataclass
class LatentPosteriorStore:
    """Per-training-week posterior means and diagonal variances."""

    mus: np.ndarray        # [n_train, d]
    variances: np.ndarray  # [n_train, d], floored
    week_refs: np.ndarray  # original week indices

    def __post_init__(self):
        self.mus = np.ascontiguousarray(self.mus, dtype=np.float64)
        self.variances = np.maximum(np.asarray(self.variances, dtype=np.float64), VAR_FLOOR)
        self.week_refs = np.asarray(self.week_refs, dtype=np.int64)
        if self.mus.shape != self.variances.shape or self.mus.ndim != 2:
            raise DimensionError("mus and variances must be matrices of equal shape")
        if self.week_refs.shape != (self.mus.shape[0],):
            raise DimensionError("one week reference per posterior required")

    def __len__(self):
        return self.mus.shape[0]

    @property
    def d_latent(self):
        return self.mus.shape[1]

    def to_json(self):
        return {
            "mus": self.mus.tolist(),
            "variances": self.variances.tolist(),
            "week_refs": self.week_refs.tolist(),
        }

    @classmethod
    def from_json(cls, d):
        return cls(np.array(d["mus"]), np.array(d["variances"]), np.array(d["week_refs"]))


@dataclass
class Selection:
    index: int
    week_ref: int
    d2_min: float
    margin: float  # second-best D^2 minus best D^2 (inf with one posterior)


def mahalanobis_sq(z_prime, mu_n, var_n):
    """Squared Mahalanobis distance with a diagonal covariance."""
    z = np.asarray(z_prime, dtype=np.float64)
    mu = np.asarray(mu_n, dtype=np.float64)
    var = np.asarray(var_n, dtype=np.float64)
    if not (z.shape == mu.shape == var.shape):
        raise DimensionError(f"shapes differ: {z.shape}, {mu.shape}, {var.shape}")
    if np.any(var <= 0):
        raise ValueError("variances must be positive")
    diff = z - mu
    return float(np.sum(diff * diff / var))


def select_profiles(store: LatentPosteriorStore, z_batch):
    """Vectorised selection; returns (indices, week_refs, best D^2, margins)."""
    if len(store) == 0:
        raise UsageError("posterior store is empty")
    z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if z.shape[1] != store.d_latent:
        raise DimensionError(f"latent width {z.shape[1]} != {store.d_latent}")
    idx, best, second = _kernels.mahal_scan(z, store.mus, store.variances)
    return idx, store.week_refs[idx], best, second - best


def select_profile(store: LatentPosteriorStore, z_prime) -> Selection:
    """Index of the posterior closest to ``z_prime``; ties go to the lowest index."""
    idx, refs, best, margin = select_profiles(store, np.asarray(z_prime)[None, :])
    return Selection(int(idx[0]), int(refs[0]), float(best[0]), float(margin[0]))
