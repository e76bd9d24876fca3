"""Statistical comparison of generated scenarios against history."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError, DimensionError, UsageError

log = logging.getLogger(__name__)

QUANTILES = (0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99)
BASES = ("weekly", "hourly")


@dataclass
class KsResult:
    statistic: float
    p_value: float
    n_hist: int = 0
    n_gen: int = 0
    plant_id: str | None = None
    basis: str = "weekly"


def kolmogorov_pvalue(d, n, m):
    """Asymptotic two-sample p-value with the small-sample correction on lambda."""
    ne = n * m / (n + m)
    sq = math.sqrt(ne)
    lam = (sq + 0.12 + 0.11 / sq) * d
    if lam < 1e-3:
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < 1e-10:
            break
        k += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ks_two_sample(a, b) -> KsResult:
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size < 5 or b.size < 5:
        raise UsageError(f"KS test needs at least 5 values per sample, got {a.size} and {b.size}")
    d = _kernels.ks_stat(a, b)
    return KsResult(d, kolmogorov_pvalue(d, a.size, b.size), a.size, b.size)


# --------------------------------------------------------------------------
# basis handling
# --------------------------------------------------------------------------

def _as_matrix(values, n_plants):
    """Collapse every leading axis so plants end up in the last column."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape[-1] != n_plants:
        raise ConfigError(f"expected {n_plants} plants in the last axis, got {arr.shape[-1]}")
    return arr.reshape(-1, n_plants)


def _subsample(mat, cap, rng):
    if cap is None or mat.shape[0] <= cap:
        return mat
    idx = np.sort(rng.choice(mat.shape[0], size=cap, replace=False))
    return mat[idx]


@dataclass
class KsBattery:
    results: list
    alpha: float
    pass_rate: float
    pvalue_cdf: list  # [(sorted p, cumulative fraction)]

    def to_json(self):
        return {
            "alpha": self.alpha,
            "pass_rate": self.pass_rate,
            "results": [asdict(r) for r in self.results],
            "pvalue_cdf": [list(r) for r in self.pvalue_cdf],
        }


def ks_battery(hist, scen, plant_ids, hist_plant_ids=None, basis="weekly", alpha=0.05,
               subsample_cap=2000, seed=0) -> KsBattery:
    """Per-plant two-sample KS of history against pooled scenario values.

    ``hist`` is [n_obs, P] on the chosen basis; ``scen`` is any array whose
    last axis is the plant axis (e.g. [S, W, P] or [S, W, 168, P]).  On the
    hourly basis both sides are subsampled to ``subsample_cap`` rows.
    """
    if basis not in BASES:
        raise ConfigError(f"unknown basis {basis!r}")
    if hist_plant_ids is not None and list(hist_plant_ids) != list(plant_ids):
        raise ConfigError("historical and scenario plant sets differ")
    p = len(plant_ids)
    h = _as_matrix(hist, p)
    s = _as_matrix(scen, p)
    if basis == "hourly":
        rng = np.random.default_rng(seed)
        h = _subsample(h, subsample_cap, rng)
        s = _subsample(s, subsample_cap, rng)
    results = []
    for j, pid in enumerate(plant_ids):
        r = ks_two_sample(h[:, j], s[:, j])
        r.plant_id, r.basis = pid, basis
        results.append(r)
    pv = np.sort([r.p_value for r in results])
    cdf = [(float(v), (i + 1) / len(pv)) for i, v in enumerate(pv)]
    rate = float(np.mean([r.p_value > alpha for r in results]))
    return KsBattery(results, alpha, rate, cdf)


# --------------------------------------------------------------------------
# correlations
# --------------------------------------------------------------------------

@dataclass
class CorrReport:
    plant_ids: list
    hist_corr: np.ndarray
    gen_corr: np.ndarray
    pairs: list
    abs_errors: np.ndarray
    mae: float
    max_err: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    excluded: list = field(default_factory=list)

    def to_json(self):
        return {
            "plant_ids": self.plant_ids,
            "excluded": self.excluded,
            "mae": self.mae,
            "max_err": self.max_err,
            "hist_corr": self.hist_corr.tolist(),
            "gen_corr": self.gen_corr.tolist(),
            "histogram": {"edges": self.bin_edges.tolist(), "counts": self.histogram.tolist()},
        }


def pearson_matrix(mat):
    """Symmetric Pearson correlation matrix with an exact unit diagonal."""
    x = mat - mat.mean(axis=0)
    sd = np.sqrt(np.sum(x * x, axis=0))
    c = (x.T @ x) / np.outer(sd, sd)
    c = 0.5 * (c + c.T)
    np.clip(c, -1.0, 1.0, out=c)
    np.fill_diagonal(c, 1.0)
    return c


def corr_compare(hist, scen, plant_ids, bin_width=0.01) -> CorrReport:
    p = len(plant_ids)
    if p < 2:
        raise ConfigError("correlation comparison needs at least 2 plants")
    h = _as_matrix(hist, p)
    s = _as_matrix(scen, p)
    keep = (h.std(axis=0) > 0) & (s.std(axis=0) > 0)
    excluded = [pid for pid, k in zip(plant_ids, keep) if not k]
    if excluded:
        log.warning("excluding zero-variance plants from correlation: %s", ", ".join(excluded))
    if keep.sum() < 2:
        raise DataError("fewer than two plants with non-zero variance")
    ids = [pid for pid, k in zip(plant_ids, keep) if k]
    hc = pearson_matrix(h[:, keep])
    gc = pearson_matrix(s[:, keep])
    iu = np.triu_indices(len(ids), k=1)
    errs = np.abs(hc[iu] - gc[iu])
    pairs = [(ids[i], ids[j]) for i, j in zip(*iu)]
    edges = np.linspace(0.0, 1.0, int(round(1.0 / bin_width)) + 1)
    counts, _ = np.histogram(np.minimum(errs, 1.0), bins=edges)
    return CorrReport(ids, hc, gc, pairs, errs, float(errs.mean()), float(errs.max()),
                      counts, edges, excluded)


def xy_corr_table(hist_corr, gen_corr_a, gen_corr_b, plant_ids=None):
    """Rows of (plant_i, plant_j, historical r, variant-A r, variant-B r)."""
    hc, ga, gb = (np.asarray(m, dtype=np.float64) for m in (hist_corr, gen_corr_a, gen_corr_b))
    if not (hc.shape == ga.shape == gb.shape) or hc.ndim != 2 or hc.shape[0] != hc.shape[1]:
        raise DimensionError("correlation matrices must be square and of equal shape")
    n = hc.shape[0]
    ids = list(plant_ids) if plant_ids is not None else list(range(n))
    iu = np.triu_indices(n, k=1)
    return [(ids[i], ids[j], float(hc[i, j]), float(ga[i, j]), float(gb[i, j])) for i, j in zip(*iu)]


# --------------------------------------------------------------------------
# marginal densities
# --------------------------------------------------------------------------

@dataclass
class DensitySummary:
    plant_id: str
    bin_edges: np.ndarray
    hist_density: np.ndarray
    gen_density: np.ndarray
    quantiles: tuple
    hist_quantiles: np.ndarray
    gen_quantiles: np.ndarray

    def density_rows(self):
        for i in range(self.hist_density.size):
            yield (self.bin_edges[i], self.bin_edges[i + 1],
                   self.hist_density[i], self.gen_density[i])

    def quantile_rows(self):
        for q, a, b in zip(self.quantiles, self.hist_quantiles, self.gen_quantiles):
            yield (q, a, b)


def density_summary(hist, scen, plant_ids, plant_id, n_bins=50):
    """Aligned histograms (shared edges) and quantiles for one plant."""
    if plant_id not in plant_ids:
        raise KeyError(f"unknown plant {plant_id!r}")
    j = list(plant_ids).index(plant_id)
    p = len(plant_ids)
    a = _as_matrix(hist, p)[:, j]
    b = _as_matrix(scen, p)[:, j]
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        # degenerate: one spike bin containing every value
        edges = np.array([lo, lo + 1e-9]) if n_bins == 1 else np.linspace(lo, lo + 1e-9 * n_bins, n_bins + 1)
    else:
        edges = np.linspace(lo, hi, n_bins + 1)
    ha, _ = np.histogram(a, bins=edges, density=True)
    hb, _ = np.histogram(b, bins=edges, density=True)
    qs = np.array(QUANTILES)
    return DensitySummary(plant_id, edges, ha, hb, QUANTILES,
                          np.quantile(a, qs), np.quantile(b, qs))


def joint_sample_table(hist, scen, plant_ids, pair, cap=5000, seed=0):
    """Paired 2-d samples of two plants for external contour plotting."""
    p = len(plant_ids)
    i, j = (list(plant_ids).index(x) for x in pair)
    rng = np.random.default_rng(seed)
    h = _subsample(_as_matrix(hist, p), cap, rng)
    s = _subsample(_as_matrix(scen, p), cap, rng)
    rows = [("hist", a, b) for a, b in h[:, [i, j]]]
    rows += [("scen", a, b) for a, b in s[:, [i, j]]]
    return rows
