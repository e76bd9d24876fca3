"""Weekly scenario sampling and hourly disaggregation by profile selection."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import _kernels
from .dataset import HOURS_PER_WEEK, ProfileStore
from .errors import ConfigError, SizeError, UsageError
from .latent import LatentPosteriorStore, select_profiles
from .vae import VaeModel, decode, model_hash, to_model_space, to_per_unit

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes for the hourly tensor


@dataclass
class WeekSample:
    weekly: np.ndarray   # [P]
    hourly: np.ndarray   # [168, P]
    profile_week: int
    clipped: np.ndarray  # [P] bool
    d2_min: float
    margin: float


@dataclass
class ScenarioSet:
    plant_ids: list
    weekly_values: np.ndarray    # [S, W, P]
    hourly_values: np.ndarray    # [S, W, 168, P]
    profile_indices: np.ndarray  # [S, W] historical week refs
    clipped: np.ndarray          # [S, W, P]
    d2_min: np.ndarray           # [S, W]
    margins: np.ndarray          # [S, W]
    seed: int

    @property
    def n_scenarios(self):
        return self.weekly_values.shape[0]

    @property
    def horizon_weeks(self):
        return self.weekly_values.shape[1]

    @property
    def clip_fraction(self):
        return float(self.clipped.mean())


def _check_compat(model: VaeModel, store: LatentPosteriorStore, profiles: ProfileStore):
    if store is None:
        raise ConfigError("model has no stored posteriors; train it first")
    if profiles.profiles.shape[1] != model.n_plants:
        raise ConfigError(
            f"profile store has {profiles.profiles.shape[1]} plants, model has {model.n_plants}"
        )
    if store.d_latent != model.d_latent:
        raise ConfigError("posterior store latent width differs from the model")
    if store.week_refs.max() >= profiles.profiles.shape[0] or store.week_refs.min() < 0:
        raise ConfigError("posterior week references fall outside the profile store")


def _weeks_from_eps(model, store, profiles, eps):
    # z' = eps: prior sample; weekly level from the decoder, profile from the nearest posterior
    weekly = to_per_unit(model, decode(model, eps))
    idx, refs, best, margin = select_profiles(store, eps)
    hourly, clipped = _kernels.disaggregate(weekly, profiles.profiles, refs)
    return weekly, hourly, refs, clipped, best, margin


def generate_week(model: VaeModel, store: LatentPosteriorStore, profiles: ProfileStore, rng,
                  eps=None) -> WeekSample:
    """One pass of the generation procedure for a single week.

    ``eps`` may be injected; otherwise it is drawn from ``rng``.
    """
    _check_compat(model, store, profiles)
    if eps is None:
        eps = rng.standard_normal(model.d_latent)
    eps = np.asarray(eps, dtype=np.float64).reshape(1, model.d_latent)
    weekly, hourly, refs, clipped, best, margin = _weeks_from_eps(model, store, profiles, eps)
    return WeekSample(weekly[0], hourly[0], int(refs[0]), clipped[0], float(best[0]), float(margin[0]))


def scenario_rng(seed, s):
    """Independent stream for scenario ``s``; unaffected by the scenario count."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s,)))


def generate_set(model: VaeModel, store: LatentPosteriorStore, profiles: ProfileStore,
                 n_scenarios, horizon_weeks, seed, memory_budget=DEFAULT_MEMORY_BUDGET) -> ScenarioSet:
    if n_scenarios < 1 or horizon_weeks < 1:
        raise UsageError("n_scenarios and horizon_weeks must be >= 1")
    _check_compat(model, store, profiles)
    p = model.n_plants
    need = n_scenarios * horizon_weeks * HOURS_PER_WEEK * p * 8
    if need > memory_budget:
        raise SizeError(
            f"hourly tensor needs {need / 2**20:.0f} MiB (budget {memory_budget / 2**20:.0f} MiB); "
            "generate fewer scenarios per call and stream them to disk"
        )
    S, W = n_scenarios, horizon_weeks
    weekly = np.empty((S, W, p))
    hourly = np.empty((S, W, HOURS_PER_WEEK, p))
    refs = np.empty((S, W), dtype=np.int64)
    clipped = np.empty((S, W, p), dtype=bool)
    d2 = np.empty((S, W))
    margins = np.empty((S, W))
    for s in range(S):
        eps = scenario_rng(seed, s).standard_normal((W, model.d_latent))
        (weekly[s], hourly[s], refs[s], clipped[s], d2[s], margins[s]) = _weeks_from_eps(
            model, store, profiles, eps
        )
    return ScenarioSet(list(model.plant_ids), weekly, hourly, refs, clipped, d2, margins, int(seed))


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def metadata(scen: ScenarioSet, model: VaeModel | None = None, extra=None):
    from . import __version__

    meta = {
        "package_version": __version__,
        "seed": scen.seed,
        "n_scenarios": scen.n_scenarios,
        "horizon_weeks": scen.horizon_weeks,
        "plant_ids": scen.plant_ids,
        "model_hash": model_hash(model) if model is not None else None,
        "profile_indices": scen.profile_indices.tolist(),
        "clip_count": int(scen.clipped.sum()),
        "clip_fraction": scen.clip_fraction,
        "clipped_by_plant": dict(zip(scen.plant_ids, scen.clipped.sum(axis=(0, 1)).tolist())),
        "selection": {
            "d2_min": scen.d2_min.tolist(),
            "margin": np.where(np.isfinite(scen.margins), scen.margins, -1.0).tolist(),
        },
    }
    if extra:
        meta.update(extra)
    return meta


def write_scenarios(scen: ScenarioSet, out_dir, model=None, extra=None, fmt="csv"):
    """Write ``hourly.csv`` / ``weekly.csv`` in long format plus ``metadata.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    S, W, H, P = scen.hourly_values.shape
    if fmt == "npz":
        np.savez_compressed(out / "scenarios.npz", weekly=scen.weekly_values,
                            hourly=scen.hourly_values, clipped=scen.clipped,
                            profile_indices=scen.profile_indices,
                            plant_ids=np.array(scen.plant_ids))
    elif fmt == "csv":
        s, w, h, p = np.indices((S, W, H, P)).reshape(4, -1)
        pd.DataFrame({
            "scenario": s, "week": w, "hour": h,
            "plant_id": np.array(scen.plant_ids)[p],
            "value": scen.hourly_values.reshape(-1),
        }).to_csv(out / "hourly.csv", index=False, float_format="%.17g")
        s, w, p = np.indices((S, W, P)).reshape(3, -1)
        pd.DataFrame({
            "scenario": s, "week": w,
            "plant_id": np.array(scen.plant_ids)[p],
            "value": scen.weekly_values.reshape(-1),
            "clipped": scen.clipped.reshape(-1).astype(int),
        }).to_csv(out / "weekly.csv", index=False, float_format="%.17g")
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    meta = metadata(scen, model, extra)
    meta["format"] = fmt
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=1)
    return out


def read_scenarios(path) -> ScenarioSet:
    """Load a directory written by :func:`write_scenarios`."""
    d = Path(path)
    meta_path = d / "metadata.json"
    if not meta_path.exists():
        raise ConfigError(f"no metadata.json in {d}")
    meta = json.loads(meta_path.read_text())
    ids = list(meta["plant_ids"])
    S, W, P = meta["n_scenarios"], meta["horizon_weeks"], len(ids)
    if meta.get("format") == "npz":
        z = np.load(d / "scenarios.npz")
        weekly, hourly, clipped = z["weekly"], z["hourly"], z["clipped"]
    else:
        order = {pid: j for j, pid in enumerate(ids)}
        wk = pd.read_csv(d / "weekly.csv", float_precision="round_trip")
        weekly = np.empty((S, W, P))
        clipped = np.zeros((S, W, P), dtype=bool)
        pj = wk["plant_id"].astype(str).map(order).to_numpy()
        weekly[wk["scenario"], wk["week"], pj] = wk["value"].to_numpy()
        clipped[wk["scenario"], wk["week"], pj] = wk["clipped"].to_numpy().astype(bool)
        hr = pd.read_csv(d / "hourly.csv", float_precision="round_trip")
        hourly = np.empty((S, W, HOURS_PER_WEEK, P))
        hourly[hr["scenario"], hr["week"], hr["hour"], hr["plant_id"].astype(str).map(order).to_numpy()] = hr["value"].to_numpy()
    refs = np.array(meta["profile_indices"], dtype=np.int64)
    sel = meta.get("selection", {})
    d2 = np.array(sel.get("d2_min", np.zeros((S, W))))
    margins = np.array(sel.get("margin", np.zeros((S, W))))
    return ScenarioSet(ids, weekly, hourly, refs, clipped, d2, margins, meta["seed"])
