"""Hourly generation panels, weekly aggregation and disaggregation profiles."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, GapError, InsufficientDataError, SchemaError

HOURS_PER_WEEK = 168
MEAN_FLOOR = 1e-6
KINDS = ("wind", "solar")


@dataclass
class HourlyPanel:
    plant_ids: list
    plant_kinds: list
    start_timestamp: str
    values: np.ndarray  # [n_hours, n_plants], per-unit

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.plant_ids):
            raise SchemaError(
                f"values shape {self.values.shape} does not match {len(self.plant_ids)} plants"
            )
        if len(set(self.plant_ids)) != len(self.plant_ids):
            raise SchemaError("plant ids must be unique")
        if len(self.plant_kinds) != len(self.plant_ids):
            raise SchemaError("one kind per plant required")
        bad = [k for k in self.plant_kinds if k not in KINDS]
        if bad:
            raise SchemaError(f"unknown plant kind {bad[0]!r}; expected one of {KINDS}")
        if self.values.shape[0] < HOURS_PER_WEEK:
            raise InsufficientDataError(
                f"{self.values.shape[0]} hours given, at least {HOURS_PER_WEEK} required"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite generation values")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise DataError("per-unit values must lie in [0, 1]")

    @property
    def n_hours(self):
        return self.values.shape[0]

    @property
    def n_plants(self):
        return self.values.shape[1]

    def timestamps(self):
        return pd.date_range(self.start_timestamp, periods=self.n_hours, freq="h")


@dataclass
class WeeklyPanel:
    week_index: np.ndarray  # 0-based consecutive labels
    values: np.ndarray      # [n_weeks, n_plants]
    source: HourlyPanel | None = None

    @property
    def n_weeks(self):
        return self.values.shape[0]

    @property
    def plant_ids(self):
        return self.source.plant_ids if self.source is not None else None


@dataclass
class WeeklyView:
    """A subset of weeks that keeps the original week labels."""

    week_index: np.ndarray
    values: np.ndarray

    def __len__(self):
        return self.values.shape[0]


@dataclass
class ProfileStore:
    profiles: np.ndarray  # [n_weeks, n_plants, 168]
    mean_floor: float = MEAN_FLOOR


@dataclass
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    train_indices: np.ndarray = field(default=None, repr=False)
    test_indices: np.ndarray = field(default=None, repr=False)


@dataclass
class SynthSpec:
    """Parameters of the synthetic wind/solar panel generator.

    The defaults are the frozen desk-scale dataset used by the acceptance
    suite.
    """

    n_plants: int = 16
    n_weeks: int = 520
    seed: int = 7
    solar_fraction: float = 0.375
    rho: float = 0.8
    seasonal_amplitude: float = 0.15
    factor_scale: float = 0.25
    start_timestamp: str = "2015-01-01T00:00:00"


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------

def read_capacity_file(path):
    """Read ``plant_id,capacity,kind`` rows into two dicts."""
    caps, kinds = {}, {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"plant_id", "capacity"} - set(reader.fieldnames or ())
        if missing:
            raise SchemaError(f"capacity file {path} lacks columns {sorted(missing)}")
        for row in reader:
            pid = row["plant_id"].strip()
            caps[pid] = float(row["capacity"])
            kind = (row.get("kind") or "").strip()
            if kind:
                kinds[pid] = kind
    return caps, kinds


def _infer_kind(col):
    # solar output is exactly zero for the night hours
    return "solar" if np.mean(col == 0.0) >= 0.25 else "wind"


def ingest_csv(path, capacity_map=None, kind_map=None) -> HourlyPanel:
    """Load ``timestamp,<plant_id>,...`` hourly data and convert it to per-unit.

    Values are divided by the declared capacity when ``capacity_map`` has an
    entry for the plant, otherwise by the observed maximum (1.0 for an
    all-zero column).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip().lower() != "timestamp":
        raise SchemaError("header must start with 'timestamp'")
    header = [h.strip() for h in rows[0]]
    plant_ids = header[1:]
    if not plant_ids:
        raise SchemaError("no plant columns in header")
    if len(set(plant_ids)) != len(plant_ids):
        raise SchemaError("duplicate plant ids in header")
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise SchemaError(
                f"row {i + 1} has {len(r) - 1} plant columns, header declares {len(plant_ids)}"
            )
    if not body:
        raise InsufficientDataError("no data rows")

    stamps = pd.to_datetime([r[0].strip() for r in body], utc=True)
    steps = np.diff(stamps.asi8) if len(stamps) > 1 else np.array([], dtype=np.int64)
    hour_ns = 3_600_000_000_000
    bad = np.flatnonzero(steps != hour_ns)
    if bad.size:
        # data rows are hours 1..n; the row after the first bad step is the offender
        raise GapError(int(bad[0]) + 2)

    raw = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise DataError("non-finite generation value")
    neg = np.argwhere(raw < 0)
    if neg.size:
        h, p = neg[0]
        raise DataError(f"negative generation at hour {h + 1}, plant {plant_ids[p]}")

    capacity_map = capacity_map or {}
    kind_map = kind_map or {}
    scale = np.empty(len(plant_ids))
    for j, pid in enumerate(plant_ids):
        if pid in capacity_map:
            cap = float(capacity_map[pid])
            if cap <= 0:
                raise ConfigError(f"capacity for {pid} must be positive")
            if raw[:, j].max() > cap:
                raise DataError(f"generation of {pid} exceeds declared capacity {cap}")
            scale[j] = cap
        else:
            peak = raw[:, j].max()
            scale[j] = peak if peak > 0 else 1.0
    values = raw / scale
    kinds = [kind_map.get(pid) or _infer_kind(values[:, j]) for j, pid in enumerate(plant_ids)]
    start = stamps[0].tz_convert(None).isoformat()
    return HourlyPanel(plant_ids, kinds, start, values)


def write_csv(panel: HourlyPanel, path):
    stamps = panel.timestamps().strftime("%Y-%m-%dT%H:%M:%S")
    frame = pd.DataFrame(panel.values, columns=panel.plant_ids)
    frame.insert(0, "timestamp", stamps)
    frame.to_csv(path, index=False, float_format="%.17g")


def write_capacity_file(panel: HourlyPanel, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["plant_id", "capacity", "kind"])
        for pid, kind in zip(panel.plant_ids, panel.plant_kinds):
            w.writerow([pid, 1.0, kind])


# --------------------------------------------------------------------------
# aggregation and profiles
# --------------------------------------------------------------------------

def aggregate_weekly(panel: HourlyPanel) -> WeeklyPanel:
    n_weeks = panel.n_hours // HOURS_PER_WEEK
    if n_weeks < 1:
        raise InsufficientDataError("need at least one full week of hourly data")
    blocks = panel.values[: n_weeks * HOURS_PER_WEEK].reshape(
        n_weeks, HOURS_PER_WEEK, panel.n_plants
    )
    return WeeklyPanel(np.arange(n_weeks), blocks.mean(axis=1), panel)


def extract_profiles(panel: HourlyPanel, weekly: WeeklyPanel, mean_floor=MEAN_FLOOR) -> ProfileStore:
    """Hourly-to-weekly-mean ratios; weeks below ``mean_floor`` get a flat profile."""
    n_weeks = weekly.n_weeks
    blocks = panel.values[: n_weeks * HOURS_PER_WEEK].reshape(
        n_weeks, HOURS_PER_WEEK, panel.n_plants
    ).transpose(0, 2, 1)
    means = weekly.values[:, :, None]
    ok = means >= mean_floor
    safe = np.where(ok, means, 1.0)
    profiles = np.where(ok, blocks / safe, 1.0)
    return ProfileStore(profiles, mean_floor)


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------

def split(weekly: WeeklyPanel, spec: SplitSpec):
    """Shuffle whole weeks and cut them into train and test views.

    At least one test week is always kept, so ``train_fraction`` close to 1
    on a short panel still yields a non-empty test set.
    """
    n = weekly.n_weeks
    if not 0.0 < spec.train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    if n < 2:
        raise InsufficientDataError("need at least 2 weeks to split")
    n_train = min(int(np.floor(spec.train_fraction * n)), n - 1)
    if n_train < 1:
        raise InsufficientDataError(f"train_fraction {spec.train_fraction} leaves no training weeks")
    perm = np.random.default_rng(spec.seed).permutation(n)
    spec.train_indices = np.sort(perm[:n_train])
    spec.test_indices = np.sort(perm[n_train:])
    train = WeeklyView(weekly.week_index[spec.train_indices], weekly.values[spec.train_indices])
    test = WeeklyView(weekly.week_index[spec.test_indices], weekly.values[spec.test_indices])
    return train, test


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

def _check_synth(spec: SynthSpec):
    if spec.n_plants < 2:
        raise ConfigError("n_plants must be >= 2")
    if spec.n_weeks < 8:
        raise ConfigError("n_weeks must be >= 8")
    if not 0.0 <= spec.solar_fraction <= 1.0:
        raise ConfigError("solar_fraction must lie in [0, 1]")
    if not 0.0 <= spec.rho <= 1.0:
        raise ConfigError("rho must lie in [0, 1]")
    if spec.seasonal_amplitude < 0 or spec.factor_scale < 0:
        raise ConfigError("amplitudes must be non-negative")


def solar_diurnal(hour_of_day):
    """Daylight bell between 06:00 and 18:00, exactly zero outside."""
    h = np.asarray(hour_of_day, dtype=np.float64)
    out = np.sin(np.pi * (h - 6.0) / 12.0)
    return np.where((h > 6.0) & (h < 18.0), out, 0.0)


def wind_diurnal(hour_of_day):
    """Mild daily cycle peaking around 02:00."""
    h = np.asarray(hour_of_day, dtype=np.float64)
    return 1.0 + 0.15 * np.cos(2.0 * np.pi * (h - 2.0) / 24.0)


def synth_panel(spec: SynthSpec) -> HourlyPanel:
    """Generate a reproducible panel of correlated wind and solar plants.

    Each plant is ``clip(level * seasonal * diurnal * (1 + f) * hourly_noise, 0, 1)``
    where ``f`` is a weekly one-factor shock: loading ``sqrt(rho)`` on a
    common factor plus ``sqrt(1 - rho)`` idiosyncratic noise, scaled by
    ``factor_scale``.  Solar plants load with the opposite sign and peak in
    the opposite season, which gives the panel both positive and negative
    pairwise correlations.
    """
    _check_synth(spec)
    rng = np.random.default_rng(spec.seed)
    P, W = spec.n_plants, spec.n_weeks
    n_solar = int(round(spec.solar_fraction * P))
    kinds = ["wind"] * (P - n_solar) + ["solar"] * n_solar
    is_solar = np.array([k == "solar" for k in kinds])
    ids = [f"{'S' if s else 'W'}{j:03d}" for j, s in enumerate(is_solar)]

    # plant-level constants
    level = np.where(is_solar, rng.uniform(0.55, 0.75, P), rng.uniform(0.3, 0.45, P))
    phase = rng.uniform(-0.2, 0.2, P) + np.where(is_solar, np.pi, 0.0)
    sign = np.where(is_solar, -1.0, 1.0)

    # weekly shocks
    week = np.arange(W)
    seasonal = 1.0 + spec.seasonal_amplitude * np.sin(
        2.0 * np.pi * week[:, None] / 52.0 + phase[None, :]
    )
    common = rng.standard_normal(W)
    idio = rng.standard_normal((W, P))
    shock = spec.factor_scale * (
        np.sqrt(spec.rho) * sign[None, :] * common[:, None] + np.sqrt(1.0 - spec.rho) * idio
    )
    weekly_level = level[None, :] * seasonal * np.clip(1.0 + shock, 0.1, None)  # [W, P]

    # hourly shape
    n_hours = W * HOURS_PER_WEEK
    hod = np.arange(n_hours) % 24
    diurnal = np.where(is_solar[None, :], solar_diurnal(hod)[:, None], wind_diurnal(hod)[:, None])
    # daily cloudiness for solar, AR(1) gusts for wind
    day_noise = np.repeat(rng.uniform(0.6, 1.0, (n_hours // 24, P)), 24, axis=0)
    eps = rng.standard_normal((n_hours, P)) * 0.2
    gust = np.empty_like(eps)
    gust[0] = eps[0]
    for t in range(1, n_hours):
        gust[t] = 0.9 * gust[t - 1] + np.sqrt(1 - 0.81) * eps[t]
    hourly_noise = np.where(is_solar[None, :], day_noise / 0.8, np.exp(gust - 0.02))

    values = np.repeat(weekly_level, HOURS_PER_WEEK, axis=0) * diurnal * hourly_noise
    values = np.clip(values, 0.0, 1.0)
    return HourlyPanel(ids, kinds, spec.start_timestamp, values)
