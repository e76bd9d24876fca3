import numpy as np
import pytest

from rbfvae import dataset as ds
from rbfvae import vae


def make_csv(path, values, start="2020-01-01T00:00:00", ids=None):
    values = np.asarray(values, dtype=float)
    ids = ids or [f"p{j}" for j in range(values.shape[1])]
    stamps = np.datetime64(start) + np.arange(values.shape[0]) * np.timedelta64(1, "h")
    with open(path, "w") as fh:
        fh.write("timestamp," + ",".join(ids) + "\n")
        for t, row in zip(stamps, values):
            fh.write(str(t) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return path


@pytest.fixture(scope="session")
def small_panel():
    return ds.synth_panel(ds.SynthSpec(n_plants=4, n_weeks=40, seed=3))


@pytest.fixture(scope="session")
def small_split(small_panel):
    weekly = ds.aggregate_weekly(small_panel)
    train, test = ds.split(weekly, ds.SplitSpec(0.8, 0))
    return small_panel, weekly, train, test


@pytest.fixture(scope="session")
def small_model(small_split):
    panel, weekly, train, test = small_split
    cfg = vae.TrainConfig(epochs=30, d_latent=3, hidden=(8,), kl_weight=1e-3, seed=1)
    model = vae.train("rbf_implicit", train, test, cfg, plant_ids=panel.plant_ids)
    profiles = ds.extract_profiles(panel, weekly)
    return model, profiles


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
