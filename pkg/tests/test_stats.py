import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfvae import stats
from rbfvae.errors import ConfigError, DataError, DimensionError, UsageError


def ecdf_sup(a, b):
    """Independent oracle: evaluate both ECDFs at every sample point."""
    best = 0.0
    for t in list(a) + list(b):
        fa = sum(1 for v in a if v <= t) / len(a)
        fb = sum(1 for v in b if v <= t) / len(b)
        best = max(best, abs(fa - fb))
    return best


def test_identical_samples():
    a = np.random.default_rng(0).normal(size=40)
    r = stats.ks_two_sample(a, a.copy())
    assert r.statistic == 0.0 and r.p_value == 1.0


def test_disjoint_supports():
    r = stats.ks_two_sample([1, 2, 3, 4, 5], [10, 20, 30, 40, 50])
    assert r.statistic == 1.0
    assert 0.0 <= r.p_value < 0.05


def test_too_small():
    with pytest.raises(UsageError):
        stats.ks_two_sample([1, 2, 3, 4], [1, 2, 3, 4, 5])


def test_statistic_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n, m = rng.integers(5, 21), rng.integers(5, 21)
        if rng.uniform() < 0.5:
            a, b = rng.integers(0, 5, n).astype(float), rng.integers(0, 5, m).astype(float)
        else:
            a, b = rng.normal(size=n), rng.normal(0.5, 1, size=m)
        assert stats.ks_two_sample(a, b).statistic == ecdf_sup(a, b)


def test_pvalue_series_oracle():
    # independent evaluation of the alternating series with many terms
    d, n, m = 0.2, 50, 80
    ne = n * m / (n + m)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d
    ref = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 200))
    assert abs(stats.kolmogorov_pvalue(d, n, m) - ref) < 1e-10


def test_pvalue_bounds():
    assert stats.kolmogorov_pvalue(0.0, 10, 10) == 1.0
    assert stats.kolmogorov_pvalue(1e-5, 10, 10) == 1.0
    assert 0.0 <= stats.kolmogorov_pvalue(1.0, 1000, 1000) < 1e-100


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(5, 3000), st.integers(5, 3000))
def test_pvalue_monotone_in_d(d1, d2, n, m):
    lo, hi = sorted((d1, d2))
    p_lo, p_hi = stats.kolmogorov_pvalue(lo, n, m), stats.kolmogorov_pvalue(hi, n, m)
    assert 0.0 <= p_hi <= p_lo <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ks_symmetry_and_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=rng.integers(5, 30)), rng.normal(size=rng.integers(5, 30))
    ab, ba = stats.ks_two_sample(a, b), stats.ks_two_sample(b, a)
    assert ab.statistic == ba.statistic and ab.p_value == ba.p_value
    t = stats.ks_two_sample(np.exp(a), np.exp(b))
    assert t.statistic == ab.statistic


# ---- battery -----------------------------------------------------------------

def test_battery_copy_of_history():
    rng = np.random.default_rng(2)
    hist = rng.uniform(size=(60, 4))
    scen = np.stack([hist, hist])        # two "scenarios" that replay history
    b = stats.ks_battery(hist, scen, ["a", "b", "c", "d"])
    assert b.pass_rate == 1.0 and all(r.p_value == 1.0 for r in b.results)
    assert [c[1] for c in b.pvalue_cdf] == [0.25, 0.5, 0.75, 1.0]


def test_battery_shift_fails():
    rng = np.random.default_rng(3)
    hist = rng.uniform(0, 0.5, size=(100, 3))
    b = stats.ks_battery(hist, hist + 0.3, ["a", "b", "c"])
    assert b.pass_rate == 0.0


def test_battery_hourly_subsampling_and_mismatch():
    rng = np.random.default_rng(4)
    hist = rng.uniform(size=(5000, 2))
    scen = rng.uniform(size=(3, 4, 168, 2))
    b = stats.ks_battery(hist, scen, ["a", "b"], basis="hourly", subsample_cap=500)
    assert all(r.n_hist == 500 and r.n_gen == 500 and r.basis == "hourly" for r in b.results)
    with pytest.raises(ConfigError):
        stats.ks_battery(hist, scen, ["a", "b"], hist_plant_ids=["a", "x"])
    with pytest.raises(ConfigError):
        stats.ks_battery(hist, scen, ["a", "b"], basis="daily")


# ---- correlation -------------------------------------------------------------

def test_corr_copy_is_exact():
    rng = np.random.default_rng(5)
    hist = rng.normal(size=(80, 5))
    r = stats.corr_compare(hist, hist.copy(), list("abcde"))
    assert r.mae == 0.0 and r.max_err == 0.0
    assert len(r.abs_errors) == 10 and r.histogram.sum() == 10
    assert np.allclose(np.diff(r.bin_edges), 0.01)


def test_corr_perfect_pair():
    x = np.linspace(0, 1, 30)
    hist = np.stack([x, 2 * x + 1], axis=1)
    r = stats.corr_compare(hist, hist[::-1] * 3, ["a", "b"])
    assert abs(r.hist_corr[0, 1] - 1.0) < 1e-12 and r.abs_errors[0] < 1e-12


def test_corr_excludes_zero_variance(caplog):
    rng = np.random.default_rng(6)
    hist = rng.normal(size=(40, 3))
    hist[:, 1] = 0.0
    with caplog.at_level("WARNING"):
        r = stats.corr_compare(hist, rng.normal(size=(40, 3)), ["a", "b", "c"])
    assert r.excluded == ["b"] and r.plant_ids == ["a", "c"]
    assert "b" in caplog.text
    with pytest.raises(DataError):
        stats.corr_compare(np.zeros((10, 2)), np.zeros((10, 2)), ["a", "b"])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(3, 40), st.integers(0, 2**32 - 1))
def test_pearson_matrix_properties(p, n, seed):
    x = np.random.default_rng(seed).normal(size=(n, p))
    c = stats.pearson_matrix(x)
    assert np.array_equal(c, c.T)
    assert np.all(np.diag(c) == 1.0)
    assert np.all(np.abs(c) <= 1.0 + 1e-12)
    np.testing.assert_allclose(c, np.corrcoef(x, rowvar=False), atol=1e-12)


def test_mae_and_max_definitions():
    rng = np.random.default_rng(7)
    r = stats.corr_compare(rng.normal(size=(50, 4)), rng.normal(size=(50, 4)), list("abcd"))
    assert r.mae == pytest.approx(np.mean(r.abs_errors), abs=0)
    assert r.max_err == np.max(r.abs_errors)


# ---- tables ------------------------------------------------------------------

def test_xy_table():
    c = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.5], [0.1, 0.5, 1.0]])
    rows = stats.xy_corr_table(c, c, c, ["a", "b", "c"])
    assert len(rows) == 3
    assert all(r[2] == r[3] == r[4] for r in rows)
    assert len(stats.xy_corr_table(np.eye(2), np.eye(2), np.eye(2))) == 1
    with pytest.raises(DimensionError):
        stats.xy_corr_table(np.eye(2), np.eye(3), np.eye(2))


def test_density_summary():
    rng = np.random.default_rng(8)
    hist = rng.uniform(size=(100, 2))
    s = stats.density_summary(hist, hist.copy(), ["a", "b"], "b", 20)
    assert np.array_equal(s.hist_density, s.gen_density)
    assert np.all(np.diff(s.hist_quantiles) >= 0)
    with pytest.raises(KeyError):
        stats.density_summary(hist, hist, ["a", "b"], "z")


def test_density_all_zero_plant():
    z = np.zeros((30, 1))
    s = stats.density_summary(z, z, ["a"], "a", 10)
    assert s.bin_edges[0] == 0.0
    assert s.hist_density[0] > 0 and np.all(s.hist_density[1:] == 0)
    assert np.array_equal(s.hist_density, s.gen_density)


def test_joint_sample_table():
    rng = np.random.default_rng(9)
    rows = stats.joint_sample_table(rng.uniform(size=(20, 3)), rng.uniform(size=(2, 5, 3)),
                                    ["a", "b", "c"], ("a", "c"))
    assert sum(r[0] == "hist" for r in rows) == 20 and sum(r[0] == "scen" for r in rows) == 10
