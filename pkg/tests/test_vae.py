import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfvae import nn, rbf, vae
from rbfvae.dataset import WeeklyView
from rbfvae.errors import ConfigError, DimensionError, InsufficientDataError, NumericError, UsageError

IDS = ["a", "b", "c", "d"]


def toy(n=8, p=4, seed=0):
    return np.random.default_rng(seed).uniform(0.1, 0.9, size=(n, p))


def build(variant, x, cfg=None):
    cfg = cfg or vae.TrainConfig(d_latent=3, hidden=(5,), seed=2)
    layer = rbf.RbfLayer(x, 1.0) if variant != "pure" else None
    inv = None
    if variant == "rbf_explicit":
        rbf.precompute_features(layer, x)
        inv = rbf.train_inverse_net(layer, x, rbf.InverseNetConfig(epochs=5))
    return vae.build_model(variant, IDS[: x.shape[1]], cfg, layer, inv)


def zero_params(model):
    for v in model.trainable().values():
        v[...] = 0.0


# ---- loss --------------------------------------------------------------------

def test_loss_examples():
    x = np.full((1, 2), 0.3)
    assert vae.loss(x, x, np.zeros((1, 1)), np.zeros((1, 1)))[0] == 0.0
    assert abs(vae.loss(x, x, np.ones((1, 1)), np.zeros((1, 1)))[2] - 0.5) < 1e-12
    kl = vae.loss(x, x, np.zeros((1, 1)), np.ones((1, 1)))[2]
    assert abs(kl - (math.e - 2) / 2) < 1e-12 and abs(kl - 0.359141) < 1e-6


def test_loss_reductions():
    x = np.zeros((2, 2))
    x_hat = np.array([[1.0, 0.0], [0.0, 0.0]])
    mu = np.array([[1.0, 0.0], [0.0, 0.0]])
    total, recon, kl = vae.loss(x, x_hat, mu, np.zeros((2, 2)), kl_weight=0.1)
    assert recon == 0.25          # mean over 4 elements
    assert kl == 0.25             # batch mean of per-row sums (0.5 and 0)
    assert total == pytest.approx(0.275, abs=1e-15)


def test_loss_rejects_non_finite():
    x = np.zeros((1, 1))
    with pytest.raises(NumericError):
        vae.loss(x, np.array([[np.inf]]), x, x)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30), st.floats(-13.8, 5))
def test_kl_non_negative(mu, lv):
    assert vae.loss(np.zeros((1, 1)), np.zeros((1, 1)), np.array([[mu]]), np.array([[lv]]))[2] >= 0.0


# ---- forward pieces ------------------------------------------------------------

def test_reparameterize_examples():
    mu = np.array([[0.5, -1.0]])
    assert np.array_equal(vae.reparameterize(mu, np.array([[0.3, 2.0]]), np.zeros((1, 2))), mu)
    assert np.array_equal(vae.reparameterize(mu, np.zeros((1, 2)), np.ones((1, 2))), mu + 1)


def test_reparameterize_gradients_by_finite_differences():
    rng = np.random.default_rng(0)
    mu, lv, eps = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    h = 1e-6
    for j in range(3):
        d = np.zeros(3)
        d[j] = h
        g_mu = (vae.reparameterize(mu + d, lv, eps) - vae.reparameterize(mu - d, lv, eps)) / (2 * h)
        g_lv = (vae.reparameterize(mu, lv + d, eps) - vae.reparameterize(mu, lv - d, eps)) / (2 * h)
        np.testing.assert_allclose(g_mu, np.eye(3)[j], atol=1e-8)
        np.testing.assert_allclose(g_lv[j], 0.5 * np.exp(0.5 * lv[j]) * eps[j], rtol=1e-6)


def test_zero_encoder_gives_standard_posterior():
    model = build("pure", toy())
    zero_params(model)
    mu, lv = vae.encode(model, toy(5, seed=3))
    assert np.all(mu == 0.0) and np.all(lv == 0.0)


def test_zero_decoder_gives_half():
    for variant in ("pure", "rbf_implicit"):
        model = build(variant, toy())
        zero_params(model)
        assert np.all(vae.decode(model, np.random.default_rng(1).normal(size=(4, 3))) == 0.5)


def test_rbf_encoder_sees_unit_feature_at_center():
    x = toy()
    model = build("rbf_implicit", x)
    feats = vae._encoder_input(model, x[3:4])
    assert feats[0, 3] == 1.0


def test_encode_decode_deterministic_and_shapes():
    x = toy()
    for variant in vae.VARIANTS:
        model = build(variant, x)
        a, b = vae.encode(model, x), vae.encode(model, x)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        z = np.random.default_rng(2).normal(size=(6, 3))
        out = vae.decode(model, z)
        assert out.shape == (6, 4) and np.array_equal(out, vae.decode(model, z))
        assert np.all((out >= 0) & (out <= 1))
        with pytest.raises(DimensionError):
            vae.decode(model, np.zeros((1, 2)))
        with pytest.raises(DimensionError):
            vae.encode(model, np.zeros((1, 3)))


def test_encoder_widths_follow_variant():
    x = toy(12)
    assert build("pure", x).encoder[0].n_in == 4
    assert build("rbf_implicit", x).encoder[0].n_in == 12
    explicit = build("rbf_explicit", x)
    assert explicit.decoder[-1].n_out == 12 and explicit.inverse_net.n_out == 4


def test_logvar_floor():
    model = build("pure", toy())
    model.logvar_head.biases[:] = -100.0
    _, lv = vae.encode(model, toy())
    assert np.all(np.exp(lv) >= 1e-6 * (1 - 1e-12))


# ---- gradients -----------------------------------------------------------------

@pytest.mark.parametrize("variant", vae.VARIANTS)
def test_full_model_gradient_check(variant):
    x = toy()
    model = build(variant, x)
    eps = np.random.default_rng(5).normal(size=(8, 3))
    report = vae.grad_check_model(model, x, eps, kl_weight=0.7)
    assert report.passed, report.per_param
    assert report.max_rel_error < 1e-4


def test_floored_logvar_gets_no_gradient():
    x = toy()
    model = build("pure", x)
    model.logvar_head.biases[0] = -50.0
    _, grads = vae.loss_and_grads(model, x, x, np.ones((8, 3)), 1.0)
    assert grads["logvar0.b"][0] == 0.0


# ---- training ------------------------------------------------------------------

def views(n=40, p=3, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.2, 0.6, size=(n, 1))
    x = np.clip(base + rng.normal(scale=0.05, size=(n, p)), 0, 1)
    idx = np.arange(n)
    return WeeklyView(idx[: int(0.8 * n)], x[: int(0.8 * n)]), WeeklyView(idx[int(0.8 * n):], x[int(0.8 * n):])


def quick_cfg(**kw):
    base = dict(epochs=40, d_latent=2, hidden=(8,), seed=3, kl_weight=1e-2)
    base.update(kw)
    return vae.TrainConfig(**base)


@pytest.mark.parametrize("variant", vae.VARIANTS)
def test_training_reduces_loss_and_stores_posteriors(variant):
    tr, te = views()
    cfg = quick_cfg(inverse_epochs=20)
    model = vae.train(variant, tr, te, cfg)
    log = model.training_log
    assert log[-1]["train_loss"] < log[0]["train_loss"]
    assert len(model.posteriors) == len(tr)
    assert np.array_equal(model.posteriors.week_refs, tr.week_index)
    assert np.all(model.posteriors.variances >= 1e-6)


def test_training_is_bitwise_deterministic():
    tr, te = views()
    a = vae.train("rbf_implicit", tr, te, quick_cfg())
    b = vae.train("rbf_implicit", tr, te, quick_cfg())
    assert vae.model_hash(a) == vae.model_hash(b)


def test_kernel_evaluated_once_per_dataset():
    tr, te = views()
    model = vae.train("rbf_implicit", tr, te, quick_cfg(epochs=25))
    # one evaluation for the train cache, one for the test cache
    assert model.rbf_layer.n_evaluations == 2


def test_explicit_inverse_net_is_frozen():
    tr, te = views()
    cfg = quick_cfg()
    xtr = (tr.values - 0) / 1
    lo, hi = vae.fit_scaler(tr.values, cfg.scale_margin)
    xs = (tr.values - lo) / (hi - lo)
    layer = vae.make_rbf_layer(xs, cfg, rbf.gamma_grid(xs, (1.0,))[0])
    rbf.precompute_features(layer, xs)
    inv = rbf.train_inverse_net(layer, xs, rbf.InverseNetConfig(epochs=10))
    before = vae.params_hash(inv.stack)
    model = vae.train("rbf_explicit", tr, te, cfg, rbf_layer=layer, inverse_net=inv, scaler=(lo, hi))
    assert model.inverse_net is inv
    assert vae.params_hash(inv.stack) == before


def test_kl_weight_zero_reconstructs_no_worse():
    tr, te = views()
    plain = vae.train("pure", tr, te, quick_cfg(kl_weight=0.0, epochs=300, learning_rate=3e-3))
    reg = vae.train("pure", tr, te, quick_cfg(kl_weight=1.0, epochs=300, learning_rate=3e-3))
    assert plain.training_log[-1]["train_recon"] <= reg.training_log[-1]["train_recon"]


def test_test_mse_beats_constant_predictor(small_split):
    _, _, tr, te = small_split
    model = vae.train("pure", tr, te, quick_cfg(epochs=400, kl_weight=1e-3, d_latent=3, learning_rate=3e-3))
    x = vae.to_model_space(model, te.values)
    assert vae.test_mse(model, te) < np.mean((x - x.mean(axis=0)) ** 2)


def test_training_rejects_tiny_data():
    tr, te = views(n=4)
    with pytest.raises(InsufficientDataError):
        vae.train("pure", tr, te, quick_cfg())


def test_training_divergence_reports_losses():
    tr, te = views()
    with pytest.raises(NumericError):
        vae.train("pure", WeeklyView(tr.week_index, np.full_like(tr.values, np.nan)), te, quick_cfg())


@pytest.mark.parametrize("kw", [dict(epochs=0), dict(learning_rate=0), dict(kl_weight=-1),
                                dict(hidden=()), dict(gamma_grid=(0.0,))])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        vae.TrainConfig(**kw)


def test_variant_names():
    assert vae.normalize_variant("rbf-implicit") == "rbf_implicit"
    with pytest.raises(ConfigError):
        vae.normalize_variant("rbf")


# ---- scaling -------------------------------------------------------------------

def test_scaler_round_trip_and_bounds():
    x = np.array([[0.1, 0.5, 0.0], [0.3, 0.95, 0.0]])
    lo, hi = vae.fit_scaler(x, 0.1)
    np.testing.assert_allclose(lo, [0.08, 0.455, 0.0])
    np.testing.assert_allclose(hi, [0.32, 0.995, 1.0])
    model = build("pure", toy(p=3))
    model.scale_lo, model.scale_hi = lo, hi
    np.testing.assert_allclose(vae.to_per_unit(model, vae.to_model_space(model, x)), x, atol=1e-15)


# ---- selection -----------------------------------------------------------------

def test_rank_candidates_tie_breaks():
    M = vae.CandidateMetrics
    assert vae.rank_candidates([M(0.2, 1.0, 1.0), M(0.1, 0.0, 10.0)])[0] == 1
    assert vae.rank_candidates([M(0.1, 0.5, 1.0), M(0.1, 0.75, 10.0)])[0] == 1
    assert vae.rank_candidates([M(0.1, 0.5, 10.0), M(0.1, 0.5, 0.1)])[0] == 1


def test_select_model_single_and_empty():
    tr, te = views()
    m = vae.train("pure", tr, te, quick_cfg(epochs=5))
    chosen, report = vae.select_model([m], te)
    assert chosen is m and report["selected"] == 0
    with pytest.raises(UsageError):
        vae.select_model([], te)


def test_fit_runs_the_gamma_grid():
    tr, te = views()
    best, report = vae.fit("rbf_implicit", tr, te, quick_cfg(epochs=10, gamma_grid=(0.1, 1.0, 10.0)))
    assert len(report["candidates"]) == 3
    mses = [c["test_mse"] for c in report["candidates"]]
    assert report["selected"] == int(np.argmin(mses))


# ---- persistence ---------------------------------------------------------------

@pytest.mark.parametrize("variant", vae.VARIANTS)
def test_json_round_trip(tmp_path, variant):
    tr, te = views()
    model = vae.train(variant, tr, te, quick_cfg(epochs=5, inverse_epochs=5))
    path = tmp_path / "m.json"
    vae.save_model(model, path)
    back = vae.load_model(path)
    z = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(vae.decode(back, z), vae.decode(model, z))
    x = vae.to_model_space(model, te.values)
    assert np.array_equal(vae.encode(back, x)[0], vae.encode(model, x)[0])
    assert vae.model_hash(back) == vae.model_hash(model)
    doc = json.loads(path.read_text())
    assert doc["package_version"] and doc["config_hash"] and doc["seed"] == 3


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(ConfigError):
        vae.load_model(path)
