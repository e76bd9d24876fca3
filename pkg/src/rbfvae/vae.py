"""RBF-augmented VAE (implicit / explicit inverse decoder) and the pure-VAE baseline."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from . import rbf as rbf_mod
from .errors import ConfigError, DimensionError, InsufficientDataError, NumericError, TrainingError, UsageError
from .latent import VAR_FLOOR, LatentPosteriorStore

log = logging.getLogger(__name__)

VARIANTS = ("rbf_implicit", "rbf_explicit", "pure")
LOGVAR_FLOOR = float(np.log(VAR_FLOOR))
FORMAT_VERSION = 1

# named random streams derived from TrainConfig.seed
_INIT, _SHUFFLE, _EPS, _EVAL, _CENTERS, _INVERSE = range(6)


def normalize_variant(name):
    v = name.replace("-", "_")
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of rbf-implicit, rbf-explicit, pure")
    return v


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    kl_weight: float = 1.0
    d_latent: int = 8
    hidden: tuple = (64,)
    gamma_grid: tuple = rbf_mod.GAMMA_GRID
    patience: int = 50
    max_centers: int = rbf_mod.MAX_CENTERS
    inverse_epochs: int = 300
    scale_margin: float = 0.1
    restore_best: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.gamma_grid = tuple(float(g) for g in self.gamma_grid)
        for name in ("epochs", "batch_size", "d_latent", "patience", "max_centers", "inverse_epochs"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be >= 0")
        if not self.hidden or min(self.hidden) <= 0:
            raise ConfigError("hidden widths must be positive")
        if not self.gamma_grid or min(self.gamma_grid) <= 0:
            raise ConfigError("gamma grid values must be positive")
        if self.scale_margin < 0:
            raise ConfigError("scale_margin must be >= 0")

    def rng(self, stream):
        return np.random.default_rng([self.seed, stream])


@dataclass
class VaeModel:
    variant: str
    plant_ids: list
    encoder: list            # trunk, relu
    mu_head: nn.DenseLayer
    logvar_head: nn.DenseLayer
    decoder: list            # trainable decoder layers
    config: TrainConfig
    rbf_layer: rbf_mod.RbfLayer | None = None
    inverse_net: rbf_mod.InverseNet | None = None  # frozen tail of the explicit variant
    posteriors: LatentPosteriorStore | None = None
    training_log: list = field(default_factory=list)
    best_epoch: int = 0
    data_ref: dict = field(default_factory=dict)
    scale_lo: np.ndarray | None = None  # per-unit value mapped to 0 in model space
    scale_hi: np.ndarray | None = None  # per-unit value mapped to 1
    feat_shift: np.ndarray | None = None  # fixed standardisation of kernel features
    feat_scale: np.ndarray | None = None

    def __post_init__(self):
        p = len(self.plant_ids)
        self.scale_lo = np.zeros(p) if self.scale_lo is None else np.asarray(self.scale_lo, dtype=np.float64)
        self.scale_hi = np.ones(p) if self.scale_hi is None else np.asarray(self.scale_hi, dtype=np.float64)

    @property
    def d_latent(self):
        return self.mu_head.n_out

    @property
    def n_plants(self):
        return len(self.plant_ids)

    @property
    def gamma(self):
        return self.rbf_layer.gamma if self.rbf_layer is not None else None

    def trainable(self):
        """Named parameter arrays updated by the optimiser."""
        params = nn.stack_params(self.encoder, "enc")
        params.update(nn.stack_params([self.mu_head], "mu"))
        params.update(nn.stack_params([self.logvar_head], "logvar"))
        params.update(nn.stack_params(self.decoder, "dec"))
        return params

    def snapshot(self):
        return {k: v.copy() for k, v in self.trainable().items()}

    def restore(self, snap):
        for k, v in self.trainable().items():
            v[...] = snap[k]


# --------------------------------------------------------------------------
# per-plant scaling between per-unit values and model space
# --------------------------------------------------------------------------

def fit_scaler(values, margin=0.1):
    """Per-plant [lo, hi] from training data, widened by ``margin`` of the range.

    The network sees ``(x - lo) / (hi - lo)``; the bounds are kept inside
    [0, 1] so decoded values always map back to valid per-unit levels.
    """
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(axis=0), values.max(axis=0)
    span = hi - lo
    lo = np.maximum(lo - margin * span, 0.0)
    hi = np.minimum(hi + margin * span, 1.0)
    flat = hi - lo < 1e-9
    return np.where(flat, 0.0, lo), np.where(flat, 1.0, hi)


def to_model_space(model, x):
    return (np.asarray(x, dtype=np.float64) - model.scale_lo) / (model.scale_hi - model.scale_lo)


def to_per_unit(model, y):
    return model.scale_lo + (model.scale_hi - model.scale_lo) * np.asarray(y, dtype=np.float64)


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def build_model(variant, plant_ids, config: TrainConfig, rbf_layer=None, inverse_net=None):
    variant = normalize_variant(variant)
    p = len(plant_ids)
    if variant != "pure" and rbf_layer is None:
        raise ConfigError(f"variant {variant} needs an rbf layer")
    if variant == "rbf_explicit" and inverse_net is None:
        raise ConfigError("rbf_explicit needs a trained inverse net")
    if rbf_layer is not None and rbf_layer.n_plants != p:
        raise DimensionError("rbf centers do not match the plant count")
    rng = config.rng(_INIT)
    d = config.d_latent
    n_in = p if variant == "pure" else rbf_layer.n_centers
    widths = [n_in, *config.hidden]
    encoder = nn.build_stack(widths, ["relu"] * len(config.hidden), rng)
    mu_head = nn.DenseLayer.glorot(widths[-1], d, "identity", rng)
    logvar_head = nn.DenseLayer.glorot(widths[-1], d, "identity", rng)
    dec_hidden = [d, *reversed(config.hidden)]
    if variant == "pure":
        widths = dec_hidden + [p]
        acts = ["relu"] * len(config.hidden) + ["sigmoid"]
    elif variant == "rbf_implicit":
        # the extra 2P layers learn the kernel inverse implicitly
        widths = dec_hidden + [2 * p, 2 * p, p]
        acts = ["relu"] * (len(config.hidden) + 2) + ["sigmoid"]
    else:
        # decoder emits kernel-feature space, the frozen inverse net maps back
        if inverse_net.n_out != p:
            raise DimensionError("inverse net output width must equal the plant count")
        widths = dec_hidden + [rbf_layer.n_centers]
        acts = ["relu"] * len(config.hidden) + ["sigmoid"]
    decoder = nn.build_stack(widths, acts, rng)
    return VaeModel(variant, list(plant_ids), encoder, mu_head, logvar_head, decoder,
                    config, rbf_layer, inverse_net)


# --------------------------------------------------------------------------
# forward pieces
# --------------------------------------------------------------------------

def _encoder_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_plants:
        raise DimensionError(f"input width {x.shape[1]} != {model.n_plants} plants")
    if model.variant == "pure":
        return x
    return standardize_features(model, rbf_mod.rbf_features(model.rbf_layer, x))


def feature_stats(feats):
    """Column mean and std of training kernel features (std floored to 1 when flat)."""
    shift = feats.mean(axis=0)
    scale = feats.std(axis=0)
    return shift, np.where(scale > 1e-8, scale, 1.0)


def standardize_features(model, feats):
    if model.feat_shift is None:
        return feats
    return (feats - model.feat_shift) / model.feat_scale


def _encode_from(model, enc_in):
    h, c_trunk = nn.forward(model.encoder, enc_in)
    mu, c_mu = nn.forward([model.mu_head], h)
    raw_lv, c_lv = nn.forward([model.logvar_head], h)
    logvar = np.maximum(raw_lv, LOGVAR_FLOOR)
    return mu, logvar, (c_trunk, c_mu, c_lv, raw_lv)


def encode(model, x_batch):
    """Posterior mean and floored log-variance for each row of ``x_batch`` (model space)."""
    mu, logvar, _ = _encode_from(model, _encoder_input(model, x_batch))
    return mu, logvar


def reparameterize(mu, logvar, eps):
    return mu + np.exp(0.5 * logvar) * eps


def _decode_full(model, z):
    out, c_dec = nn.forward(model.decoder, z)
    c_inv = None
    if model.variant == "rbf_explicit":
        out, c_inv = nn.forward(model.inverse_net.stack, out)
    return out, (c_dec, c_inv)


def decode(model, z_batch):
    """Model-space reconstruction in [0, 1]; see :func:`to_per_unit`."""
    z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if z.shape[1] != model.d_latent:
        raise DimensionError(f"latent width {z.shape[1]} != {model.d_latent}")
    return _decode_full(model, z)[0]


def loss(x, x_hat, mu, logvar, kl_weight=1.0):
    """Return (total, recon, kl).

    recon is the mean squared error over batch and elements; kl is the
    batch mean of ``-0.5 * sum_j (1 + logvar - mu^2 - exp(logvar))``.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in (x, x_hat, mu, logvar)]
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise NumericError("non-finite input to the loss")
    x, x_hat, mu, logvar = arrays
    recon = float(np.mean((x - x_hat) ** 2))
    kl_rows = -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=-1)
    kl = float(np.mean(kl_rows))
    return recon + kl_weight * kl, recon, kl


def loss_and_grads(model, enc_in, x, eps, kl_weight):
    """Total loss and gradients for every trainable parameter.

    ``enc_in`` is the encoder input (kernel features or raw x), ``eps`` the
    injected standard-normal draw for the reparameterisation.
    """
    mu, logvar, (c_trunk, c_mu, c_lv, raw_lv) = _encode_from(model, enc_in)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    x_hat, (c_dec, c_inv) = _decode_full(model, z)
    total, recon, kl = loss(x, x_hat, mu, logvar, kl_weight)

    b = x.shape[0]
    g_out = 2.0 * (x_hat - x) / x.size
    grads = {}
    if c_inv is not None:
        _, g_out = nn.backward(model.inverse_net.stack, c_inv, g_out)  # frozen: drop param grads
    dec_grads, g_z = nn.backward(model.decoder, c_dec, g_out)
    grads.update(nn.stack_grads(dec_grads, "dec"))

    g_mu = g_z + kl_weight * mu / b
    g_lv = g_z * 0.5 * sigma * eps + kl_weight * (-0.5) * (1.0 - np.exp(logvar)) / b
    g_lv = np.where(raw_lv > LOGVAR_FLOOR, g_lv, 0.0)
    mu_grads, g_h1 = nn.backward([model.mu_head], c_mu, g_mu)
    lv_grads, g_h2 = nn.backward([model.logvar_head], c_lv, g_lv)
    grads.update(nn.stack_grads(mu_grads, "mu"))
    grads.update(nn.stack_grads(lv_grads, "logvar"))
    enc_grads, _ = nn.backward(model.encoder, c_trunk, g_h1 + g_h2)
    grads.update(nn.stack_grads(enc_grads, "enc"))
    return (total, recon, kl), grads


def grad_check_model(model, x, eps, kl_weight=1.0, h=1e-5, tolerance=1e-4):
    """Central finite differences of the total loss against :func:`loss_and_grads`.

    ``x`` is a model-space batch and ``eps`` the fixed reparameterisation draw.
    """
    enc_in = _encoder_input(model, x)
    _, analytic = loss_and_grads(model, enc_in, x, eps, kl_weight)
    per_param = {}
    worst = 0.0
    for name, p in model.trainable().items():
        flat = p.reshape(-1)
        num = np.empty_like(flat)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss_and_grads(model, enc_in, x, eps, kl_weight)[0][0]
            flat[k] = orig - h
            lm = loss_and_grads(model, enc_in, x, eps, kl_weight)[0][0]
            flat[k] = orig
            num[k] = (lp - lm) / (2.0 * h)
        err = float(nn.rel_error(analytic[name].reshape(-1), num).max())
        per_param[name] = err
        worst = max(worst, err)
    return nn.GradCheckReport(worst, worst < tolerance, per_param)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def _values(view):
    return np.asarray(getattr(view, "values", view), dtype=np.float64)


def make_rbf_layer(train, config: TrainConfig, gamma):
    centers = rbf_mod.select_centers(train, config.max_centers, seed=int(config.rng(_CENTERS).integers(2**63)))
    return rbf_mod.RbfLayer(centers, gamma)


def train(variant, train_view, test_view, config: TrainConfig | None = None, rbf_layer=None,
          inverse_net=None, plant_ids=None, gamma=None, scaler=None, epoch_callback=None) -> VaeModel:
    """Seeded mini-batch Adam training; returns the model at its best test-loss epoch.

    Views hold per-unit weekly values; the network is trained on their
    per-plant scaled version (``scaler`` = (lo, hi), fitted on the training
    weeks when omitted).  A supplied ``rbf_layer`` must have its centers in
    that scaled space.  For rbf variants the kernel features of the train and
    test weeks are computed once before the first epoch and read from the
    cache afterwards.
    """
    config = config or TrainConfig()
    variant = normalize_variant(variant)
    xtr, xte = _values(train_view), _values(test_view)
    if xtr.shape[0] < 4:
        raise InsufficientDataError(f"{xtr.shape[0]} training weeks, at least 4 required")
    if xte.shape[0] < 1:
        raise InsufficientDataError("empty test set")
    p = xtr.shape[1]
    plant_ids = list(plant_ids) if plant_ids is not None else [f"p{j}" for j in range(p)]
    lo, hi = scaler if scaler is not None else fit_scaler(xtr, config.scale_margin)
    xtr = (xtr - lo) / (hi - lo)
    xte = (xte - lo) / (hi - lo)

    if variant != "pure" and rbf_layer is None:
        if gamma is None:
            gamma = rbf_mod.gamma_grid(xtr, (1.0,))[0]
        rbf_layer = make_rbf_layer(xtr, config, gamma)
    if variant == "pure":
        rbf_layer = None
        ftr, fte = xtr, xte
    else:
        rbf_mod.precompute_features(rbf_layer, xtr, "train")
        rbf_mod.precompute_features(rbf_layer, xte, "test")
        ftr = rbf_mod.cached_features(rbf_layer, "train")
        fte = rbf_mod.cached_features(rbf_layer, "test")
    if variant == "rbf_explicit" and inverse_net is None:
        inverse_net = rbf_mod.train_inverse_net(
            rbf_layer, xtr,
            rbf_mod.InverseNetConfig(epochs=config.inverse_epochs, batch_size=config.batch_size,
                                     learning_rate=config.learning_rate,
                                     seed=int(config.rng(_INVERSE).integers(2**63))),
        )

    model = build_model(variant, plant_ids, config, rbf_layer, inverse_net)
    model.scale_lo, model.scale_hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    if variant != "pure":
        model.feat_shift, model.feat_scale = feature_stats(ftr)
    params = model.trainable()
    state = nn.AdamState(learning_rate=config.learning_rate)
    shuffle_rng = config.rng(_SHUFFLE)
    eps_rng = config.rng(_EPS)
    eval_eps = config.rng(_EVAL).standard_normal((xte.shape[0], config.d_latent))
    n = xtr.shape[0]
    best = (np.inf, 0, model.snapshot())
    stale = 0
    history = []
    for epoch in range(1, config.epochs + 1):
        if variant != "pure":
            ftr = standardize_features(model, rbf_mod.cached_features(rbf_layer, "train"))
            fte = standardize_features(model, rbf_mod.cached_features(rbf_layer, "test"))
        order = shuffle_rng.permutation(n)
        acc = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            eps = eps_rng.standard_normal((idx.size, config.d_latent))
            parts, grads = loss_and_grads(model, ftr[idx], xtr[idx], eps, config.kl_weight)
            if not np.isfinite(parts[0]):
                raise TrainingError(f"loss became non-finite at epoch {epoch}",
                                    [h["train_loss"] for h in history[-5:]])
            if parts[2] < -1e-12:
                raise NumericError(f"negative KL {parts[2]} at epoch {epoch}")
            nn.adam_step(params, grads, state)
            acc += np.array(parts) * idx.size
        acc /= n
        mu, lv, _ = _encode_from(model, fte)
        x_hat = decode(model, reparameterize(mu, lv, eval_eps))
        te = loss(xte, x_hat, mu, lv, config.kl_weight)
        rec = {
            "epoch": epoch,
            "train_loss": float(acc[0]), "train_recon": float(acc[1]), "train_kl": float(acc[2]),
            "test_loss": te[0], "test_recon": te[1], "test_kl": te[2],
        }
        history.append(rec)
        if epoch_callback is not None:
            epoch_callback(rec)
        if te[0] < best[0]:
            best = (te[0], epoch, model.snapshot())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if config.restore_best:
        model.restore(best[2])
        model.best_epoch = best[1]
    else:
        model.best_epoch = history[-1]["epoch"]
    model.training_log = history
    model.posteriors = compute_posteriors(model, ftr, train_view)
    return model


def compute_posteriors(model, enc_in, train_view):
    """Deterministic pass over the training weeks (no sampling)."""
    mu, logvar, _ = _encode_from(model, enc_in)
    refs = getattr(train_view, "week_index", np.arange(mu.shape[0]))
    return LatentPosteriorStore(mu, np.exp(logvar), refs)


def test_mse(model, test_view):
    """Model-space reconstruction MSE of per-unit test weeks through the posterior means."""
    x = to_model_space(model, _values(test_view))
    mu, _ = encode(model, x)
    return float(np.mean((decode(model, mu) - x) ** 2))


def prior_samples(model, n, seed):
    """Per-unit weekly vectors decoded from standard-normal latent draws."""
    z = np.random.default_rng(seed).standard_normal((n, model.d_latent))
    return to_per_unit(model, decode(model, z))


# --------------------------------------------------------------------------
# model selection over the gamma grid
# --------------------------------------------------------------------------

@dataclass
class CandidateMetrics:
    test_mse: float
    ks_pass_rate: float | None
    gamma: float | None


def rank_candidates(metrics):
    """Order: lowest test MSE, then highest KS pass rate, then lowest gamma."""
    def key(i):
        m = metrics[i]
        g = m.gamma if m.gamma is not None else -np.inf
        ks = m.ks_pass_rate if m.ks_pass_rate is not None else 0.0
        return (m.test_mse, -ks, g)
    return sorted(range(len(metrics)), key=key)


def candidate_metrics(model, test_view, n_samples=1000, seed=0, alpha=0.05):
    from .stats import ks_two_sample

    x = _values(test_view)
    if x.shape[0] < 5:
        # too few test weeks for a KS test; the tie-break is then inactive
        log.warning("only %d test weeks, KS tie-break disabled", x.shape[0])
        return CandidateMetrics(test_mse(model, test_view), None, model.gamma)
    gen = prior_samples(model, n_samples, seed)
    passes = [ks_two_sample(x[:, j], gen[:, j]).p_value > alpha for j in range(x.shape[1])]
    return CandidateMetrics(test_mse(model, test_view), float(np.mean(passes)), model.gamma)


def select_model(candidates, test_view, n_samples=1000, seed=0):
    """Pick the best trained candidate; returns (model, report)."""
    if not candidates:
        raise UsageError("no candidate models to select from")
    if len(candidates) == 1:
        m = candidate_metrics(candidates[0], test_view, n_samples, seed)
        return candidates[0], {"selected": 0, "candidates": [asdict(m)]}
    metrics = [candidate_metrics(c, test_view, n_samples, seed) for c in candidates]
    order = rank_candidates(metrics)
    return candidates[order[0]], {"selected": order[0], "candidates": [asdict(m) for m in metrics]}


def fit(variant, train_view, test_view, config: TrainConfig | None = None, plant_ids=None,
        epoch_callback=None):
    """Train one model per gamma on the grid (one model for ``pure``) and keep the best."""
    config = config or TrainConfig()
    variant = normalize_variant(variant)
    scaler = fit_scaler(_values(train_view), config.scale_margin)
    if variant == "pure":
        models = [train(variant, train_view, test_view, config, plant_ids=plant_ids,
                        scaler=scaler, epoch_callback=epoch_callback)]
    else:
        xtr = (_values(train_view) - scaler[0]) / (scaler[1] - scaler[0])
        models = []
        inverse_net = None
        for g in rbf_mod.gamma_grid(xtr, config.gamma_grid):
            layer = make_rbf_layer(xtr, config, g)
            if variant == "rbf_explicit":
                inverse_net = None  # the inverse depends on gamma
            models.append(train(variant, train_view, test_view, config, rbf_layer=layer,
                                inverse_net=inverse_net, plant_ids=plant_ids,
                                scaler=scaler, epoch_callback=epoch_callback))
    best, report = select_model(models, test_view, seed=config.seed)
    return best, report


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def _config_json(config):
    d = asdict(config)
    d["hidden"] = list(d["hidden"])
    d["gamma_grid"] = list(d["gamma_grid"])
    return d


def config_hash(config):
    return hashlib.sha256(json.dumps(_config_json(config), sort_keys=True).encode()).hexdigest()[:16]


def to_json(model: VaeModel):
    from . import __version__

    return {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "variant": model.variant,
        "plant_ids": model.plant_ids,
        "config": _config_json(model.config),
        "config_hash": config_hash(model.config),
        "seed": model.config.seed,
        "rbf_layer": model.rbf_layer.to_json() if model.rbf_layer is not None else None,
        "encoder": nn.to_json(model.encoder),
        "mu_head": nn.to_json([model.mu_head]),
        "logvar_head": nn.to_json([model.logvar_head]),
        "decoder": nn.to_json(model.decoder),
        "inverse_net": model.inverse_net.to_json() if model.inverse_net is not None else None,
        "posteriors": model.posteriors.to_json() if model.posteriors is not None else None,
        "training_log": model.training_log,
        "best_epoch": model.best_epoch,
        "data_ref": model.data_ref,
        "scale_lo": model.scale_lo.tolist(),
        "scale_hi": model.scale_hi.tolist(),
        "feat_shift": model.feat_shift.tolist() if model.feat_shift is not None else None,
        "feat_scale": model.feat_scale.tolist() if model.feat_scale is not None else None,
    }


def from_json(d) -> VaeModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format {d.get('format_version')}")
    cfg = TrainConfig(**d["config"])
    return VaeModel(
        variant=d["variant"],
        plant_ids=list(d["plant_ids"]),
        encoder=nn.from_json(d["encoder"]),
        mu_head=nn.from_json(d["mu_head"])[0],
        logvar_head=nn.from_json(d["logvar_head"])[0],
        decoder=nn.from_json(d["decoder"]),
        config=cfg,
        rbf_layer=rbf_mod.RbfLayer.from_json(d["rbf_layer"]) if d["rbf_layer"] else None,
        inverse_net=rbf_mod.InverseNet.from_json(d["inverse_net"]) if d["inverse_net"] else None,
        posteriors=LatentPosteriorStore.from_json(d["posteriors"]) if d["posteriors"] else None,
        training_log=d.get("training_log", []),
        best_epoch=d.get("best_epoch", 0),
        data_ref=d.get("data_ref", {}),
        scale_lo=np.array(d["scale_lo"]),
        scale_hi=np.array(d["scale_hi"]),
        feat_shift=np.array(d["feat_shift"]) if d.get("feat_shift") is not None else None,
        feat_scale=np.array(d["feat_scale"]) if d.get("feat_scale") is not None else None,
    )


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(to_json(model), fh)


def load_model(path):
    try:
        with open(path) as fh:
            return from_json(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}") from None


def model_hash(model):
    return hashlib.sha256(json.dumps(to_json(model), sort_keys=True).encode()).hexdigest()


def params_hash(stack):
    h = hashlib.sha256()
    for layer in stack:
        h.update(layer.weights.tobytes())
        h.update(layer.biases.tobytes())
    return h.hexdigest()


def clone(model):
    return copy.deepcopy(model)
