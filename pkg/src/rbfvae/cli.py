"""Command-line entry point: synth, prep, train, generate, validate, compare.

Every command accepts ``--config FILE`` (flat ``key = value`` lines, keys
named like the long flags with dashes or underscores) and flags override
file values.  Each run writes ``resolved_config.cfg`` and ``manifest.json``
next to its outputs; feeding the snapshot back with ``--config`` reproduces
the artifacts.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as ds
from . import scenario as sc
from . import stats
from . import vae
from .errors import ConfigError, DataError, RbfVaeError, UsageError

log = logging.getLogger("rbfvae")

OUTPUT_ROOT_ENV = "RBFVAE_OUTPUT_ROOT"
SNAPSHOT = "resolved_config.cfg"
MANIFEST = "manifest.json"
# options that never go into the snapshot
_NOT_SNAPSHOT = {"command", "config", "verbose"}


def output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or "rbfvae_out")


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _ints(text):
    try:
        return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--out", help="output directory (default: $%s/<command>)" % OUTPUT_ROOT_ENV)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads; 1 is bitwise deterministic")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p):
    p.add_argument("--data", help="hourly CSV (timestamp,<plant>,...)")
    p.add_argument("--capacity", help="plant_id,capacity[,kind] file; defaults to capacity.csv beside --data")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=0)


def _train_args(p):
    d = vae.TrainConfig()
    p.add_argument("--variant", default="rbf-implicit", help="rbf-implicit, rbf-explicit or pure")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--kl-weight", type=float, default=d.kl_weight)
    p.add_argument("--d-latent", type=int, default=d.d_latent)
    p.add_argument("--hidden", type=_ints, default=",".join(map(str, d.hidden)))
    p.add_argument("--gamma-grid", type=_floats, default=",".join(map(repr, d.gamma_grid)),
                   help="multipliers of 1/median pairwise squared distance")
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--max-centers", type=int, default=d.max_centers)
    p.add_argument("--inverse-epochs", type=int, default=d.inverse_epochs)
    p.add_argument("--scale-margin", type=float, default=d.scale_margin)
    p.add_argument("--restore-best", type=_bool, default=str(d.restore_best))
    p.add_argument("--prepared", help="prepared.npz from the prep command (instead of --data)")


def _gen_args(p, models):
    for m in models:
        p.add_argument(f"--{m}", help="model.json")
    p.add_argument("--prepared", help="prepared.npz holding the profile store (default: beside the model)")
    p.add_argument("--scenarios", type=int, default=200)
    p.add_argument("--weeks", type=int, default=52)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="rbfvae", description="RBF-kernel VAE scenario generator for wind and solar plants.")
    parser.add_argument("--version", action="version", version=f"rbfvae {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic hourly panel")
    _common(p)
    d = ds.SynthSpec()
    p.add_argument("--plants", type=int, default=d.n_plants)
    p.add_argument("--weeks", type=int, default=d.n_weeks)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--solar-fraction", type=float, default=d.solar_fraction)
    p.add_argument("--rho", type=float, default=d.rho)
    p.add_argument("--seasonal-amplitude", type=float, default=d.seasonal_amplitude)
    p.add_argument("--factor-scale", type=float, default=d.factor_scale)
    p.add_argument("--start", default=d.start_timestamp)

    p = sub.add_parser("prep", help="aggregate, extract profiles and split")
    _common(p)
    _data_args(p)

    p = sub.add_parser("train", help="train one variant (gamma search for rbf variants)")
    _common(p)
    _data_args(p)
    _train_args(p)

    p = sub.add_parser("generate", help="sample hourly scenarios from a trained model")
    _common(p)
    _gen_args(p, ["model"])
    p.add_argument("--format", default="csv", choices=("csv", "npz"))

    p = sub.add_parser("validate", help="compare scenarios with history")
    _common(p)
    p.add_argument("--hist", help="historical hourly CSV")
    p.add_argument("--capacity")
    p.add_argument("--scen", help="scenario directory written by generate")
    p.add_argument("--basis", default="weekly", choices=stats.BASES)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--subsample-cap", type=int, default=2000)
    p.add_argument("--bins", type=int, default=50)

    p = sub.add_parser("compare", help="paired KS and correlation comparison of two models")
    _common(p)
    _gen_args(p, ["model-a", "model-b"])
    p.add_argument("--alpha", type=float, default=0.05)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config_file(path):
    """Flat ``key = value`` file (``#`` comments) -> dict with underscore keys."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string("[run]\n" + path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}".replace("\n", " ")) from None
    return {k.replace("-", "_"): v for k, v in cp["run"].items()}


def parse_args(argv):
    """Parse flags, layering ``--config`` values under explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"command"})
        if unknown:
            raise ConfigError(f"unknown keys in {args.config}: {', '.join(unknown)}")
        if values.get("command", args.command) != args.command:
            raise ConfigError(f"{args.config} is a snapshot of '{values['command']}', not '{args.command}'")
        values.pop("command", None)
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def resolved(args):
    out = {"command": args.command}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_SNAPSHOT:
            continue
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        out[k] = "" if v is None else str(v)
    return out


def config_hash(res):
    text = "\n".join(f"{k}={v}" for k, v in res.items())
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_snapshot(out_dir, res):
    with open(Path(out_dir) / SNAPSHOT, "w") as fh:
        fh.write(f"# rbfvae {__version__} resolved configuration\n")
        for k, v in res.items():
            fh.write(f"{k} = {v}\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, res, files):
    out = Path(out_dir)
    entries = {f: _sha256(out / f) for f in sorted(files)}
    doc = {"package_version": __version__, "command": res["command"],
           "config_hash": config_hash(res), "artifacts": entries}
    with open(out / MANIFEST, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _stamp(res):
    return {"package_version": __version__, "config_hash": config_hash(res)}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _out_dir(args):
    out = Path(args.out) if args.out else output_root() / args.command
    args.out = str(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# shared data loading
# --------------------------------------------------------------------------

def _capacity_for(data_path, capacity):
    if capacity:
        if not Path(capacity).exists():
            raise ConfigError(f"capacity file not found: {capacity}")
        return capacity
    beside = Path(data_path).parent / "capacity.csv"
    return str(beside) if beside.exists() else None


def load_panel(data_path, capacity=None):
    cap_path = _capacity_for(data_path, capacity)
    caps, kinds = ds.read_capacity_file(cap_path) if cap_path else ({}, {})
    return ds.ingest_csv(data_path, caps, kinds), cap_path


def data_hash(plant_ids, weekly, train_idx, test_idx):
    h = hashlib.sha256()
    h.update(json.dumps(list(plant_ids)).encode())
    for a in (weekly, train_idx, test_idx):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def prepare(data_path, capacity, train_fraction, split_seed):
    """Ingest, aggregate, extract profiles and split; returns a dict of arrays."""
    panel, cap_path = load_panel(data_path, capacity)
    weekly = ds.aggregate_weekly(panel)
    profiles = ds.extract_profiles(panel, weekly)
    spec = ds.SplitSpec(train_fraction, split_seed)
    ds.split(weekly, spec)
    return {
        "plant_ids": np.array(panel.plant_ids),
        "plant_kinds": np.array(panel.plant_kinds),
        "week_index": weekly.week_index,
        "weekly": weekly.values,
        "profiles": profiles.profiles,
        "mean_floor": np.float64(profiles.mean_floor),
        "train_indices": spec.train_indices,
        "test_indices": spec.test_indices,
        "data_hash": np.array(data_hash(panel.plant_ids, weekly.values,
                                        spec.train_indices, spec.test_indices)),
    }


def save_prepared(path, prep):
    np.savez(path, **prep)


def load_prepared(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"prepared file not found: {path}")
    with np.load(path) as z:
        prep = {k: z[k] for k in z.files}
    prep["plant_ids"] = [str(p) for p in prep["plant_ids"]]
    prep["data_hash"] = str(prep["data_hash"])
    return prep


def views(prep):
    w, idx = prep["weekly"], prep["week_index"]
    tr, te = prep["train_indices"], prep["test_indices"]
    return ds.WeeklyView(idx[tr], w[tr]), ds.WeeklyView(idx[te], w[te])


def _default_data(args):
    if not args.data:
        args.data = str(output_root() / "synth" / "data.csv")
        log.info("no --data given, using %s", args.data)
    return args.data


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args):
    out = _out_dir(args)
    spec = ds.SynthSpec(args.plants, args.weeks, args.seed, args.solar_fraction, args.rho,
                        args.seasonal_amplitude, args.factor_scale, args.start)
    panel = ds.synth_panel(spec)
    ds.write_csv(panel, out / "data.csv")
    ds.write_capacity_file(panel, out / "capacity.csv")
    res = resolved(args)
    write_snapshot(out, res)
    write_manifest(out, res, ["data.csv", "capacity.csv", SNAPSHOT])
    return 0


def cmd_prep(args):
    prep = prepare(_default_data(args), args.capacity, args.train_fraction, args.split_seed)
    out = _out_dir(args)
    save_prepared(out / "prepared.npz", prep)
    res = resolved(args)
    _write_json(out / "prep.json", {
        **_stamp(res),
        "data_hash": str(prep["data_hash"]),
        "plant_ids": list(map(str, prep["plant_ids"])),
        "plant_kinds": list(map(str, prep["plant_kinds"])),
        "n_weeks": int(prep["weekly"].shape[0]),
        "n_train": int(prep["train_indices"].size),
        "n_test": int(prep["test_indices"].size),
    })
    write_snapshot(out, res)
    write_manifest(out, res, ["prepared.npz", "prep.json", SNAPSHOT])
    return 0


def train_config(args):
    return vae.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.learning_rate,
        seed=args.seed, kl_weight=args.kl_weight, d_latent=args.d_latent, hidden=args.hidden,
        gamma_grid=args.gamma_grid, patience=args.patience, max_centers=args.max_centers,
        inverse_epochs=args.inverse_epochs, scale_margin=args.scale_margin,
        restore_best=args.restore_best,
    )


LOG_FIELDS = ("candidate", "gamma", "epoch", "train_loss", "train_recon", "train_kl",
              "test_loss", "test_recon", "test_kl")


def cmd_train(args):
    config = train_config(args)
    variant = vae.normalize_variant(args.variant)
    if args.prepared:
        prep = load_prepared(args.prepared)
    else:
        prep = prepare(_default_data(args), args.capacity, args.train_fraction, args.split_seed)
        prep["plant_ids"] = [str(p) for p in prep["plant_ids"]]
        prep["data_hash"] = str(prep["data_hash"])
    out = _out_dir(args)
    train_view, test_view = views(prep)

    rows = []
    state = {"candidate": -1}

    def on_epoch(rec):
        if rec["epoch"] == 1:
            state["candidate"] += 1
        rows.append((state["candidate"], rec))
        log.debug("epoch %d test_loss %.6g", rec["epoch"], rec["test_loss"])

    model, report = vae.fit(variant, train_view, test_view, config, prep["plant_ids"],
                            epoch_callback=on_epoch)
    res = resolved(args)
    model.data_ref = {"data_hash": prep["data_hash"], **_stamp(res)}
    vae.save_model(model, out / "model.json")
    gammas = [c["gamma"] for c in report["candidates"]]
    _write_rows(out / "training_log.csv", LOG_FIELDS, [
        (c, "" if gammas[c] is None else gammas[c], r["epoch"], *(r[k] for k in LOG_FIELDS[3:]))
        for c, r in rows
    ])
    _write_json(out / "selection.json", {**_stamp(res), "variant": variant, **report,
                                         "best_epoch": model.best_epoch})
    files = ["model.json", "training_log.csv", "selection.json", SNAPSHOT]
    if not args.prepared:
        save_prepared(out / "prepared.npz", {**prep, "plant_ids": np.array(prep["plant_ids"]),
                                             "data_hash": np.array(prep["data_hash"])})
        files.append("prepared.npz")
    write_snapshot(out, res)
    write_manifest(out, res, files)
    return 0


def _load_for_generation(model_path, prepared_path):
    model = vae.load_model(model_path)
    prepared_path = prepared_path or str(Path(model_path).parent / "prepared.npz")
    prep = load_prepared(prepared_path)
    want = model.data_ref.get("data_hash")
    if want and want != prep["data_hash"]:
        raise ConfigError(f"{prepared_path} does not match the data the model was trained on")
    if list(prep["plant_ids"]) != list(model.plant_ids):
        raise ConfigError("prepared plant ids differ from the model's")
    profiles = ds.ProfileStore(prep["profiles"], float(prep["mean_floor"]))
    return model, prep, profiles


def cmd_generate(args):
    args.model = args.model or str(output_root() / "train" / "model.json")
    model, _, profiles = _load_for_generation(args.model, args.prepared)
    out = _out_dir(args)
    scen = sc.generate_set(model, model.posteriors, profiles, args.scenarios, args.weeks, args.seed)
    res = resolved(args)
    sc.write_scenarios(scen, out, model, extra=_stamp(res), fmt=args.format)
    write_snapshot(out, res)
    data = ["scenarios.npz"] if args.format == "npz" else ["hourly.csv", "weekly.csv"]
    write_manifest(out, res, data + ["metadata.json", SNAPSHOT])
    return 0


def _hist_weekly(hist_path, capacity):
    panel, _ = load_panel(hist_path, capacity)
    return panel, ds.aggregate_weekly(panel)


def cmd_validate(args):
    args.hist = args.hist or str(output_root() / "synth" / "data.csv")
    args.scen = args.scen or str(output_root() / "generate")
    panel, weekly = _hist_weekly(args.hist, args.capacity)
    scen = sc.read_scenarios(args.scen)
    out = _out_dir(args)
    if list(panel.plant_ids) != list(scen.plant_ids):
        raise ConfigError("historical and scenario plant sets differ")
    ids = scen.plant_ids
    if args.basis == "weekly":
        hist_vals, gen_vals = weekly.values, scen.weekly_values
    else:
        hist_vals, gen_vals = panel.values, scen.hourly_values
    battery = stats.ks_battery(hist_vals, gen_vals, ids, basis=args.basis, alpha=args.alpha,
                               subsample_cap=args.subsample_cap, seed=scen.seed)
    corr = stats.corr_compare(weekly.values, scen.weekly_values, ids)
    res = resolved(args)
    _write_json(out / "report.json", {
        **_stamp(res),
        "basis": args.basis,
        "n_scenarios": scen.n_scenarios,
        "horizon_weeks": scen.horizon_weeks,
        "clip_fraction": scen.clip_fraction,
        "ks": battery.to_json(),
        "correlation": corr.to_json(),
    })
    files = ["report.json", SNAPSHOT]
    _write_rows(out / "pvalue_cdf.csv", ("p_value", "cumulative_fraction"), battery.pvalue_cdf)
    _write_rows(out / "ks_results.csv", ("plant_id", "statistic", "p_value", "n_hist", "n_gen"),
                [(r.plant_id, r.statistic, r.p_value, r.n_hist, r.n_gen) for r in battery.results])
    e = corr.bin_edges
    _write_rows(out / "corr_error_hist.csv", ("lo", "hi", "count"),
                [(float(e[i]), float(e[i + 1]), int(c)) for i, c in enumerate(corr.histogram)])
    dens, quant = [], []
    for pid in ids:
        s = stats.density_summary(hist_vals, gen_vals, ids, pid, args.bins)
        dens += [(pid, *map(float, r)) for r in s.density_rows()]
        quant += [(pid, *map(float, r)) for r in s.quantile_rows()]
    _write_rows(out / "densities.csv", ("plant_id", "lo", "hi", "hist_density", "gen_density"), dens)
    _write_rows(out / "quantiles.csv", ("plant_id", "q", "hist", "gen"), quant)
    files += ["pvalue_cdf.csv", "ks_results.csv", "corr_error_hist.csv", "densities.csv", "quantiles.csv"]
    if len(ids) >= 2:
        rows = stats.joint_sample_table(weekly.values, scen.weekly_values, ids, (ids[0], ids[1]),
                                        seed=scen.seed)
        _write_rows(out / "joint_samples.csv", ("source", ids[0], ids[1]),
                    [(src, float(a), float(b)) for src, a, b in rows])
        files.append("joint_samples.csv")
    write_snapshot(out, res)
    write_manifest(out, res, files)
    print(f"ks_pass_rate={battery.pass_rate:.4f} corr_mae={corr.mae:.4f} corr_max={corr.max_err:.4f}")
    return 0


def cmd_compare(args):
    if not args.model_a or not args.model_b:
        raise UsageError("compare needs --model-a and --model-b")
    ma, prep, profiles = _load_for_generation(args.model_a, args.prepared)
    mb, prep_b, _ = _load_for_generation(args.model_b, args.prepared)
    out = _out_dir(args)
    if prep_b["data_hash"] != prep["data_hash"]:
        raise ConfigError("the two models were trained on different data")
    hist = prep["weekly"]
    ids = list(ma.plant_ids)
    res = resolved(args)
    summary = {**_stamp(res), "models": {}}
    gen_corr = []
    for tag, model in (("a", ma), ("b", mb)):
        scen = sc.generate_set(model, model.posteriors, profiles, args.scenarios, args.weeks, args.seed)
        battery = stats.ks_battery(hist, scen.weekly_values, ids, alpha=args.alpha)
        corr = stats.corr_compare(hist, scen.weekly_values, ids)
        if corr.excluded:
            raise DataError("compare needs every plant to have non-zero variance")
        gen_corr.append(corr)
        summary["models"][tag] = {
            "variant": model.variant,
            "gamma": model.gamma,
            "ks_pass_rate": battery.pass_rate,
            "ks_p_values": {r.plant_id: r.p_value for r in battery.results},
            "corr_mae": corr.mae,
            "corr_max_err": corr.max_err,
            "clip_fraction": scen.clip_fraction,
        }
    rows = stats.xy_corr_table(gen_corr[0].hist_corr, gen_corr[0].gen_corr, gen_corr[1].gen_corr, ids)
    _write_rows(out / "xy_corr.csv", ("plant_i", "plant_j", "hist_r", "a_r", "b_r"), rows)
    _write_json(out / "compare.json", summary)
    write_snapshot(out, res)
    write_manifest(out, res, ["compare.json", "xy_corr.csv", SNAPSHOT])
    a, b = summary["models"]["a"], summary["models"]["b"]
    print(f"a {a['variant']} ks_pass_rate={a['ks_pass_rate']:.4f} corr_mae={a['corr_mae']:.4f}")
    print(f"b {b['variant']} ks_pass_rate={b['ks_pass_rate']:.4f} corr_mae={b['corr_mae']:.4f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "prep": cmd_prep,
    "train": cmd_train,
    "generate": cmd_generate,
    "validate": cmd_validate,
    "compare": cmd_compare,
}


def _thread_limit(n):
    if n < 1:
        raise UsageError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


def _one_line(text):
    return " ".join(str(text).split())


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args)
    except RbfVaeError as exc:
        print(f"error code={exc.exit_code} kind={type(exc).__name__} message={_one_line(exc)}",
              file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error code=2 kind={type(exc).__name__} message={_one_line(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
