"""Command-line interface: train, sample, eval, and the full pipeline.

All commands are pure functions of (config, seed, input files); artifacts
carry no timestamps so re-running a command reproduces them bit-exactly.
Exit codes: 0 success, 2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint
from .autoencoder import Autoencoder, AutoencoderConfig
from .data import (DataError, build_dataset, load_schema,
                   make_lagged_sine_dataset, make_sine_dataset)
from .engine.tensor import EngineError
from .metrics import (MetricError, PostHocModelConfig, aggregate,
                      discriminative_score, predictive_score, write_report)
from .sampling import (SamplerConfig, SamplingError, generate,
                       read_samples_csv, write_samples_csv, write_sidecar)
from .scorenet import ScoreNet, ScoreNetConfig
from .sde import DEFAULT_N_STEPS, DiffusionSpec, BetaSchedule, SdeError
from .training import (ModelBundle, TrainConfig, TrainingDiverged,
                       pretrain_autoencoder, train_main)
from .tsne import embed_2d, write_embedding_csv, write_embedding_svg

log = logging.getLogger("tsdiff")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


# -- run configuration -------------------------------------------------------

_SECTIONS = {
    "name": None,
    "seed": None,
    "out": None,
    "dataset": {"type", "path", "schema", "window", "train_frac",
                "n", "features"},
    "autoencoder": {"latent_dim", "rnn_layers"},
    "scorenet": {"time_embed_dim", "depth", "base_channels"},
    "sde": {"kind", "beta_min", "beta_max"},
    "train": {"iter_pre", "iter_main", "use_alt", "batch_size", "lr_ae",
              "lr_score", "grad_clip", "warmup", "ema_decay", "eval_every",
              "select_samples", "pair_subsample"},
    "sampler": {"n_steps", "snr", "corrector_steps", "use_ema"},
    "metrics": {"runs", "cell", "iters", "n_samples"},
}

_DEFAULTS = {
    "name": "run",
    "seed": 0,
    "out": "runs/out",
    "dataset": {"type": "sine", "n": 4096, "window": 24, "features": 6,
                "train_frac": 0.8},
    "autoencoder": {"latent_dim": 24, "rnn_layers": 3},
    "scorenet": {"time_embed_dim": 96, "depth": 4, "base_channels": 64},
    "sde": {"kind": "vp", "beta_min": 0.1, "beta_max": 20.0},
    "train": {},
    "sampler": {},
    "metrics": {"runs": 10, "cell": "gru", "iters": 2000, "n_samples": 1000},
}


def load_run_config(path):
    """Read and validate a run-config JSON, rejecting unknown keys."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = json.loads(json.dumps(_DEFAULTS))  # deep copy
    for key, val in raw.items():
        allowed = _SECTIONS[key]
        if allowed is None:
            cfg[key] = val
            continue
        if not isinstance(val, dict):
            raise ConfigError(f"section {key!r} must be an object")
        bad = set(val) - allowed
        if bad:
            raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
        cfg[key].update(val)
    return cfg


def _build_models(cfg, input_dim, rng):
    try:
        ae_cfg = AutoencoderConfig(input_dim=input_dim,
                                   window=cfg["dataset"].get("window", 24),
                                   **cfg["autoencoder"])
        depth = cfg["scorenet"]["depth"]
        sn_cfg = ScoreNetConfig(latent_dim=ae_cfg.latent_dim, depth=depth,
                                time_embed_dim=cfg["scorenet"]["time_embed_dim"],
                                base_channels=cfg["scorenet"]["base_channels"])
        spec = DiffusionSpec(kind=cfg["sde"]["kind"],
                             schedule=BetaSchedule(cfg["sde"]["beta_min"],
                                                   cfg["sde"]["beta_max"]))
        train_cfg = TrainConfig(seed=cfg["seed"], **cfg["train"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    ae = Autoencoder(ae_cfg, rng)
    sn = ScoreNet(sn_cfg, rng)
    return ModelBundle(ae=ae, score=sn, spec=spec, config=train_cfg)


def _load_dataset(cfg):
    ds = cfg["dataset"]
    kind = ds.get("type", "csv")
    seed = cfg["seed"]
    K = ds.get("window", 24)
    if kind == "csv":
        if "path" not in ds:
            raise ConfigError("dataset.path is required for type 'csv'")
        schema = load_schema(ds["schema"]) if ds.get("schema") else None
        return build_dataset(ds["path"], schema=schema, K=K, seed=seed,
                             name=cfg["name"],
                             train_frac=ds.get("train_frac", 0.8))
    if kind in ("sine", "lagged"):
        make = make_sine_dataset if kind == "sine" else make_lagged_sine_dataset
        n = ds.get("n", 4096)
        D = ds.get("features", 6)
        n_train = int(round(n * ds.get("train_frac", 0.8)))
        train = make(n_train, K, D, seed=seed)
        test = make(n - n_train, K, D, seed=seed + 1)
        train.name, test.name = cfg["name"], cfg["name"] + "_test"
        return train, test
    raise ConfigError(f"unknown dataset type {ds.get('type')!r}")


# -- checkpoint packing ------------------------------------------------------

def save_bundle(path, bundle, cfg, dataset):
    arrays = {}
    for k, p in bundle.ae.params.items():
        arrays[f"ae.{k}"] = p.data
    for k, p in bundle.score.params.items():
        arrays[f"score.{k}"] = p.data
    for k, v in bundle.ema.shadow.items():
        arrays[f"ema.{k}"] = v
    arrays["score.fourier_w"] = bundle.score.fourier_w
    arrays["bounds.min"] = np.asarray(dataset.min_, dtype=np.float64)
    arrays["bounds.max"] = np.asarray(dataset.max_, dtype=np.float64)
    meta = {"config": cfg, "input_dim": dataset.n_features,
            "feature_names": list(dataset.feature_names)}
    checkpoint.save(path, arrays, meta)


def load_bundle(path):
    arrays, meta = checkpoint.load(path)
    cfg = meta["config"]
    rng = np.random.default_rng(cfg["seed"])
    bundle = _build_models(cfg, meta["input_dim"], rng)
    for k, p in bundle.ae.params.items():
        p.data[...] = arrays[f"ae.{k}"]
    for k, p in bundle.score.params.items():
        p.data[...] = arrays[f"score.{k}"]
    for k in bundle.ema.shadow:
        bundle.ema.shadow[k] = arrays[f"ema.{k}"]
    bundle.score.fourier_w = arrays["score.fourier_w"]
    bounds = (arrays["bounds.min"], arrays["bounds.max"])
    return bundle, cfg, bounds, meta


# -- artifact writers --------------------------------------------------------

def _write_losses(path, bundle):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "iteration", "l_ed", "l_score"])
        for r in bundle.pre_curve:
            w.writerow(["pretrain", r.iteration, repr(r.l_ed), ""])
        for r in bundle.main_curve:
            w.writerow(["main", r.iteration,
                        "" if np.isnan(r.l_ed) else repr(r.l_ed),
                        repr(r.l_score)])


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_score(mean, std):
    """Table-style '.022±.005' formatting."""
    def fmt(v):
        s = f"{v:.3f}"
        return s[1:] if s.startswith("0.") else s
    return f"{fmt(mean)}±{fmt(std)}"


# -- commands ----------------------------------------------------------------

def cmd_train(args):
    cfg = load_run_config(args.config)
    _apply_overrides(cfg, args)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)

    train_ds, test_ds = _load_dataset(cfg)
    rng = np.random.default_rng(cfg["seed"])
    bundle = _build_models(cfg, train_ds.n_features, rng)

    log.info("pre-training autoencoder: %d iterations", bundle.config.iter_pre)
    pretrain_autoencoder(bundle, train_ds.windows, rng)
    log.info("main training: %d iterations", bundle.config.iter_main)
    train_main(bundle, train_ds.windows, rng)

    ckpt_path = os.path.join(out, "checkpoint.npz")
    save_bundle(ckpt_path, bundle, cfg, train_ds)
    _write_losses(os.path.join(out, "losses.csv"), bundle)
    write_samples_csv(os.path.join(out, "real_test.csv"),
                      test_ds.windows, test_ds.feature_names)
    manifest = {
        "config": cfg,
        "checkpoint_sha256": checkpoint.file_hash(ckpt_path),
        "n_train_windows": int(train_ds.windows.shape[0]),
        "n_test_windows": int(test_ds.windows.shape[0]),
        "final_l_ed": bundle.pre_curve[-1].l_ed,
        "final_l_score": bundle.main_curve[-1].l_score,
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    log.info("wrote %s", ckpt_path)
    return EXIT_OK


def cmd_sample(args):
    bundle, cfg, bounds, meta = load_bundle(args.checkpoint)
    if args.kind and args.kind != cfg["sde"]["kind"]:
        raise ConfigError(
            f"checkpoint was trained with kind={cfg['sde']['kind']!r}; "
            f"refusing to sample with {args.kind!r}")
    sampler_kwargs = dict(cfg["sampler"])
    if args.steps:
        sampler_kwargs["n_steps"] = args.steps
    sampler_kwargs.setdefault("n_steps", DEFAULT_N_STEPS)
    if args.ema is not None:
        sampler_kwargs["use_ema"] = args.ema
    sampler = SamplerConfig(**sampler_kwargs)

    seed = cfg["seed"] if args.seed is None else args.seed
    out_path = args.out or "samples.csv"
    names = meta["feature_names"]
    if args.n_samples == 0:
        write_samples_csv(out_path, np.empty((0, 0, len(names))), names)
        return EXIT_OK
    rng = np.random.default_rng(seed)
    T_len = cfg["dataset"].get("window", 24)
    samples = generate(bundle, args.n_samples, T_len, sampler, rng,
                       bounds=bounds)
    write_samples_csv(out_path, samples, names)
    write_sidecar(out_path + ".json", sampler, seed,
                  checkpoint_hash=checkpoint.file_hash(args.checkpoint))
    log.info("wrote %d samples to %s", args.n_samples, out_path)
    return EXIT_OK


def evaluate_sets(real, fake, runs, seed, cell="gru", iters=2000):
    """Discriminative + predictive MetricReports over `runs` derived seeds."""
    if real.shape[1:] != fake.shape[1:]:
        raise MetricError(f"window shapes differ: real {real.shape[1:]} "
                          f"vs fake {fake.shape[1:]}")
    n = min(real.shape[0], fake.shape[0])
    D = real.shape[2]
    disc_cfg = PostHocModelConfig(task="classify", hidden=D, layers=2,
                                  iters=iters, cell=cell)
    pred_cfg = PostHocModelConfig(task="forecast", hidden=D, layers=1,
                                  iters=iters, cell=cell)
    disc_runs, pred_runs = [], []
    for i in range(runs):
        run_seed = seed + i
        rng = np.random.default_rng(run_seed)
        ri = rng.choice(real.shape[0], size=n, replace=False)
        fi = rng.choice(fake.shape[0], size=n, replace=False)
        disc_runs.append(discriminative_score(real[ri], fake[fi], run_seed,
                                              disc_cfg))
        pred_runs.append(predictive_score(fake[fi], real[ri], run_seed,
                                          pred_cfg))
    return aggregate(disc_runs, "discriminative"), aggregate(pred_runs,
                                                             "predictive")


def cmd_eval(args):
    real, _ = read_samples_csv(args.real)
    fake, _ = read_samples_csv(args.fake)
    disc, pred = evaluate_sets(real, fake, args.runs, args.seed,
                               cell=args.cell, iters=args.iters)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    report_path = os.path.join(out, "report.json")
    write_report(report_path, [disc, pred],
                 config={"runs": args.runs, "cell": args.cell,
                         "iters": args.iters,
                         "formatted": {
                             "discriminative": format_score(disc.mean, disc.std),
                             "predictive": format_score(pred.mean, pred.std)}},
                 seeds=list(range(args.seed, args.seed + args.runs)))
    pts, labels = embed_2d(real, fake, seed=args.seed)
    write_embedding_csv(os.path.join(out, "embedding.csv"), pts, labels)
    if args.svg:
        write_embedding_svg(os.path.join(out, "embedding.svg"), pts, labels)
    log.info("discriminative %s predictive %s",
             format_score(disc.mean, disc.std), format_score(pred.mean, pred.std))
    return EXIT_OK


def cmd_pipeline(args):
    rc = cmd_train(args)
    if rc != EXIT_OK:
        return rc
    cfg = load_run_config(args.config)
    _apply_overrides(cfg, args)
    out = cfg["out"]

    sample_args = argparse.Namespace(
        checkpoint=os.path.join(out, "checkpoint.npz"),
        n_samples=args.n_samples if args.n_samples is not None
        else cfg["metrics"]["n_samples"],
        steps=args.steps, kind=None, seed=args.seed, ema=args.ema,
        out=os.path.join(out, "samples.csv"))
    rc = cmd_sample(sample_args)
    if rc != EXIT_OK:
        return rc

    eval_args = argparse.Namespace(
        real=os.path.join(out, "real_test.csv"),
        fake=os.path.join(out, "samples.csv"),
        runs=args.runs if args.runs is not None else cfg["metrics"]["runs"],
        seed=cfg["seed"] if args.seed is None else args.seed,
        cell=cfg["metrics"]["cell"], iters=cfg["metrics"]["iters"],
        out=out, svg=args.svg)
    return cmd_eval(eval_args)


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "no_alt", False):
        cfg["train"]["use_alt"] = False
    if getattr(args, "depth", None):
        cfg["scorenet"]["depth"] = args.depth
    if getattr(args, "kind", None):
        cfg["sde"]["kind"] = args.kind
    if getattr(args, "steps", None):
        cfg["sampler"]["n_steps"] = args.steps
    if getattr(args, "ema", None) is not None:
        cfg["sampler"]["use_ema"] = args.ema


def _add_ema_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ema", dest="ema", action="store_true", default=None)
    g.add_argument("--no-ema", dest="ema", action="store_false")


def build_parser():
    ap = argparse.ArgumentParser(prog="tsdiff",
                                 description="Score-based time-series generation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-alt", action="store_true",
                   help="disable alternating autoencoder updates")
    p.add_argument("--depth", type=int, choices=(3, 4), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate series from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--kind", choices=("vp", "subvp"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    _add_ema_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="score generated series against real ones")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cell", choices=("gru", "lstm"), default="gru")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--out", default=None)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="train, sample, and evaluate")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-alt", action="store_true")
    p.add_argument("--depth", type=int, choices=(3, 4), default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--kind", choices=("vp", "subvp"), default=None)
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--svg", action="store_true")
    _add_ema_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, MetricError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (TrainingDiverged, SamplingError, SdeError, EngineError,
            FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
