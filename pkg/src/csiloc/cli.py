"""Operator entry point: generate -> split -> train -> evaluate -> report.

Every command writes a manifest.json next to its outputs with the fully
resolved parameters and seeds; re-running the same command reproduces the
numeric outputs bit for bit (timestamps and wall-clock columns aside).

Exit codes: 0 success, 1 numeric/validation failure, 2 usage error.
"""

import argparse
import datetime
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .data import (Dataset, NormStats, SplitStrategy, SynthConfig, fit_normalizer,
                   generate_synthetic, import_npy, load_canonical, split, write_canonical)
from .errors import CsilocError
from .models import (ArchConfig, DEFAULT_ARCH, MODEL_KINDS, build_model, count_weights,
                     load_checkpoint, save_checkpoint)
from .network import gradient_check
from .train import TrainConfig, train
from .evaluation import evaluate, emit_reports

GRADCHECK_TOLERANCE = 1e-4


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _fraction(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return value


def _utc_now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_manifest(directory, command, params, started):
    manifest = {
        "command": command,
        "parameters": params,
        "tool": "csiloc",
        "version": __version__,
        "started_utc": started,
        "ended_utc": _utc_now(),
    }
    Path(directory).mkdir(parents=True, exist_ok=True)
    (Path(directory) / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config_file(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CsilocError(f"cannot read config file {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise CsilocError(f"config file {path} must hold a flat JSON object")
    return cfg


def _split_config(flat, model_kind):
    """Partition a flat config dict into (ArchConfig kwargs, TrainConfig kwargs, hidden)."""
    arch_fields = set(ArchConfig.__dataclass_fields__)
    train_fields = set(TrainConfig.__dataclass_fields__) - {"seed"}
    arch, train_kw = {}, {}
    hidden = None
    for key, value in flat.items():
        if key == "hidden":
            hidden = list(value)
        elif key in arch_fields:
            arch[key] = value
        elif key in train_fields:
            train_kw[key] = value
        elif key == "train_seed":
            train_kw["seed"] = value
        else:
            raise CsilocError(f"unknown config field {key!r}")
    if model_kind in ("fcnn", "linear") and arch:
        raise CsilocError(f"architecture fields {sorted(arch)} do not apply to {model_kind}")
    return arch, train_kw, hidden


def cmd_gen(args):
    started = _utc_now()
    cfg = SynthConfig(num_samples=args.samples, num_subcarriers=args.subcarriers,
                      num_reflectors=args.reflectors, seed=args.seed,
                      snr_db_range=(args.snr_low, args.snr_high))
    ds = generate_synthetic(cfg)
    write_canonical(args.out, ds)
    _write_manifest(args.out, "gen", {**asdict(cfg), "out": str(args.out)}, started)
    print(f"wrote {len(ds)} samples ({ds.n_antennas} antennas x {ds.n_subcarriers} subcarriers) to {args.out}")
    return 0


def cmd_import(args):
    started = _utc_now()
    ds = import_npy(args.csi, args.snr, args.pos)
    write_canonical(args.out, ds)
    _write_manifest(args.out, "import", {"csi": str(args.csi), "snr": str(args.snr),
                                         "pos": str(args.pos), "out": str(args.out)}, started)
    print(f"imported {len(ds)} samples to {args.out}")
    return 0


def cmd_split(args):
    started = _utc_now()
    ds = load_canonical(args.data)
    strat = SplitStrategy(args.kind, args.fraction, args.seed)
    train_ds, eval_ds = split(ds, strat)
    out = Path(args.out)
    write_canonical(out / "train", train_ds)
    write_canonical(out / "eval", eval_ds)
    _write_manifest(out, "split", {"data": str(args.data), "kind": args.kind,
                                   "fraction": args.fraction, "seed": args.seed,
                                   "out": str(out), "n_train": len(train_ds),
                                   "n_eval": len(eval_ds)}, started)
    print(f"split {len(ds)} samples -> train {len(train_ds)} / eval {len(eval_ds)} ({args.kind})")
    return 0


def cmd_train(args):
    started = _utc_now()
    ds = load_canonical(args.train)
    flat = _load_config_file(args.config)
    arch_kw, train_kw, hidden = _split_config(flat, args.model)
    if args.seed is not None:
        train_kw["seed"] = args.seed
    if args.max_epochs is not None:
        train_kw["max_epochs"] = args.max_epochs
    if args.batch_size is not None:
        train_kw["batch_size"] = args.batch_size
    train_cfg = TrainConfig(**train_kw)

    input_shape = (2, ds.n_antennas, ds.n_subcarriers)
    if args.model in ("fcnn", "linear"):
        arch = {"hidden": hidden or [], "seed": arch_kw.get("seed", 0)}
        if args.model == "linear" and arch["hidden"]:
            raise CsilocError("linear model takes no hidden layers")
    else:
        defaults = asdict(DEFAULT_ARCH[args.model])
        defaults.update(arch_kw)
        arch = defaults
    net = build_model(args.model, arch, input_shape)

    norm = fit_normalizer(ds)
    normalized = Dataset(ds.csi / norm.scale, ds.snr, ds.pos,
                         fc_hz=ds.fc_hz, bandwidth_hz=ds.bandwidth_hz, frame=ds.frame)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    net, history = train(net, normalized, train_cfg,
                         checkpoint_path=ckpt, checkpoint_norm_scale=norm.scale)
    save_checkpoint(ckpt, net, norm_scale=norm.scale,
                    meta={"stop_reason": history.stop_reason, "epochs": len(history.records)})
    history.to_csv(out / "history.csv")
    _write_manifest(out, "train", {"train": str(args.train), "model": args.model,
                                   "config_file": None if args.config is None else str(args.config),
                                   "arch": arch, "train_config": asdict(train_cfg),
                                   "out": str(out)}, started)
    last = history.records[-1] if history.records else None
    print(f"trained {args.model} for {len(history.records)} epochs "
          f"(stop: {history.stop_reason}); "
          + (f"final monitor MDE {last.monitor_mde:.4f} m" if last else "no epochs run"))
    return 0


def cmd_eval(args):
    started = _utc_now()
    net, norm_scale, _meta = load_checkpoint(args.checkpoint)
    if norm_scale is None:
        raise CsilocError(f"{args.checkpoint} carries no normalizer scale; cannot evaluate")
    ds = load_canonical(args.eval)
    report = evaluate(net, ds, NormStats(norm_scale),
                      metadata={"split": args.split_label, "dataset": str(args.eval)})
    emit_reports(report, args.out)
    _write_manifest(args.out, "eval", {"checkpoint": str(args.checkpoint),
                                       "eval": str(args.eval), "out": str(args.out),
                                       "split_label": args.split_label}, started)
    print(f"evaluated {report.n_samples} samples: MDE {report.mde_m:.4f} m, "
          f"RMSE {report.rmse_m:.4f} m, NMDE {report.nmde_percent:.2f} %")
    return 0


# shrunken geometry per architecture: W=60 and stride defaults would underflow
# the width chain, so each kind gets the largest stride that stays legal
_TINY = {
    "cnn4": (ArchConfig(base_filters=2, kernel=3, stride=2, head_units=16, seed=11), (2, 4, 60)),
    "cnn4r": (ArchConfig(base_filters=2, kernel=3, stride=2, head_units=16, seed=11), (2, 4, 60)),
    "cnn4s": (ArchConfig(base_filters=2, kernel=3, stride=1, head_units=16, seed=11), (2, 4, 60)),
    "fcnn": (None, (2, 4, 60)),
    "linear": (None, (2, 4, 60)),
}


def build_tiny(kind):
    import numpy as np
    cfg, input_shape = _TINY[kind]
    if kind in ("fcnn", "linear"):
        net = build_model(kind, {"hidden": [8] if kind == "fcnn" else [], "seed": 11}, input_shape)
    else:
        net = build_model(kind, asdict(cfg), input_shape)
    rng = np.random.default_rng(7)
    # shipped init zeroes biases, which parks ReLU pre-activations exactly on
    # the kink where central differences and the subgradient disagree; jitter
    # every parameter so the check runs at a generic smooth point
    for p in net.params():
        p.value += rng.uniform(-0.15, 0.15, size=p.value.shape)
    x = rng.standard_normal((2,) + input_shape)
    target = rng.uniform(1.0, 3.0, size=(2, 3))
    return net, x, target


def cmd_gradcheck(args):
    net, x, target = build_tiny(args.model)
    result = gradient_check(net, x, target)
    print(result)
    if result.max_rel_err < GRADCHECK_TOLERANCE:
        print(f"gradcheck {args.model}: OK (< {GRADCHECK_TOLERANCE})")
        return 0
    print(f"gradcheck {args.model}: FAILED at layer parameter {result.worst_param} "
          f"index {result.worst_index}", file=sys.stderr)
    return 1


def cmd_count_weights(args):
    flat = _load_config_file(args.config)
    arch_kw, train_kw, hidden = _split_config(flat, args.model)
    if train_kw:
        raise CsilocError(f"count-weights config must not carry training fields: {sorted(train_kw)}")
    input_shape = (2, args.antennas, args.subcarriers)
    if args.model in ("fcnn", "linear"):
        arch = {"hidden": hidden or [], "seed": 0}
    else:
        defaults = asdict(DEFAULT_ARCH[args.model])
        defaults.update(arch_kw)
        arch = defaults
    net = build_model(args.model, arch, input_shape)
    raw = count_weights(net)
    print(f"{raw} {raw / 1e6:.1f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csiloc",
        description="CSI-fingerprint indoor positioning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=_positive_int, required=True)
    p.add_argument("--subcarriers", type=_positive_int, default=64)
    p.add_argument("--reflectors", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-low", type=float, default=10.0)
    p.add_argument("--snr-high", type=float, default=30.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("import", help="import NPY dumps into the canonical container")
    p.add_argument("--csi", required=True)
    p.add_argument("--snr", required=True)
    p.add_argument("--pos", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("split", help="split a dataset into train/ and eval/")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", required=True, choices=["random", "narrow", "wide", "within"])
    p.add_argument("--fraction", type=_fraction, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model on a canonical dataset")
    p.add_argument("--train", required=True)
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--config", default=None, help="flat JSON of architecture/training fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--batch-size", type=_positive_int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and emit report files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split-label", default="unspecified")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of a shrunken model")
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--scale", choices=["tiny"], default="tiny")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("count-weights", help="print trainable weight count")
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--config", default=None)
    p.add_argument("--subcarriers", type=_positive_int, default=924)
    p.add_argument("--antennas", type=_positive_int, default=16)
    p.set_defaults(func=cmd_count_weights)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CsilocError, ValueError) as e:
        print(f"csiloc {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
