"""Command-line entry point for the full pipeline.

Commands: degrade, train-dsgan, make-dataset, train-sr, sr, evaluate.
Configuration comes from an INI file with one section per pipeline stage;
``--set section.key=value`` overrides win over the file, and the fully
resolved configuration is echoed next to every command's outputs so a run
can be reproduced from its artifacts alone.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import __version__
from .datasets import (
    DatasetManifest,
    build_bicubic_dataset,
    build_gt_dataset,
    build_sdsr_dataset,
    build_tdsr_dataset,
)
from .degrade import DegradationSpec, apply_degradation
from .imgio import read_image, write_png16
from .losses import PerceptualExtractor
from .metrics import evaluate
from .training import DsganData, TrainConfig, TrainingDiverged, run_training

DATA_ROOT_ENV = "FSSR_DATA_ROOT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


class ConfigError(ValueError):
    pass


def _parse_plan(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_opt_int(text: str):
    return None if text.strip() == "" else int(text)


_TRAIN_KEYS = {
    "iterations": int,
    "epochs": _parse_opt_int,
    "batch_size": int,
    "hr_patch": int,
    "disc_crop": int,
    "lr_initial": float,
    "schedule": str,
    "adam_beta1": float,
    "adam_beta2": float,
    "seed": int,
    "scale_factor": int,
    "filter_size": int,
    "augment": _parse_bool,
    "gen_blocks": int,
    "gen_features": int,
    "disc_plan": _parse_plan,
    "w_color": float,
    "w_texture": float,
    "w_perceptual": float,
    "perceptual_seed": int,
    "checkpoint_every": int,
}

SCHEMA = {
    "degrade": {
        "kind": str,
        "sigma": float,
        "quality": int,
        "seed": int,
        "factor": float,
        "make_pairs": _parse_bool,
    },
    "dsgan": dict(_TRAIN_KEYS),
    "sr": dict(_TRAIN_KEYS, warmup_pixel_iters=int, frequency_separated=_parse_bool),
    "evaluate": {"hf_kernel": int, "hf_margin": int, "perceptual_seed": int},
}

DEFAULTS = {
    "degrade": {"kind": "gaussian_noise", "sigma": 8.0, "quality": 30, "seed": 0,
                "factor": 4.0, "make_pairs": False},
    "dsgan": {},
    "sr": {},
    "evaluate": {"hf_kernel": 5, "hf_margin": 8, "perceptual_seed": 777},
}


def load_config(path: str | None, overrides: list[str]) -> dict:
    """Resolve the effective configuration: defaults < file < --set."""
    values = {section: dict(defaults) for section, defaults in DEFAULTS.items()}
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                values[section][key] = SCHEMA[section][key](raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted}")
        values[section][key] = SCHEMA[section][key](raw)
    return values


def echo_config(values: dict, out_dir: str, command: str, argv: list[str]) -> None:
    parser = configparser.ConfigParser()
    for section, kv in values.items():
        parser[section] = {}
        for key, value in kv.items():
            if value is None:
                rendered = ""
            elif isinstance(value, tuple):
                rendered = ",".join(str(v) for v in value)
            else:
                rendered = str(value)
            parser[section][key] = rendered
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.ini"), "w") as f:
        f.write(f"# fssr {__version__} :: {command} :: {' '.join(argv)}\n")
        parser.write(f)


def _resolve(path: str) -> str:
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _load_images(directory: str):
    directory = _resolve(directory)
    if not os.path.isdir(directory):
        raise IOError(f"not a directory: {directory}")
    exts = (".png", ".jpg", ".jpeg")
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(exts))
    if not names:
        raise IOError(f"no images in {directory}")
    return names, [read_image(os.path.join(directory, n)) for n in names]


def _degradation_spec(cfg: dict) -> DegradationSpec:
    d = cfg["degrade"]
    return DegradationSpec(kind=d["kind"], sigma=d["sigma"], quality=d["quality"], seed=d["seed"])


def _train_config(cfg: dict, stage: str, seed_override: int | None) -> TrainConfig:
    section = dict(cfg[stage])
    if seed_override is not None:
        section["seed"] = seed_override
    factory = TrainConfig.dsgan_defaults if stage == "dsgan" else TrainConfig.sr_defaults
    try:
        return factory(**section)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid [{stage}] configuration: {err}") from err


def cmd_degrade(args, cfg) -> int:
    names, images = _load_images(args.in_dir)
    spec = _degradation_spec(cfg)
    out_dir = _resolve(args.out)
    if cfg["degrade"]["make_pairs"]:
        build_gt_dataset(images, spec, out_dir, jobs=args.jobs)
        print(f"wrote {len(images)} ground-truth pairs to {out_dir}")
    else:
        os.makedirs(out_dir, exist_ok=True)
        for i, (name, img) in enumerate(zip(names, images)):
            out = apply_degradation(img, spec, seed=spec.seed + i)
            write_png16(os.path.join(out_dir, os.path.splitext(name)[0] + ".png"), out)
        print(f"degraded {len(images)} images into {out_dir}")
    return EXIT_OK


def cmd_train_dsgan(args, cfg) -> int:
    _, hr_images = _load_images(args.hr_dir)
    _, source_images = _load_images(args.source_dir)
    config = _train_config(cfg, "dsgan", args.seed)
    out_dir = _resolve(args.out)
    final = run_training(config, DsganData(hr_images, source_images), out_dir)
    last = final.meta["loss_history"][-1] if final.meta["loss_history"] else {}
    print(f"trained downsampler for {final.meta['step']} steps; final record: {last}")
    print(f"checkpoint: {os.path.join(out_dir, 'checkpoint_final.npz')}")
    return EXIT_OK


def cmd_make_dataset(args, cfg) -> int:
    _, images = _load_images(args.in_dir)
    out_dir = _resolve(args.out)
    if args.mode in ("sdsr", "tdsr"):
        if not args.checkpoint:
            raise ConfigError(f"--checkpoint is required for mode {args.mode}")
        builder = build_sdsr_dataset if args.mode == "sdsr" else build_tdsr_dataset
        manifest = builder(images, _resolve(args.checkpoint), out_dir, jobs=args.jobs)
    elif args.mode == "bicubic":
        manifest = build_bicubic_dataset(images, out_dir, jobs=args.jobs)
    else:
        manifest = build_gt_dataset(images, _degradation_spec(cfg), out_dir, jobs=args.jobs)
    print(f"built {args.mode} dataset with {len(manifest.records)} pairs in {out_dir}")
    return EXIT_OK


def cmd_train_sr(args, cfg) -> int:
    manifest = DatasetManifest.load(_resolve(args.manifest))
    config = _train_config(cfg, "sr", args.seed)
    out_dir = _resolve(args.out)
    final = run_training(config, manifest, out_dir)
    last = final.meta["loss_history"][-1] if final.meta["loss_history"] else {}
    print(f"trained SR model for {final.meta['step']} steps; final record: {last}")
    print(f"checkpoint: {os.path.join(out_dir, 'checkpoint_final.npz')}")
    return EXIT_OK


def cmd_sr(args, cfg) -> int:
    from .experiments import run_sr_on_images

    names, images = _load_images(args.in_dir)
    outputs = run_sr_on_images(_resolve(args.checkpoint), images)
    out_dir = _resolve(args.out)
    os.makedirs(out_dir, exist_ok=True)
    for name, out in zip(names, outputs):
        write_png16(os.path.join(out_dir, os.path.splitext(name)[0] + ".png"), out)
    print(f"super-resolved {len(images)} images into {out_dir}")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    section = cfg["evaluate"]
    ex = PerceptualExtractor(seed=section["perceptual_seed"])
    report = evaluate(
        _resolve(args.sr_dir),
        _resolve(args.gt_dir),
        ex,
        hf_kernel=section["hf_kernel"],
        hf_margin=section["hf_margin"],
        jobs=args.jobs,
    )
    report_path = _resolve(args.report)
    report.save(report_path)
    print(report.render_table())
    print(f"report written to {report_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fssr",
        description="Frequency-separated real-world super-resolution pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"fssr {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    common.add_argument("--seed", type=int, help="root seed override for training commands")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for per-image work")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", parents=[common], help="corrupt images or build GT pairs")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("train-dsgan", parents=[common], help="train the downsampler generator")
    p.add_argument("--hr", dest="hr_dir", required=True)
    p.add_argument("--source", dest="source_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_dsgan)

    p = sub.add_parser("make-dataset", parents=[common], help="build a paired training dataset")
    p.add_argument("--mode", choices=("sdsr", "tdsr", "bicubic", "gt"), required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--checkpoint", help="downsampler checkpoint (sdsr/tdsr modes)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_make_dataset)

    p = sub.add_parser("train-sr", parents=[common], help="train the x4 SR model")
    p.add_argument("--data", dest="manifest", required=True, help="path to manifest.txt")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_sr)

    p = sub.add_parser("sr", parents=[common], help="x4 inference on a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sr)

    p = sub.add_parser("evaluate", parents=[common], help="score SR outputs against references")
    p.add_argument("--sr", dest="sr_dir", required=True)
    p.add_argument("--gt", dest="gt_dir", required=True)
    p.add_argument("--report", required=True, help="report output path")
    p.set_defaults(fn=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config, args.overrides)
        if args.seed is not None:
            for section in ("degrade", "dsgan", "sr"):
                cfg[section]["seed"] = args.seed
        if getattr(args, "out", None):
            echo_dir = _resolve(args.out)
        else:
            echo_dir = os.path.dirname(_resolve(args.report)) or "."
        echo_config(cfg, echo_dir, args.command, argv)
        return args.fn(args, cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
