"""Command-line entry point: ``tsit train | infer | eval | selftest``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, apply_overrides, build_loader, dump_config, load_config, preset
from .data import DataError, ImageDecodeError, decode_mask, one_hot, read_image, write_image
from .evaluation import EvaluationError, evaluate_run
from .networks import check_extent, sample_noise, noise_shape
from .selftest import run_selftest
from .tensor import Tensor
from .train import MetricsWriter, Trainer, TrainingDivergedError, load_generator

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _error(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


# -- train -------------------------------------------------------------------------


def resolve_train_config(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either a config file or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "desk-style-transfer")
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides += [f"train.seed={args.seed}", f"net.seed={args.seed}", f"data.seed={args.seed}"]
    if args.steps is not None:
        overrides.append(f"train.steps={args.steps}")
    if args.out is not None:
        overrides.append(f"run.out_dir={args.out}")
    return apply_overrides(cfg, overrides)


def cmd_train(args) -> int:
    try:
        cfg = resolve_train_config(args)
    except ConfigError as exc:
        return _error(str(exc), EXIT_CONFIG)
    try:
        loader = build_loader(cfg)
    except (DataError, ImageDecodeError) as exc:
        return _error(str(exc), EXIT_DATA)

    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / cfg.run.manifest_file).write_text(dump_config(cfg))
    trainer = Trainer(cfg.net, cfg.train, loader)
    if args.resume:
        try:
            trainer.load(args.resume)
        except CheckpointError as exc:
            return _error(f"{args.resume}: {exc}", EXIT_CONFIG)
    total = cfg.train.total_steps(loader.steps_per_epoch())
    log_every = max(1, total // 10)

    def progress(rec):
        if rec["step"] % log_every == 0 or rec["step"] == total - 1:
            print(f"step {rec['step']:>6}  L_D={rec['L_D']:.4f}  L_G_adv={rec['L_G_adv']:.4f}  "
                  f"L_P={rec['L_P']:.4f}  L_FM={rec['L_FM']:.4f}", flush=True)

    t0 = time.perf_counter()
    ckpt_dir = out / "checkpoints"
    if cfg.train.checkpoint_interval:
        ckpt_dir.mkdir(exist_ok=True)
    with MetricsWriter(out / cfg.run.metrics_file, append=bool(args.resume)) as metrics:
        try:
            trainer.run(total, metrics, ckpt_dir, progress)
        except TrainingDivergedError as exc:
            trainer.save(out / "diverged.ckpt")
            return _error(f"{exc}; state saved to {out / 'diverged.ckpt'}", EXIT_NUMERIC)
    trainer.save(out / cfg.run.checkpoint_file)
    print(f"trained {trainer.step} steps in {time.perf_counter() - t0:.1f} s; "
          f"checkpoint {out / cfg.run.checkpoint_file}")
    return EXIT_OK


# -- infer -------------------------------------------------------------------------


def translate(generator, content: np.ndarray, style: np.ndarray, noise_seed: int,
              batch_stats: bool = False) -> np.ndarray:
    """Translate one content/style pair.  By default normalization uses running
    statistics: batch statistics over a single sample are the per-channel
    instance statistics FAdaIN just set, so the following FADE would erase the
    style.  ``batch_stats=True`` runs exactly as in training."""
    cfg = generator.cfg
    dtype = cfg.np_dtype
    x_c = Tensor(content[None].astype(dtype))
    x_s = Tensor(style[None].astype(dtype))
    h, w = content.shape[1:]
    z0 = sample_noise(*noise_shape(cfg, 1, h, w), seed=noise_seed, dtype=dtype)
    generator.eval(batch_stats=batch_stats)
    with T.no_grad():
        return generator(x_c, x_s, z0).data[0]


def cmd_infer(args) -> int:
    try:
        g = load_generator(args.checkpoint)
    except (CheckpointError, OSError, ValueError) as exc:
        return _error(f"{args.checkpoint}: {exc}", EXIT_CONFIG)
    cfg = g.cfg
    try:
        if cfg.content_channels == 3:
            content = read_image(args.content).pixels[0]
        else:
            mask = decode_mask(Path(args.content).read_bytes())
            content = one_hot(mask[None], cfg.content_channels)[0]
        style = read_image(args.style).pixels[0]
        check_extent(cfg, *content.shape[1:])
        check_extent(cfg, *style.shape[1:])
    except (OSError, ImageDecodeError, DataError, ValueError) as exc:
        return _error(str(exc), EXIT_DATA)
    try:
        out = translate(g, content, style, args.noise_seed, args.batch_stats)
    except T.NonFiniteError as exc:
        return _error(str(exc), EXIT_NUMERIC)
    write_image(args.out, out)
    print(f"wrote {args.out}")
    return EXIT_OK


# -- eval / selftest -------------------------------------------------------------------


def cmd_eval(args) -> int:
    try:
        report = evaluate_run(args.generated, args.reference)
    except DataError as exc:
        return _error(str(exc), EXIT_DATA)
    except EvaluationError as exc:
        return _error(str(exc), EXIT_FAILED)
    text = report.text()
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n")
    return EXIT_OK


def cmd_selftest(args) -> int:
    ok = run_selftest(sys.stdout, fault=args.inject_fault)
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsit", description="Two-stream image translation on numpy.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config file or preset")
    t.add_argument("config", nargs="?", help="INI config file")
    t.add_argument("--preset", help="built-in config (desk-style-transfer, desk-convergence, desk-semantic)")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    t.add_argument("--seed", type=int, help="seed for initialization, noise and data order")
    t.add_argument("--steps", type=int, help="number of training steps")
    t.add_argument("--out", help="run directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="translate one content image with one style image")
    i.add_argument("checkpoint")
    i.add_argument("content", help="content image, or a label mask for semantic models")
    i.add_argument("style")
    i.add_argument("out")
    i.add_argument("--noise-seed", type=int, default=0)
    i.add_argument("--batch-stats", action="store_true",
                   help="normalize with batch statistics as in training instead of running statistics")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="FID and IS of a generated set against a reference set")
    e.add_argument("generated")
    e.add_argument("reference")
    e.add_argument("--report", help="also write the report to this file")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("selftest", help="gradient checks, oracle comparisons and invariants")
    s.add_argument("--inject-fault", metavar="OP", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
