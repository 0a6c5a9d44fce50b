"""Command-line interface.

One command per process.  Machine-readable tables and loss logs go to
stdout, diagnostics to stderr.  Exit codes: 0 success, 1 usage, 2 data
problem (missing/malformed images, bad config), 3 malformed checkpoint.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .data import build_synthetic_dataset, load_pair_directory
from .exceptions import CheckpointError, ConfigError, FusionError
from .imageio import (
    ImagePair,
    brightness_jitter,
    histogram,
    read_image,
    write_image,
)
from .metrics import evaluate_directory, format_table
from .sweep import format_sweep, robustness_sweep
from .trainer import train_loop

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECKPOINT = 3

DEFAULT_SYNTHETIC_COUNT = 200


def _gain_list(text: str) -> list[float]:
    try:
        gains = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed gain list {text!r}") from None
    if len(gains) < 2:
        raise argparse.ArgumentTypeError("need at least 2 comma-separated gains")
    return gains


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bafusion",
        description="Brightness-adaptive infrared/visible image fusion",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    p_train.add_argument("--config", required=True, help="key = value config file")
    p_train.add_argument("--synthetic", type=int, default=None, metavar="N",
                         help="train on N generated pairs (default when no data_dir)")
    p_train.add_argument("--out", default="model.bafu", help="checkpoint path")

    p_fuse = sub.add_parser("fuse", help="fuse one visible/infrared pair")
    p_fuse.add_argument("--ckpt", required=True)
    p_fuse.add_argument("--vis", required=True, help="visible frame (PPM)")
    p_fuse.add_argument("--ir", required=True, help="infrared frame (PGM)")
    p_fuse.add_argument("--out", required=True, help="fused frame (PPM)")
    p_fuse.add_argument("--gain", type=float, default=None,
                        help="brightness gain applied to the visible frame first")

    p_eval = sub.add_parser("eval", help="score every fused triple in a directory")
    p_eval.add_argument("--dir", required=True,
                        help="directory of <id>_vis.ppm, <id>_ir.pgm, <id>_fused.ppm")

    p_jitter = sub.add_parser("jitter", help="apply brightness jitter to an image")
    p_jitter.add_argument("--in", dest="input", required=True)
    p_jitter.add_argument("--out", required=True)
    p_jitter.add_argument("--gain", type=float, required=True)
    p_jitter.add_argument("--gamma", type=float, default=1.0)

    p_hist = sub.add_parser("histogram", help="256-bin luminance histogram")
    p_hist.add_argument("--in", dest="input", required=True)
    p_hist.add_argument("--out", required=True, help="text file, 'bin<TAB>count' lines")

    p_gate = sub.add_parser("inspect-gate", help="dump per-channel gate decisions")
    p_gate.add_argument("--ckpt", required=True)
    p_gate.add_argument("--vis", required=True)
    p_gate.add_argument("--ir", required=True)
    p_gate.add_argument("--out", required=True,
                        help="text file, 'channel<TAB>alpha<TAB>w' lines")

    p_sweep = sub.add_parser("sweep", help="brightness-robustness sweep of one pair")
    p_sweep.add_argument("--ckpt", required=True)
    p_sweep.add_argument("--vis", required=True)
    p_sweep.add_argument("--ir", required=True)
    p_sweep.add_argument("--gains", type=_gain_list, required=True,
                         metavar="G1,G2,...", help="comma-separated visible gains")
    return parser


def _load_pair(vis_path: str, ir_path: str) -> ImagePair:
    visible = read_image(vis_path)
    infrared = read_image(ir_path)
    if visible.shape[2] != 3:
        raise FusionError(f"{vis_path}: expected a 3-channel PPM visible frame")
    if infrared.shape[2] != 1:
        raise FusionError(f"{ir_path}: expected a 1-channel PGM infrared frame")
    if visible.shape[:2] != infrared.shape[:2]:
        raise FusionError(
            f"frame sizes differ: visible {visible.shape[1]}x{visible.shape[0]} "
            f"vs infrared {infrared.shape[1]}x{infrared.shape[0]}"
        )
    return ImagePair(visible=visible, infrared=infrared, id=Path(vis_path).stem)


def _cmd_train(args) -> int:
    config = load_config(args.config)
    if config.data_dir is not None:
        dataset = load_pair_directory(config.data_dir)
        if not dataset:
            raise ConfigError(f"data_dir {config.data_dir!r} holds no pairs")
    else:
        count = args.synthetic if args.synthetic is not None else DEFAULT_SYNTHETIC_COUNT
        dataset = build_synthetic_dataset(config.seed, count, config.image_size)
    print(f"training: {len(dataset)} pairs, {config.iters} iterations", file=sys.stderr)
    model, optimizers, _ = train_loop(config, dataset, log=sys.stdout)
    save_checkpoint(args.out, model, optimizers, config.iters, config)
    print(f"checkpoint written: {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_fuse(args) -> int:
    model, _, _, _ = load_checkpoint(args.ckpt)
    pair = _load_pair(args.vis, args.ir)
    visible = pair.visible
    if args.gain is not None:
        visible = brightness_jitter(visible, args.gain)
    fused, _ = model.fuse_images(visible, pair.infrared)
    write_image(fused, args.out)
    return EXIT_OK


def _cmd_eval(args) -> int:
    directory = Path(args.dir)
    if not directory.is_dir():
        raise FusionError(f"not a directory: {args.dir}")
    rows, mean, problems = evaluate_directory(directory)
    sys.stdout.write(format_table(rows, mean))
    for problem in problems:
        print(problem, file=sys.stderr)
    if problems or not rows:
        return EXIT_DATA
    return EXIT_OK


def _cmd_jitter(args) -> int:
    write_image(brightness_jitter(read_image(args.input), args.gain, args.gamma), args.out)
    return EXIT_OK


def _cmd_histogram(args) -> int:
    hist = histogram(read_image(args.input))
    lines = "".join(f"{level}\t{count}\n" for level, count in enumerate(hist.bins))
    Path(args.out).write_text(lines, encoding="ascii")
    return EXIT_OK


def _cmd_inspect_gate(args) -> int:
    model, _, _, _ = load_checkpoint(args.ckpt)
    pair = _load_pair(args.vis, args.ir)
    _, decision = model.fuse_images(pair.visible, pair.infrared)
    alphas = decision.alpha_values()[0]
    weights = decision.w_values()[0]
    lines = "".join(f"{channel}\t{alpha:.8g}\t{weight:.8g}\n"
                    for channel, (alpha, weight) in enumerate(zip(alphas, weights)))
    Path(args.out).write_text(lines, encoding="ascii")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    model, _, _, _ = load_checkpoint(args.ckpt)
    pair = _load_pair(args.vis, args.ir)
    report = robustness_sweep(model, pair, args.gains)
    sys.stdout.write(format_sweep(report))
    return EXIT_OK


_DISPATCH = {
    "train": _cmd_train,
    "fuse": _cmd_fuse,
    "eval": _cmd_eval,
    "jitter": _cmd_jitter,
    "histogram": _cmd_histogram,
    "inspect-gate": _cmd_inspect_gate,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage problems
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return _DISPATCH[args.verb](args)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (FusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    raise SystemExit(main(sys.argv[1:]))
