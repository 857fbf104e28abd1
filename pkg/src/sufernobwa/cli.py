"""Command-line entry point.

Every subcommand accepts ``--config FILE.json``; its keys are flag names
(dashes or underscores) and sit between the built-in defaults and the flags
given on the command line. Failures exit 1 with a single stderr line
``error: <Category>: <message>``; bad flags exit 2 with usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, SufernobwaError
from .guided_filter import DEFAULT_EPS
from .imaging import (
    ImageBuffer,
    canny_edges,
    load_image,
    resize_bilinear,
    save_edges,
    save_image,
)
from .losses import LossWeights, total_loss
from .network import NetworkConfig, forward, load_checkpoint
from .watershed import WatershedConfig, watershed_map

log = logging.getLogger("sufernobwa")

DEFAULT_CACHE = "cache"


# --------------------------------------------------------------------------
# argument groups


def _dataset_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset-root", required=True, help="root of the paired image tree")
    g.add_argument("--layout", choices=("rice", "satehaze1k", "generic"), default="rice",
                   help="directory layout of the dataset")
    g.add_argument("--resize", type=int, default=256, help="square size images are resized to")
    g.add_argument("--cache", default=None,
                   help="prepared-image cache directory (default: <out>/cache)")


def _loss_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("loss")
    g.add_argument("--lambda-l2", type=float, default=5.0, help="weight of the pixel L2 term")
    g.add_argument("--lambda-guided", type=float, default=1.0, help="weight of the guided-filter term")
    g.add_argument("--lambda-water", type=float, default=0.5, help="weight of the watershed term")
    g.add_argument("--guided-radius", type=int, default=None,
                   help="guided-filter window radius (default: round(4*H/256), at least 1)")
    g.add_argument("--guided-eps", type=float, default=DEFAULT_EPS, help="guided-filter regularizer")
    g.add_argument("--coef-smoothing", action="store_true",
                   help="box-average the guided coefficients before applying them")
    g.add_argument("--water-grad", choices=("none", "straight_through"), default="none",
                   help="gradient of the watershed term")
    g.add_argument("--water-metric", choices=("l1", "l2"), default="l2",
                   help="distance between normalized label maps")
    g.add_argument("--water-sigma", type=float, default=2.0, help="pre-smoothing sigma of the watershed")


def _network_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("network")
    g.add_argument("--base-channels", type=int, default=64, help="stem feature width")
    g.add_argument("--window", type=int, default=8, help="attention window size")
    g.add_argument("--rrdb-per-stage", type=int, default=1, help="residual dense blocks per stage")
    g.add_argument("--no-swinrrdb", action="store_true",
                   help="replace attention dense blocks with plain residual conv blocks")


def _train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float, default=1e-5, help="Adam learning rate")
    g.add_argument("--epochs", type=int, default=1000, help="training epochs")
    g.add_argument("--batch", type=int, default=1, help="batch size")
    g.add_argument("--checkpoint-every", type=int, default=0,
                   help="write a checkpoint every N epochs (0: only at the end)")
    g.add_argument("--no-guided", action="store_true", help="drop the guided term (ablation)")
    g.add_argument("--no-water", action="store_true", help="drop the watershed term (ablation)")
    g.add_argument("--desk", action="store_true",
                   help="laptop preset: 64px, base 8, window 4, lr 1e-4, batch 2, 400 epochs "
                        "(explicit flags still win)")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON file of flag values (flags override it)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, deterministic kernels")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


DESK = {"resize": 64, "base_channels": 8, "window": 4, "lr": 1e-4, "batch": 2, "epochs": 400}


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="sufernobwa", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        _common_flags(p)
        return p

    p = add("prepare", "build the manifest and the resized image cache")
    _dataset_flags(p)
    p.add_argument("--out", required=True, help="output directory")

    p = add("train", "train the network on the train split")
    _dataset_flags(p)
    _network_flags(p)
    _train_flags(p)
    _loss_flags(p)
    p.add_argument("--out", required=True, help="output directory for logs and checkpoints")

    p = add("eval", "PSNR/SSIM/UQI of a checkpoint on a dataset split")
    _dataset_flags(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint path (.npz or stem)")
    p.add_argument("--split", choices=("train", "test"), default="test", help="split to evaluate")
    p.add_argument("--out", required=True, help="output directory for metrics.csv/json")
    p.set_defaults(resize=None)  # None: the checkpoint's input size

    p = add("dehaze", "dehaze one image")
    p.add_argument("--checkpoint", required=True, help="checkpoint path (.npz or stem)")
    p.add_argument("--in", dest="input", required=True, help="hazy PNG")
    p.add_argument("--out", required=True, help="output PNG (same size as the input)")

    p = add("loss-report", "loss components between a prediction and ground truth")
    p.add_argument("--pred", required=True, help="predicted PNG")
    p.add_argument("--gt", required=True, help="ground-truth PNG")
    p.add_argument("--out", default=None, help="optional JSON output path")
    _loss_flags(p)

    p = add("watershed-map", "normalized watershed label map of an image")
    p.add_argument("--in", dest="input", required=True, help="input PNG")
    p.add_argument("--out", required=True, help="output PNG; a .txt float grid is written beside it")
    p.add_argument("--water-sigma", type=float, default=2.0, help="pre-smoothing sigma")

    p = add("edge-compare", "Canny edge maps of two images and their disagreement")
    p.add_argument("--a", required=True, help="first PNG (e.g. network output)")
    p.add_argument("--b", required=True, help="second PNG (e.g. ground truth)")
    p.add_argument("--lo", type=float, default=100.0, help="low hysteresis threshold (0-255 scale)")
    p.add_argument("--hi", type=float, default=200.0, help="high hysteresis threshold (0-255 scale)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("ablate", "loss-term and SwinRRDB ablations under one seed and budget")
    _dataset_flags(p)
    _network_flags(p)
    _train_flags(p)
    _loss_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    return parser


# --------------------------------------------------------------------------
# config resolution


def parse(argv: list[str]) -> argparse.Namespace:
    """Parse with precedence defaults < desk preset < config file < flags."""
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("--desk", action="store_true")
    early, _ = pre.parse_known_args(argv)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((t for t in argv if t in sub_action.choices), None)
    if command is None:
        return parser.parse_args(argv)  # lets argparse report the missing command
    sub = sub_action.choices[command]
    known = {a.dest for a in sub._actions}
    overlay: dict = {}
    file_values: dict = {}
    if early.config:
        try:
            loaded = json.loads(Path(early.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {early.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {early.config} must hold a JSON object")
        for key, value in loaded.items():
            dest = key.replace("-", "_")
            if dest not in known or dest in ("config", "help"):
                raise ConfigError(f"unknown config key {key!r} for {command}")
            file_values[dest] = value
    if "desk" in known and (early.desk or file_values.get("desk")):
        overlay.update(DESK)
    overlay.update(file_values)
    if overlay:
        sub.set_defaults(**overlay)
        for action in sub._actions:  # a config value satisfies a required flag
            if action.dest in overlay:
                action.required = False
    return parser.parse_args(argv)


def _resolved(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


# --------------------------------------------------------------------------
# commands


def _weights(args) -> LossWeights:
    return LossWeights(args.lambda_l2, args.lambda_guided, args.lambda_water)


def _net_cfg(args) -> NetworkConfig:
    return NetworkConfig(base_channels=args.base_channels, window=args.window,
                         rrdb_per_stage=args.rrdb_per_stage, input_size=args.resize,
                         use_swinrrdb=not args.no_swinrrdb)


def _train_cfg(args):
    from .pipeline import TrainConfig

    return TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed,
        weights=_weights(args), use_guided=not args.no_guided, use_water=not args.no_water,
        use_swinrrdb=not args.no_swinrrdb, desk_preset=args.desk,
        guided_radius=args.guided_radius, guided_eps=args.guided_eps,
        coef_smoothing=args.coef_smoothing, water_grad=args.water_grad,
        water_metric=args.water_metric, water_sigma=args.water_sigma,
        checkpoint_every=args.checkpoint_every, deterministic=args.deterministic,
    )


def _prepared(args):
    from .pipeline import build_manifest, prepare_dataset

    manifest = build_manifest(args.dataset_root, args.layout, args.resize)
    cache = Path(args.cache) if args.cache else Path(args.out) / DEFAULT_CACHE
    data = prepare_dataset(manifest, cache)
    log.info("prepared %d images (%d written, %d cached)", data.written + data.skipped,
             data.written, data.skipped)
    return data


def cmd_prepare(args) -> dict:
    data = _prepared(args)
    out = Path(args.out)
    data.manifest.save(out / "manifest.json")
    return {"counts": data.manifest.counts(), "written": data.written, "skipped": data.skipped,
            "cache": str(data.cache_dir)}


def cmd_train(args) -> dict:
    from .pipeline import train

    data = _prepared(args)
    result = train(data, _net_cfg(args), _train_cfg(args), args.out)
    return {"initial": result.initial.to_dict(), "final": result.final.to_dict(),
            "checkpoints": [c.epoch for c in result.checkpoints]}


def cmd_eval(args) -> dict:
    from .pipeline import evaluate

    model, _ = load_checkpoint(args.checkpoint)
    if args.resize is None:
        args.resize = model.cfg.input_size
    elif args.resize != model.cfg.input_size:
        raise ConfigError(f"--resize {args.resize} does not match the checkpoint input size "
                          f"{model.cfg.input_size}")
    data = _prepared(args)
    table = evaluate(data.pairs(args.split), model, out_dir=args.out)
    return {"mean": table.mean.formatted(),
            "levels": {k: v.formatted() for k, v in table.levels.items()}}


def cmd_dehaze(args) -> dict:
    model, _ = load_checkpoint(args.checkpoint)
    img = load_image(args.input)
    if img.channels == 1:
        img = img.with_data(np.repeat(img.data, 3, axis=2))
    size = model.cfg.input_size
    small = resize_bilinear(img, size, size)
    out = forward(small, model).to_unit()
    out = resize_bilinear(out, img.height, img.width)
    save_image(ImageBuffer(np.clip(out.data, 0.0, 1.0)), args.out)
    return {"out": args.out, "size": [img.height, img.width]}


def cmd_loss_report(args) -> dict:
    pred, gt = load_image(args.pred), load_image(args.gt)
    report, _ = total_loss(pred, gt, _weights(args), args.guided_radius, args.guided_eps,
                           WatershedConfig(sigma=args.water_sigma), water_grad=args.water_grad,
                           water_metric=args.water_metric, coef_smoothing=args.coef_smoothing)
    d = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(d, indent=2))
    return d


def cmd_watershed_map(args) -> dict:
    img = load_image(args.input)
    m = watershed_map(img, WatershedConfig(sigma=args.water_sigma))
    out = Path(args.out)
    save_image(ImageBuffer(m.values), out)
    grid = out.with_suffix(".txt")
    np.savetxt(grid, m.values, fmt="%.10f")
    return {"out": str(out), "grid": str(grid), "regions": m.labels.num_labels}


def cmd_edge_compare(args) -> dict:
    a, b = load_image(args.a), load_image(args.b)
    if a.shape[:2] != b.shape[:2]:
        from .errors import ShapeMismatch

        raise ShapeMismatch(f"{args.a} is {a.shape[:2]}, {args.b} is {b.shape[:2]}")
    ea, eb = canny_edges(a, args.lo, args.hi), canny_edges(b, args.lo, args.hi)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_edges(ea, out / "edges_a.png")
    save_edges(eb, out / "edges_b.png")
    summary = {
        "edges_a": int(ea.data.sum()),
        "edges_b": int(eb.data.sum()),
        "disagreement": int(np.count_nonzero(ea.data != eb.data)),
        "lo": args.lo,
        "hi": args.hi,
    }
    (out / "edge_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def cmd_ablate(args) -> dict:
    from .pipeline import ablate

    data = _prepared(args)
    table = ablate(data, _net_cfg(args), _train_cfg(args), args.out)
    print(table.render())
    return {"rows": len(table.rows), "out": args.out}


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "dehaze": cmd_dehaze,
    "loss-report": cmd_loss_report,
    "watershed-map": cmd_watershed_map,
    "edge-compare": cmd_edge_compare,
    "ablate": cmd_ablate,
}


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    except SufernobwaError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.deterministic:
        import torch

        torch.set_num_threads(1)
    print("config: " + json.dumps(_resolved(args), sort_keys=True), file=sys.stderr)
    try:
        result = COMMANDS[args.command](args)
    except SufernobwaError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
