"""Command-line entry point: ``porogen <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from porogen import __version__
from porogen.grid import (
    ConditionalInput,
    PGMError,
    load_image,
    load_mask,
    save_image,
)
from porogen.morph import DIRECTIONS, curves_to_csv, descriptor_suite

EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 1, 2, 3
logger = logging.getLogger("porogen")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_training_flags(p):
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--nz", type=int, default=8)
    p.add_argument("--base-channels", type=int, default=64)
    p.add_argument("--max-channels", type=int, default=512)
    p.add_argument("--lambda-l1", type=float, default=10.0)
    p.add_argument("--lambda-pattern", type=float, default=5.0e5)
    p.add_argument("--lambda-porosity", type=float, default=1.0e3)
    p.add_argument("--template", type=int, default=3)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--decay-start", type=float, default=0.5,
                   help="fraction of steps at the base rate before linear decay")
    p.add_argument("--checkpoint-every", type=int, default=0, help="epochs between checkpoints")
    p.add_argument("--non-saturating", action="store_true",
                   help="generator minimizes -log D instead of log(1 - D)")
    p.add_argument("--l1-reduction", choices=("mean", "sum"), default="mean")


def _add_cond_flags(p):
    p.add_argument("--input", required=True, help="PGM with hard-data phases (pore >= 128)")
    p.add_argument("--mask", required=True, help="PGM marking informed pixels (>= 128)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="porogen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"porogen {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", help="JSON file whose keys override flags (dashes or "
                                         "underscores)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a paired synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=600)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--medium", choices=("blob", "disks", "anisotropic-blob"), default="blob")
    p.add_argument("--phi", type=float, default=0.3)
    p.add_argument("--corr-length", type=float, default=3.0)
    p.add_argument("--mask", default="corner-square",
                   choices=("corner-square", "k-random-squares", "horizontal-strip",
                            "vertical-strip"))
    p.add_argument("--mask-size", type=int, default=26)
    p.add_argument("--mask-count", type=int, default=1)
    p.add_argument("--random-placement", action="store_true",
                   help="draw a new mask per sample instead of one shared mask")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="descriptor curves of a binary image as CSV")
    p.add_argument("image")
    p.add_argument("--direction", choices=DIRECTIONS, default="xy")
    p.add_argument("--phase", choices=("pore", "solid"), default="pore")
    p.add_argument("--r-max", type=int)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("train", help="train generator and discriminator")
    p.add_argument("--data", required=True, help="dataset directory from `synth`")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_training_flags(p)

    p = sub.add_parser("reconstruct", help="sample realizations from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_cond_flags(p)
    p.add_argument("-k", "--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("anneal", help="simulated-annealing reconstruction")
    _add_cond_flags(p)
    p.add_argument("--target", required=True, help="image supplying the target statistics")
    p.add_argument("--template", type=int, default=3)
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--cooling", type=float, default=0.95)
    p.add_argument("--temperature", type=float, help="initial temperature (default: auto)")
    p.add_argument("--w-s2", type=float, default=0.0)
    p.add_argument("--s2-r-max", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="statistics of realizations against a target")
    _add_cond_flags(p)
    p.add_argument("--target", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="draw realizations from this checkpoint")
    src.add_argument("--images", nargs="+", help="existing realization PGMs")
    p.add_argument("--realizations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--directions", default="xy,se")
    p.add_argument("--r-max", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plot", help="SVG of target vs realization curves")
    p.add_argument("--target", required=True)
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--direction", choices=DIRECTIONS, default="xy")
    p.add_argument("--r-max", type=int)
    p.add_argument("--out", required=True)
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config}: invalid JSON ({exc})") from exc
    if not isinstance(overrides, dict):
        raise UsageError(f"config {args.config}: expected a JSON object")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise UsageError(f"config {args.config}: unknown option {key!r} for "
                             f"{args.command}")
        setattr(args, attr, value)
    return args


def _load_cond(args) -> ConditionalInput:
    values = load_image(args.input)
    mask = load_mask(args.mask)
    if values.shape != mask.shape:
        raise UsageError(f"input {values.shape} and mask {mask.shape} differ in shape")
    return ConditionalInput(values.as_soft(), mask)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    from porogen.synthdata import MaskSpec, MediumSpec, build_dataset

    man = build_dataset(args.count, MediumSpec(args.medium, args.phi, args.corr_length),
                        MaskSpec(args.mask, args.mask_size, args.mask_count,
                                 args.random_placement),
                        args.seed, args.out, args.size)
    print(f"wrote {man.count} pairs ({len(man.train)} train / {len(man.test)} test) "
          f"to {args.out}")
    return 0


def cmd_stats(args) -> int:
    img = load_image(args.image)
    text = curves_to_csv(descriptor_suite(img, args.phase, args.direction, args.r_max).values())
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    from porogen.models import NetConfig
    from porogen.objective import LossWeights
    from porogen.synthdata import load_dataset
    from porogen.train import TrainConfig, train

    ds = load_dataset(args.data)
    conds, targets = ds.subset("train")
    netcfg = NetConfig(image_size=ds.manifest.size, base_channels=args.base_channels,
                       n_z=args.nz, max_channels=args.max_channels)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      weights=LossWeights(args.lambda_l1, args.lambda_pattern,
                                          args.lambda_porosity),
                      template=args.template, seed=args.seed,
                      checkpoint_every=args.checkpoint_every, base_lr=args.lr,
                      decay_start=args.decay_start, non_saturating=args.non_saturating,
                      l1_reduction=args.l1_reduction)
    res = train(conds, targets, netcfg, cfg, out_dir=args.out)
    last = res.log[-1] if res.log else {}
    print(f"trained {res.steps} steps; checkpoint {Path(args.out) / 'checkpoint.pgn'}")
    if last:
        print("final losses: " + ", ".join(f"{k}={last[k]:.6g}" for k in
                                           ("d_loss", "g_adv", "l1", "pattern", "porosity")))
    return 0


def cmd_reconstruct(args) -> int:
    from porogen.train import reconstruct

    cond = _load_cond(args)
    rec = reconstruct(args.checkpoint, cond, args.count, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(rec.images):
        save_image(img, out / f"realization_{i:03d}.pgm")
    meta = {"count": args.count, "seed": args.seed, "checkpoint": str(args.checkpoint),
            "fidelity_pre_overwrite": rec.fidelity_pre}
    _write(out / "reconstruct_meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    _write(out / "timing.json", json.dumps({"seconds": rec.seconds}, indent=2) + "\n")
    print(f"wrote {args.count} realizations to {out}")
    return 0


def cmd_anneal(args) -> int:
    from porogen.anneal import AnnealConfig, TargetStats, anneal_reconstruct, trace_to_csv

    cond = _load_cond(args)
    target = load_image(args.target)
    cfg = AnnealConfig(initial_temperature=args.temperature, cooling=args.cooling,
                       sweeps=args.sweeps, w_s2=args.w_s2, template=args.template,
                       seed=args.seed)
    stats = TargetStats.from_image(target, args.template,
                                   args.s2_r_max if args.w_s2 > 0 else None)
    res = anneal_reconstruct(cond, stats, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(res.image, out / "anneal.pgm")
    _write(out / "energy_trace.csv", trace_to_csv(res.trace))
    print(f"energy {res.initial_energy:.6g} -> {res.final_energy:.6g} "
          f"({res.accepted} moves accepted)")
    return 0


def cmd_eval(args) -> int:
    from porogen.report import evaluate

    cond = _load_cond(args)
    target = load_image(args.target)
    if target.shape != cond.shape:
        raise UsageError(f"target {target.shape} and input {cond.shape} differ in shape")
    directions = tuple(d.strip() for d in args.directions.split(",") if d.strip())
    bad = [d for d in directions if d not in DIRECTIONS]
    if bad or not directions:
        raise UsageError(f"--directions must list some of {DIRECTIONS}, got {args.directions!r}")
    if args.checkpoint:
        from porogen.train import reconstruct

        rec = reconstruct(args.checkpoint, cond, args.realizations, args.seed)
        images, pre, seconds = rec.images, rec.fidelity_pre, rec.seconds
    else:
        images, pre, seconds = [load_image(p) for p in args.images], None, None
    report = evaluate(images, cond, target, pre, seconds, directions, args.r_max)
    out = Path(args.out)
    _write(out / "report.json", report.to_json())
    _write(out / "curves.csv", report.curves_csv())
    if seconds:
        _write(out / "timing.json", report.timing_json())
    for line in report.summary_lines():
        print(line)
    return 0


def cmd_plot(args) -> int:
    from porogen.report import realization_curves, svg_plot

    target = load_image(args.target)
    images = [load_image(p) for p in args.images]
    for p, img in zip(args.images, images):
        if img.shape != target.shape:
            raise UsageError(f"{p}: shape {img.shape} differs from target {target.shape}")
    svg, gap = svg_plot(realization_curves([target], (args.direction,), args.r_max)[0],
                        realization_curves(images, (args.direction,), args.r_max))
    _write(Path(args.out), svg)
    print(f"max gap between average and target: {gap:.6g}")
    return 0


COMMANDS = {"synth": cmd_synth, "stats": cmd_stats, "train": cmd_train,
            "reconstruct": cmd_reconstruct, "anneal": cmd_anneal, "eval": cmd_eval,
            "plot": cmd_plot}


def main(argv=None) -> int:
    from porogen.train import NumericalError

    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"porogen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"porogen: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, PGMError) as exc:
        print(f"porogen: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"porogen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
