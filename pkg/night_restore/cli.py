"""Command-line entry point.

Commands: ``synth``, ``verify``, ``restore``, ``eval``, ``train-toy`` and
``ablate-grid``. Logs and progress go to standard error; machine-readable
results go to standard output. Exit codes are 0 on success, 1 on usage errors
and 2 on data errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .constants import DEFAULT_VARIATION, EXPOSURE_RANGE, GRID_STEP, PATCH_SIZE, SAMPLING_STEPS
from .diffcore import build_schedule
from .errors import NightRestoreError
from .guidednet import TrainingConfig, TrainingResult, illumination_ablation, load_model, save_model, train_toy
from .manifest import MANIFEST_NAME
from .metrics import evaluate_directories
from .pipeline import (
    RestoreConfig,
    SynthesisConfig,
    model_denoiser,
    oracle_denoiser,
    restore_directory,
    synthesize_dataset,
    verify_manifest,
)
from .tiler import grid_step_ablation, probe_target
from .toyset import TOY_SIZE, make_toy_dataset, triples_from_manifest
from .weathersynth import DegradationKind

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

ORACLE_PREFIX = "oracle:"


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SynthesisConfig(kind=args.kind, seed=args.seed, count=args.count,
                             exposure_range=tuple(args.exposure_range), variation=args.variation,
                             beta=args.beta, density=args.density, jobs=args.jobs)
    manifest = synthesize_dataset(args.input_dir, args.output_dir, config)
    print(json.dumps({"images": len(manifest.entries), "manifest": str(Path(args.output_dir) / MANIFEST_NAME)},
                     sort_keys=True))
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    mismatched = verify_manifest(args.manifest)
    for path in mismatched:
        print(path)
    return EXIT_DATA if mismatched else EXIT_OK


def _cmd_restore(args: argparse.Namespace, parser: ArgumentParser) -> int:
    sched = build_schedule()
    if args.denoiser is not None:
        if not args.denoiser.startswith(ORACLE_PREFIX):
            parser.error(f"--denoiser must look like {ORACLE_PREFIX}<clean_dir>")
        factory = oracle_denoiser(args.denoiser[len(ORACLE_PREFIX):], sched)
    else:
        factory = model_denoiser(load_model(args.model))
    config = RestoreConfig(args.patch, args.grid_step, args.steps, args.seed, args.jobs)
    written = restore_directory(args.input_dir, args.output_dir, factory, config, sched)
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_directories(args.pred_dir, args.gt_dir)
    for line in report.to_lines():
        print(line)
    print(report.to_table(), file=sys.stderr)
    return EXIT_OK


def _write_trace(path: Path, result: TrainingResult) -> None:
    lines = [json.dumps({"loss": loss, "smoothed": float(smooth), "step": step}, sort_keys=True)
             for step, (loss, smooth) in enumerate(zip(result.trace, result.smoothed))]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_train_toy(args: argparse.Namespace) -> int:
    if args.manifest is not None:
        dataset = triples_from_manifest(args.manifest, args.size)
    else:
        dataset = make_toy_dataset(args.count, args.size, args.seed)
    config = TrainingConfig(steps=args.steps, learning_rate=args.lr, seed=args.seed)
    if args.ablate:
        ablation = illumination_ablation(dataset, config)
        result = ablation.guided
        guided, unguided = ablation.final_losses
        summary = {"final_loss": guided, "final_loss_without_illumination": unguided}
    else:
        result = train_toy(dataset, config)
        summary = {"final_loss": result.trace[-1]}
    save_model(args.out_model, result.architecture, result.theta)
    if args.trace is not None:
        _write_trace(args.trace, result)
    summary.update(initial_loss=result.trace[0], final_smoothed=float(result.smoothed[-1]), steps=len(result.trace))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_ablate_grid(args: argparse.Namespace) -> int:
    rows = grid_step_ablation(probe_target(args.size), args.grid_steps, build_schedule(), args.patch,
                              args.steps, args.seed, args.strength)
    for row in rows:
        print(json.dumps({"psnr": row.psnr, "seam": row.seam, "step": row.step}, sort_keys=True))
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="night-restore", description="Weather-and-darkness synthesis and restoration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    synth = sub.add_parser("synth", help="degrade a folder of clean PNGs and write a manifest")
    synth.add_argument("input_dir", type=Path)
    synth.add_argument("output_dir", type=Path)
    synth.add_argument("--kind", required=True, choices=[k.value for k in DegradationKind])
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--count", type=int, default=None, help="use only the first COUNT images")
    synth.add_argument("--exposure-range", type=float, nargs=2, default=list(EXPOSURE_RANGE),
                       metavar=("LOW", "HIGH"))
    synth.add_argument("--variation", type=float, default=DEFAULT_VARIATION, help="per-pixel darkening variation")
    synth.add_argument("--beta", type=float, default=None, help="fixed extinction coefficient")
    synth.add_argument("--density", type=float, default=None, help="fixed particle density")
    synth.add_argument("--jobs", type=int, default=1)

    verify = sub.add_parser("verify", help="regenerate a manifest and compare bytes")
    verify.add_argument("manifest", type=Path)

    restore = sub.add_parser("restore", help="restore a folder of degraded PNGs")
    restore.add_argument("input_dir", type=Path)
    restore.add_argument("output_dir", type=Path)
    which = restore.add_mutually_exclusive_group(required=True)
    which.add_argument("--model", type=Path, help="trained model file")
    which.add_argument("--denoiser", help="oracle:<clean_dir> for harness runs")
    restore.add_argument("--patch", type=int, default=PATCH_SIZE)
    restore.add_argument("--grid-step", type=int, default=GRID_STEP)
    restore.add_argument("--steps", type=int, default=SAMPLING_STEPS)
    restore.add_argument("--seed", type=int, default=0)
    restore.add_argument("--jobs", type=int, default=1)

    evaluate = sub.add_parser("eval", help="PSNR and SSIM of matched PNG folders")
    evaluate.add_argument("pred_dir", type=Path)
    evaluate.add_argument("gt_dir", type=Path)

    train = sub.add_parser("train-toy", help="train the toy denoiser")
    train.add_argument("--manifest", type=Path, default=None, help="crop training triples from a manifest")
    train.add_argument("--count", type=int, default=64, help="procedural examples when no manifest is given")
    train.add_argument("--size", type=int, default=TOY_SIZE)
    train.add_argument("--steps", type=int, default=500)
    train.add_argument("--lr", type=float, default=0.05)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out-model", type=Path, required=True)
    train.add_argument("--trace", type=Path, default=None, help="JSON-lines loss trace")
    train.add_argument("--ablate", action="store_true", help="also train without illumination injection")

    grid = sub.add_parser("ablate-grid", help="seam score and PSNR per grid step")
    grid.add_argument("--grid-steps", type=int, nargs="+", default=[16, 32, 64])
    grid.add_argument("--size", type=int, default=128)
    grid.add_argument("--patch", type=int, default=PATCH_SIZE)
    grid.add_argument("--steps", type=int, default=SAMPLING_STEPS)
    grid.add_argument("--seed", type=int, default=0)
    grid.add_argument("--strength", type=float, default=1.0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    commands = {
        "synth": _cmd_synth,
        "verify": _cmd_verify,
        "restore": lambda a: _cmd_restore(a, parser),
        "eval": _cmd_eval,
        "train-toy": _cmd_train_toy,
        "ablate-grid": _cmd_ablate_grid,
    }
    try:
        return commands[args.command](args)
    except (NightRestoreError, OSError) as e:
        logger.error("%s", e)
        return EXIT_DATA
