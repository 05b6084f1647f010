"""Command-line entry point wiring generation, downscaling, homology,
training, evaluation, statistics, and slice export into seeded, reproducible
commands.

Every command that populates an output directory drops a run_record.json
there describing how the artifacts were produced (command line, resolved
config, master seed, tool version, timestamps).  Exit codes are per error
class: 3 placement failure, 4 format error, 5 cell-budget, 6 partial
per-sample failures without --allow-partial, 7 label range, 1 other errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .betti import BettiVector
from .downscale import DownscaleConfig, DownscaleMode, apply as downscale_apply, binarize
from .errors import CellBudgetError, GridFormatError, LabelRangeError, PlacementError, ToxelError
from .generator import GenConfig, generate_batch, read_manifest
from .grid4 import Grid4, GridDType, equally_spaced_indices, read as read_grid
from .homology import (
    DEFAULT_CELL_BUDGET,
    AgreementReport,
    agreement,
    beta0_unionfind,
    beta3_duality,
    betti_reduction,
    build_complex,
)
from . import cnn4d

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PLACEMENT = 3
EXIT_FORMAT = 4
EXIT_CAPACITY = 5
EXIT_PARTIAL = 6
EXIT_LABEL = 7


def _default_jobs() -> int:
    return int(os.environ.get("TOXEL4D_JOBS", "1"))


class RunRecord:
    """Provenance sidecar for an artifact directory."""

    def __init__(self, out_dir: Path, argv: list, config: dict, master_seed=None):
        self.out_dir = Path(out_dir)
        clean = {
            k: v if isinstance(v, (str, int, float, bool, list, tuple, type(None))) else str(v)
            for k, v in config.items()
            if not callable(v)
        }
        self.payload = {
            "command": argv,
            "config": clean,
            "master_seed": master_seed,
            "version": __version__,
            "started": datetime.now(timezone.utc).isoformat(),
            "finished": None,
        }

    def finish(self) -> None:
        self.payload["finished"] = datetime.now(timezone.utc).isoformat()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "run_record.json").write_text(json.dumps(self.payload, indent=1))


def _emit(obj: dict, as_json: bool, text_lines) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _report_dict(report: AgreementReport, extra: dict | None = None) -> dict:
    out = report.as_dict()
    if extra:
        out.update(extra)
    return out


def _report_lines(report: AgreementReport):
    per = " ".join(f"{v:.2f}" for v in report.per_beta)
    yield f"samples        {report.count}"
    yield f"per-beta %     {per}"
    yield f"combined %     {report.combined:.2f}"
    yield f"complete %     {report.complete_match:.2f}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args, argv) -> int:
    config = GenConfig(
        grid_size=args.size,
        min_holes=args.min_holes,
        max_holes=args.max_holes,
        spacing=args.spacing,
        boundary_margin=args.boundary_margin,
        a_min=args.a_min,
        a_max=args.a_max,
        kind_weights=tuple(args.kind_weights),
        max_placement_attempts=args.max_attempts,
    )
    record = RunRecord(args.out, argv, vars(args) | {"resolved": str(config)}, args.seed)
    result = generate_batch(
        args.seed, args.count, config, args.out, jobs=args.jobs, retries=args.retries
    )
    record.finish()
    print(f"wrote {len(result.entries)} samples to {result.out_dir}")
    if result.failures:
        for index, attempts in result.failures:
            print(f"sample {index}: placement failed after {attempts} attempts", file=sys.stderr)
        if not args.allow_partial:
            return EXIT_PLACEMENT
    return EXIT_OK


def cmd_downscale(args, argv) -> int:
    grid = read_grid(args.infile)
    config = DownscaleConfig(
        mode=DownscaleMode(args.mode), factor=args.factor, threshold=args.threshold
    )
    downscale_apply(config, grid).write(args.out)
    return EXIT_OK


def cmd_homology(args, argv) -> int:
    grid = read_grid(args.infile)
    complex_ = build_complex(grid)
    chi = complex_.euler_characteristic
    if args.method == "reduction":
        bv = betti_reduction(complex_, cell_budget=args.cell_budget)
        betti = list(bv.astuple())
    else:
        betti = [beta0_unionfind(grid), None, None, beta3_duality(grid)]
    obj = {"betti": betti, "euler": chi, "method": args.method, "cells": complex_.total_cells}
    _emit(
        obj,
        args.json,
        [" ".join("?" if b is None else str(b) for b in betti), f"chi {chi}"],
    )
    return EXIT_OK


def cmd_stats(args, argv) -> int:
    truth = [betti for _, _, betti in read_manifest(args.truth)]
    pred = [betti for _, _, betti in read_manifest(args.pred)]
    report = agreement(truth, pred)
    _emit(_report_dict(report), args.json, _report_lines(report))
    return EXIT_OK


def cmd_analyze(args, argv) -> int:
    rows = read_manifest(args.manifest)
    mode = DownscaleMode(args.mode)
    labels, computed = [], []
    excluded = 0
    for grid_path, _label_path, betti in rows:
        grid = read_grid(grid_path)
        if args.factor > 1:
            config = DownscaleConfig(mode=mode, factor=args.factor, threshold=None)
            grid = downscale_apply(config, grid)
        if grid.dtype is GridDType.FLOAT32:
            grid = binarize(grid, args.threshold)
        try:
            computed.append(betti_reduction(grid, cell_budget=args.cell_budget))
            labels.append(betti)
        except CellBudgetError as exc:
            excluded += 1
            print(f"{grid_path.name}: {exc}", file=sys.stderr)
    if not labels:
        print("no samples analyzed", file=sys.stderr)
        return EXIT_CAPACITY
    report = agreement(labels, computed)
    extra = {"excluded": excluded, "mode": mode.value, "factor": args.factor}
    _emit(
        _report_dict(report, extra),
        args.json,
        list(_report_lines(report)) + [f"excluded       {excluded}"],
    )
    if args.out:
        record = RunRecord(args.out, argv, vars(args))
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "analysis.json").write_text(
            json.dumps(_report_dict(report, extra), sort_keys=True, indent=1)
        )
        record.finish()
    if excluded and not args.allow_partial:
        return EXIT_PARTIAL
    return EXIT_OK


def _to_gray(plane: np.ndarray, dtype: GridDType, invert: bool) -> np.ndarray:
    values = np.asarray(plane, dtype=np.float64)
    if dtype is GridDType.BINARY8:
        values = values  # already 0/1
    if invert:
        values = 1.0 - values
    return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)


def _write_pgm(path: Path, image: np.ndarray) -> None:
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode())
        fh.write(image.tobytes())


def cmd_slice(args, argv) -> int:
    grid = read_grid(args.infile)
    axis = args.axis
    if not 0 <= axis <= 3:
        raise ValueError(f"axis must be 0..3, got {axis}")
    if args.indices:
        indices = [int(v) for v in args.indices.split(",")]
    else:
        indices = equally_spaced_indices(grid.dims[axis], args.count)
    out_dir = Path(args.out)
    record = RunRecord(out_dir, argv, vars(args))
    out_dir.mkdir(parents=True, exist_ok=True)
    remaining = [a for a in range(4) if a != axis]
    names = "xyzw"
    written = 0
    for pos, index in enumerate(indices):
        block = grid.slice3(axis, index)  # axes `remaining`, in original order
        depth_axis = remaining[-1]
        for j in range(grid.dims[depth_axis]):
            plane = block[:, :, j]
            image = _to_gray(plane.T, grid.dtype, args.invert)  # rows: 2nd axis
            name = f"s{names[axis]}{pos:03d}_i{index:03d}_{names[depth_axis]}{j:03d}.pgm"
            _write_pgm(out_dir / name, image)
            written += 1
    record.finish()
    print(f"wrote {written} images to {out_dir}")
    return EXIT_OK


_PRESETS = {
    "paper": (
        cnn4d.CNNConfig(input_size=32, conv_channels=(8, 16, 32, 64)),
        cnn4d.TrainConfig(epochs=200, batch_size=192, lr_drop_epochs=(160, 190)),
    ),
    "desk": (
        cnn4d.CNNConfig(input_size=16, conv_channels=(8, 16)),
        cnn4d.TrainConfig(
            epochs=60, batch_size=16, lr_drop_epochs=cnn4d.proportional_drop_epochs(60)
        ),
    ),
}


def cmd_train(args, argv) -> int:
    cnn_config, train_config = _PRESETS[args.preset]
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
        overrides["lr_drop_epochs"] = cnn4d.proportional_drop_epochs(args.epochs)
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["lr"] = args.lr
    if args.split is not None:
        overrides["split"] = tuple(float(v) for v in args.split.split(","))
    overrides["augment"] = not args.no_augment
    overrides["seed"] = args.seed
    train_config = replace(train_config, **overrides)
    if args.input_size is not None or args.channels is not None:
        cnn_config = replace(
            cnn_config,
            input_size=args.input_size or cnn_config.input_size,
            conv_channels=(
                tuple(int(c) for c in args.channels.split(","))
                if args.channels
                else cnn_config.conv_channels
            ),
        )
    record = RunRecord(
        args.out,
        argv,
        {"cnn": str(cnn_config), "train": str(train_config), "mode": args.mode},
        args.seed,
    )
    result = cnn4d.train(
        args.manifest,
        cnn_config,
        train_config,
        mode=DownscaleMode(args.mode),
        out_dir=args.out,
        log=lambda entry: print(json.dumps(entry)),
    )
    record.finish()
    if len(result.split[2]):
        report = cnn4d.evaluate(
            result.net, args.manifest, DownscaleMode(args.mode), indices=result.split[2]
        )
        print("held-out test agreement:")
        for line in _report_lines(report):
            print(f"  {line}")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    net, _ = cnn4d.load_checkpoint(args.checkpoint)
    report = cnn4d.evaluate(net, args.manifest, DownscaleMode(args.mode))
    _emit(_report_dict(report), args.json, _report_lines(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxel4d",
        description="Synthetic 4D datasets with known topology, exact Betti numbers, "
        "downscaling, and a small 4D CNN.",
    )
    parser.add_argument("--version", action="version", version=f"toxel4d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled dataset")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--min-holes", type=int, default=1)
    p.add_argument("--max-holes", type=int, default=48)
    p.add_argument("--spacing", type=float, default=6.5)
    p.add_argument("--boundary-margin", type=float, default=1.0)
    p.add_argument("--a-min", type=float, default=2.4)
    p.add_argument("--a-max", type=float, default=6.4)
    p.add_argument("--kind-weights", type=lambda s: [float(v) for v in s.split(",")],
                   default=[1.0, 1.0, 1.0, 1.0])
    p.add_argument("--max-attempts", type=int, default=2000)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("downscale", help="reduce one grid file")
    p.add_argument("--mode", choices=["stride", "avgpool"], required=True)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_downscale)

    p = sub.add_parser("homology", help="Betti numbers of one grid file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--method", choices=["reduction", "duality"], default="reduction")
    p.add_argument("--cell-budget", type=int, default=DEFAULT_CELL_BUDGET)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_homology)

    p = sub.add_parser("stats", help="agreement report between two manifests")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("analyze", help="downscale a dataset and compare homology to labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["stride", "avgpool"], default="stride")
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--cell-budget", type=int, default=DEFAULT_CELL_BUDGET)
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("slice", help="export grayscale slice images")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--axis", type=int, default=3)
    p.add_argument("--count", type=int, default=18)
    p.add_argument("--indices", default=None, help="comma-separated explicit indices")
    p.add_argument("--invert", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("train", help="train the Betti estimator CNN")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["stride", "avgpool"], default="stride")
    p.add_argument("--preset", choices=["paper", "desk"], default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--input-size", type=int, default=None)
    p.add_argument("--channels", default=None, help="comma-separated stage channels")
    p.add_argument("--split", default=None, help="train,val,test fractions")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["stride", "avgpool"], default="stride")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, ["toxel4d"] + argv)
    except PlacementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLACEMENT
    except GridFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except CellBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except LabelRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LABEL
    except (ToxelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
