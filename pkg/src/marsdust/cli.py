"""Command-line surface: estimate-phi, synth, train, remove, eval.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.  Inputs are
never mutated; outputs land only under the --out / --manifest paths.
Verbosity comes from MARSDUST_LOG (error|warn|info|debug) or --verbose.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .degrade import (
    ALPHA_SET,
    DatasetManifest,
    Reflexivity,
    estimate_reflexivity,
    generate_pairs,
)
from .errors import (
    DecodeError,
    EstimationError,
    ManifestError,
    MarsdustError,
    ValidationError,
    WeightsFormatError,
)
from .metrics import corpus_report
from .raster import load_image, save_image
from .restore import RestoreMethod, remove_dust
from .tinynet import NetConfig, TrainConfig, train

logger = logging.getLogger(__name__)

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="marsdust", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("estimate-phi", help="estimate dust reflexivity from heavy-dust patches")
    p.add_argument("--patches", required=True, help="directory of patch PNGs, or a JSON list of paths")
    p.add_argument("--out", required=True, help="output phi.json")
    common(p)

    p = sub.add_parser("synth", help="synthesize dusty counterparts for clean images")
    p.add_argument("--clean", required=True)
    p.add_argument("--phi", required=True)
    p.add_argument("--maps", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)
    common(p)

    p = sub.add_parser("train", help="train the restoration network on a pair manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--out", required=True)
    common(p)

    p = sub.add_parser("remove", help="remove dust from a directory of images")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--method", required=True,
                   choices=["analytic-known", "analytic-est", "learned"])
    p.add_argument("--weights")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    common(p)

    p = sub.add_parser("eval", help="dust-index / PSNR / SSIM report over image sets")
    p.add_argument("--sets", required=True, help="label=dir[,label=dir...]")
    p.add_argument("--pairs")
    p.add_argument("--out", required=True)
    common(p)

    return parser


def _setup_logging(verbose: bool):
    env = os.environ.get("MARSDUST_LOG", "").lower()
    level = _LOG_LEVELS.get(env, logging.DEBUG if verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_patches(source: str):
    path = Path(source)
    if path.is_dir():
        files = sorted(path.glob("*.png"))
    else:
        try:
            listed = json.loads(path.read_text())
        except OSError as exc:
            raise DecodeError(f"cannot read patch list {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{source}: patch list is not valid JSON ({exc})") from exc
        if not isinstance(listed, list):
            raise ValidationError(f"{source}: patch list JSON must be an array of paths")
        files = [Path(p) for p in listed]
    if not files:
        raise ValidationError(f"no patches found in {source}")
    return [load_image(p) for p in files]


def _cmd_estimate_phi(args) -> int:
    phi = estimate_reflexivity(_load_patches(args.patches))
    Path(args.out).write_text(
        json.dumps({"phi": list(phi.phi), "channels": len(phi.phi)}, indent=2) + "\n"
    )
    print(f"wrote {args.out}: phi = {[round(v, 4) for v in phi.phi]}")
    return 0


def _read_phi(path) -> Reflexivity:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DecodeError(f"cannot read phi file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if "phi" not in obj:
        raise ValidationError(f"{path}: missing 'phi' key")
    return Reflexivity(tuple(float(v) for v in obj["phi"]))


def _cmd_synth(args) -> int:
    phi = _read_phi(args.phi)
    manifest = generate_pairs(
        args.clean,
        phi,
        maps_per_image=args.maps,
        alpha_set=ALPHA_SET,
        seed=args.seed,
        out_dir=args.out,
        jobs=args.jobs,
    )
    manifest.save(args.manifest)
    print(f"wrote {len(manifest.records)} pairs to {args.out} (manifest {args.manifest})")
    return 0


def _cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    cfg = TrainConfig(
        patch=args.patch, batch=args.batch, lr=args.lr, epochs=args.epochs, seed=args.seed
    )
    if args.jobs != 1:
        raise ValidationError("train is single-threaded; rerun with --jobs 1")
    net = NetConfig(base_width=args.width)
    report = train(cfg, net, manifest, args.out)
    print(
        f"wrote {args.out}: first-epoch loss {report.epoch_losses[0]:.5f}, "
        f"final {report.epoch_losses[-1]:.5f}"
    )
    return 0


def _cmd_remove(args) -> int:
    variant = {"analytic-est": "analytic-estimated"}.get(args.method, args.method)
    if variant == "learned" and not args.weights:
        raise ValidationError("--method learned requires --weights")
    method = RestoreMethod(variant, weights_path=args.weights)
    records = {}
    if variant == "analytic-known":
        if not args.manifest:
            raise ValidationError("--method analytic-known requires --manifest")
        records = DatasetManifest.load(args.manifest).by_dusty_name()
    in_dir = Path(args.in_dir)
    paths = sorted(in_dir.glob("*.png"))
    if not paths:
        raise ValidationError(f"no PNG images found in {in_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(path: Path):
        record = None
        if variant == "analytic-known":
            record = records.get(path.name)
            if record is None:
                raise ValidationError(f"no manifest record for {path.name}")
        restored = remove_dust(load_image(path), method, record)
        save_image(restored, out_dir / path.name, bit_depth=8)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(one, paths))
    else:
        for path in paths:
            one(path)
    print(f"restored {len(paths)} images into {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    sets = {}
    for piece in args.sets.split(","):
        if "=" not in piece:
            raise ValidationError(f"--sets entries must be label=dir, got {piece!r}")
        label, directory = piece.split("=", 1)
        sets[label.strip()] = directory.strip()
    pairs = DatasetManifest.load(args.pairs) if args.pairs else None
    report = corpus_report(sets, pairs, jobs=args.jobs)
    Path(args.out).write_text(report.to_json() + "\n")
    print(report.to_table())
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "estimate-phi": _cmd_estimate_phi,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "remove": _cmd_remove,
    "eval": _cmd_eval,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _setup_logging(args.verbose)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, EstimationError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, DecodeError, ManifestError, WeightsFormatError) as exc:
        logger.error("%s", exc)
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except MarsdustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
