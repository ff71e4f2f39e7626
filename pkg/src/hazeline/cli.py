"""Command line front end.

Three subcommands cover the working loop: ``synthesize`` renders a
hazy scene with ground truth from a small key/value spec file,
``dehaze`` runs the pipeline on an image, and ``evaluate`` scores a
result against a reference, one pair at a time or over a directory of
scenes.

Exit codes: 0 success, 2 configuration problem, 3 unreadable or
unwritable file, 4 numeric failure inside the pipeline.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from . import metrics
from . import synthesize as syn
from .config import PipelineConfig, mode_from_cli
from .errors import ConfigError, NumericError
from .pipeline import run_dehaze

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazeline",
        description="Single image dehazing via color lines and an airlight field.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dehaze", help="dehaze one image")
    p.add_argument("input", help="hazy input image (png or ppm)")
    p.add_argument("-o", "--output", required=True, help="output image path")
    p.add_argument("--config", help="key/value config file")
    p.add_argument("--patch", type=int, default=None,
                   help="dark channel patch size (odd)")
    p.add_argument("--t0", type=float, default=None,
                   help="transmission floor for recovery")
    p.add_argument("--gamma", type=float, default=None, help="display gamma")
    p.add_argument("--mode", choices=["trans", "airlight"], default=None,
                   help="recovery route: divide by transmission, or subtract "
                        "the interpolated airlight field")
    p.add_argument("--raw-transmission", action="store_const", const=True,
                   default=None, help="skip transmission regularization")
    p.add_argument("--denoise", choices=["none", "median3"], default=None,
                   help="pre-filter applied before estimation stages")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--dump-stages", metavar="DIR", default=None,
                   help="write intermediate maps into DIR")
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("synthesize", help="render a hazy scene with ground truth")
    p.add_argument("spec", help="scene spec file (key: value lines)")
    p.add_argument("-o", "--output-dir", required=True,
                   help="directory for hazy.png, radiance.png, transmission.png")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="score a result against a reference")
    p.add_argument("result", nargs="?", help="image to score")
    p.add_argument("reference", nargs="?", help="ground truth image")
    p.add_argument("--t-est", help="estimated transmission map (16 bit png)")
    p.add_argument("--t-true", help="true transmission map (16 bit png)")
    p.add_argument("--mask-sky", action="store_true",
                   help="restrict the transmission error to non-sky pixels")
    p.add_argument("--peak-255", action="store_true",
                   help="report PSNR against a 255 reference level")
    p.add_argument("--batch", metavar="DIR",
                   help="evaluate every scene directory under DIR")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)
    return parser


def cmd_dehaze(args) -> int:
    config = PipelineConfig()
    if args.config:
        config = PipelineConfig.from_dict(hio.read_keyvalues(args.config))
    config = config.override(
        dcp_patch_size=args.patch,
        t_floor=args.t0,
        gamma=args.gamma,
        mode=mode_from_cli(args.mode) if args.mode else None,
        raw_transmission=args.raw_transmission,
        denoise=args.denoise,
        threads=args.threads,
        seed=args.seed,
    )
    paths = run_dehaze(args.input, args.output, config, args.dump_stages)
    for name in ("dehazed", "transmission", "report"):
        print(f"{name}: {paths[name]}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    values = hio.read_keyvalues(args.spec)
    resolved = syn.resolve_scene_values(values)
    scene = syn.scene_from_spec(values)
    hazy = syn.synthesize_haze(scene)
    t = scene.transmission

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    hio.save_image(out / "hazy.png", hazy)
    hio.save_image(out / "radiance.png", scene.radiance)
    hio.save_scalar_map(out / "transmission.png", t)
    manifest = dict(resolved)
    manifest["transmission_min"] = float(t.min())
    manifest["transmission_max"] = float(t.max())
    hio.write_keyvalues(out / "manifest.txt", manifest)
    for name in ("hazy.png", "radiance.png", "transmission.png", "manifest.txt"):
        print(f"wrote: {out / name}")
    return EXIT_OK


def _score_pair(result_path, reference_path, t_est_path, t_true_path,
                mask_sky, peak) -> dict:
    result = hio.load_image(result_path)
    reference = hio.load_image(reference_path)
    t_est = hio.load_scalar_map(t_est_path) if t_est_path else None
    t_true = hio.load_scalar_map(t_true_path) if t_true_path else None
    mask = None
    if mask_sky:
        if t_true is None:
            raise ConfigError("--mask-sky needs a true transmission map")
        mask = metrics.sky_mask(t_true)
    report = metrics.compare(result, reference, t_est=t_est, t_true=t_true,
                             mask=mask, peak=peak)
    return {k: v for k, v in report.as_dict().items() if v is not None}


def cmd_evaluate(args) -> int:
    peak = 255.0 if args.peak_255 else 1.0
    if args.batch:
        rows = _evaluate_batch(Path(args.batch), args.mask_sky, peak)
    else:
        if not args.result or not args.reference:
            raise ConfigError("evaluate needs a result and a reference, or --batch")
        rows = _score_pair(args.result, args.reference, args.t_est, args.t_true,
                           args.mask_sky, peak)
    if args.output:
        hio.write_keyvalues(args.output, rows)
        print(f"report: {args.output}")
    else:
        for key, value in rows.items():
            print(f"{key}: {hio.format_value(value)}")
    return EXIT_OK


def _evaluate_batch(root: Path, mask_sky: bool, peak: float) -> dict:
    """Score every scene directory under ``root``.

    A scene directory is one that holds a dehazed.png and a radiance.png
    (the layout ``synthesize`` plus ``dehaze -o <dir>/dehazed.png``
    produces).  Transmission maps are scored when both are present.
    Scenes that fail to load are reported and skipped rather than
    aborting the whole batch.
    """
    if not root.is_dir():
        raise OSError(f"not a directory: {root}")
    scene_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not scene_dirs:
        raise ConfigError(f"no scene directories under {root}")

    rows: dict = {}
    sums: dict = {}
    evaluated = 0
    failures = []
    for scene in scene_dirs:
        result = scene / "dehazed.png"
        reference = scene / "radiance.png"
        t_est = scene / "dehazed_transmission.png"
        t_true = scene / "transmission.png"
        try:
            if not result.exists() or not reference.exists():
                raise OSError("missing dehazed.png or radiance.png")
            scores = _score_pair(
                result, reference,
                t_est if t_est.exists() and t_true.exists() else None,
                t_true if t_true.exists() else None,
                mask_sky, peak)
        except (OSError, ValueError, ConfigError) as exc:
            failures.append((scene.name, str(exc)))
            continue
        evaluated += 1
        for key, value in scores.items():
            rows[f"scene.{scene.name}.{key}"] = value
            sums.setdefault(key, []).append(value)
    for key, values in sums.items():
        rows[f"aggregate.{key}"] = float(np.mean(values))
    rows["scenes_evaluated"] = evaluated
    rows["scenes_failed"] = len(failures)
    for name, message in failures:
        rows[f"failed.{name}"] = message
    if evaluated == 0:
        raise OSError(f"no scene under {root} could be evaluated")
    return rows


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"hazeline: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"hazeline: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"hazeline: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"hazeline: invalid value: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
