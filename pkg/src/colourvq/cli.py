"""Command-line entry point: convert, train, eval, lesion, codes, stats, report.

Every ``cmd_*`` function can also be called directly; they return the paths
they wrote. Log verbosity comes from the ``COLOURVQ_LOG`` environment
variable (a :mod:`logging` level name, default ``WARNING``).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis as A
from .config import ConfigError, format_config, load_config
from .data import DatasetSpec, decode_image, load_dataset, ppm_bytes, save_png
from .io_utils import (
    RAW_MAGIC,
    atomic_write_bytes,
    atomic_write_text,
    read_raw_image,
    write_raw_image,
)
from .metrics import to_lab
from .spaces import ColourSpace, ImageBuffer, channel_correlations, convert_image
from .vqvae import (
    CheckpointError,
    TrainingLog,
    build_model,
    inspect_checkpoint,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("colourvq")


class UsageError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# convert


def read_image_file(path, space=None) -> ImageBuffer:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == RAW_MAGIC:
        img = read_raw_image(path)
        if space is not None and ColourSpace.parse(space) != img.space:
            raise UsageError(f"{path} holds {img.space.short_name} data, not {space}")
        return img
    img = decode_image(path)
    if space is not None and ColourSpace.parse(space) != ColourSpace.SRGB:
        raise UsageError(f"{path} is an 8-bit image and can only be read as rgb")
    return img


def cmd_convert(in_path, src, dst, out_path) -> list[Path]:
    """Convert an image file between colour spaces.

    sRGB results go to PNG/PPM when ``out_path`` has that suffix. Any other
    space is written in the raw float format with a clamped sRGB preview next
    to it (``<out>.preview.png``).
    """
    try:
        src = ColourSpace.parse(src) if src is not None else None
        dst = ColourSpace.parse(dst)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    img = read_image_file(in_path, src)
    out = convert_image(img, dst)
    out_path = Path(out_path)
    if dst == ColourSpace.SRGB and out_path.suffix.lower() in (".png", ".ppm"):
        if out_path.suffix.lower() == ".png":
            save_png(out_path, out)
        else:
            atomic_write_bytes(out_path, ppm_bytes(out))
        return [out_path]
    write_raw_image(out_path, out)
    preview = out_path.with_name(out_path.name + ".preview.png")
    save_png(preview, out)
    return [out_path, preview]


# --------------------------------------------------------------------------
# train / eval


def cmd_train(config_path) -> list[Path]:
    run = load_config(config_path)
    images = load_dataset(run.dataset)
    model = build_model(run.model)
    log.info("training %s on %d images for %d epochs", run.model.name, len(images), run.model.epochs)
    training_log = train(model, images)
    out = run.output_dir
    written = [out / "model.vqcc", out / "training_log.csv", out / "config.txt"]
    save_checkpoint(model, written[0])
    training_log.write_csv(written[1])
    atomic_write_text(written[2], format_config(run))
    if run.evaluate:
        written.append(out / "eval.csv")
        atomic_write_text(written[-1], _eval_table([("model.vqcc", model)], images))
    return written


EVAL_FIELDS = ("checkpoint", "conversion", "K", "D", "images", "mean_delta_e", "error", "frequency_std")


def _eval_table(named_models, images) -> str:
    rows = []
    for name, model in named_models:
        de = A.reconstruction_delta_e(model, images)
        hist = A.usage_histogram(model, images)
        cfg = model.config
        rows.append(
            [name, cfg.name, cfg.K, cfg.D, len(images), _fmt(de), _fmt(A.normalised_error(de)), _fmt(hist.frequency_std)]
        )
    return _csv_text(EVAL_FIELDS, rows)


def _dataset_for(model, spec: DatasetSpec | None) -> list[ImageBuffer]:
    side = model.config.image_side
    spec = spec or DatasetSpec(image_side=side)
    if spec.image_side != side:
        raise UsageError(
            f"dataset side {spec.image_side} does not match checkpoint image_side {side}"
        )
    return load_dataset(spec)


def _as_model(model_or_path):
    if isinstance(model_or_path, (str, Path)):
        return load_checkpoint(model_or_path), str(model_or_path)
    return model_or_path, getattr(model_or_path, "name", type(model_or_path).__name__)


def cmd_eval(checkpoints, dataset: DatasetSpec | None, out_path) -> list[Path]:
    """Mean CIEDE2000 per checkpoint, reconstructions compared in the sRGB frame.

    With three or more checkpoints a usage/error scatter with its Pearson r
    is written next to the table (``<out>.usage.csv``).
    """
    named = [_as_model(ck)[::-1] for ck in checkpoints]
    if len({m.config.image_side for _, m in named}) > 1:
        raise UsageError("checkpoints disagree on image side; evaluate them separately")
    images = _dataset_for(named[0][1], dataset)
    out_path = Path(out_path)
    text = _eval_table(named, images)
    atomic_write_text(out_path, text)
    written = [out_path]
    if len(named) >= 3:
        rows = list(csv.DictReader(io.StringIO(text)))
        report = A.usage_error_report(
            [r["checkpoint"] for r in rows],
            [float(r["frequency_std"]) for r in rows],
            [float(r["error"]) for r in rows],
        )
        usage_path = out_path.with_name(out_path.stem + ".usage.csv")
        footer = f"# pearson_r={_fmt(report.r)} degenerate={str(report.degenerate).lower()}\n"
        atomic_write_text(usage_path, report.to_csv() + footer)
        written.append(usage_path)
    return written


# --------------------------------------------------------------------------
# lesion / codes


def cmd_lesion(model_or_path, images, out_dir, top_fraction=0.01, cube_samples=9) -> list[Path]:
    """Silence each codebook vector in turn and write the full report bundle.

    Shifts average over every pixel of every image. The lesion transform is
    fitted on the pooled pixels of all images.
    """
    model, _ = _as_model(model_or_path)
    images = list(images)
    if not images:
        raise UsageError("lesion analysis needs at least one image")
    out = Path(out_dir)
    full_lab = np.concatenate([to_lab(model.reconstruct(x)).reshape(-1, 3) for x in images])

    shifts, reports, written = [], [], []
    for k in range(model.K):
        les_lab = np.concatenate(
            [to_lab(A.lesion_reconstruct(model, x, k)).reshape(-1, 3) for x in images]
        )
        shifts.append(A.chromatic_shift_lab(full_lab, les_lab))
        rep = A.fit_lesion_transform_lab(full_lab, les_lab, top_fraction, vector_index=k)
        reports.append(rep)
        cube_path = out / "cubes" / f"cube_e{k}.csv"
        atomic_write_text(
            cube_path, A.points_csv(A.apply_transform_to_rgb_cube(rep.T, rep.offset, cube_samples))
        )
        code_path = out / "codes" / f"code_{k}.png"
        save_png(code_path, A.single_code_reconstruction(model, k))
        written += [cube_path, code_path]

    base_cube = out / "cubes" / "cube.csv"
    atomic_write_text(base_cube, A.points_csv(A.rgb_cube_lab(cube_samples)))
    files = {
        "shifts.csv": A.shifts_csv(shifts),
        "transforms.csv": A.transforms_csv(reports),
        "shifts.svg": A.shifts_svg(shifts),
        "usage.csv": A.usage_histogram(model, images).to_csv(),
    }
    for name, text in files.items():
        atomic_write_text(out / name, text)
        written.append(out / name)
    return written + [base_cube]


def cmd_codes(model_or_path, out_dir) -> list[Path]:
    """One swatch per codebook vector plus a table of their mean colours."""
    model, _ = _as_model(model_or_path)
    out = Path(out_dir)
    rows, written = [], []
    for k in range(model.K):
        img = A.single_code_reconstruction(model, k)
        path = out / f"code_{k}.png"
        save_png(path, img)
        written.append(path)
        rgb = img.data.reshape(-1, 3).mean(axis=0)
        lab = to_lab(img).reshape(-1, 3).mean(axis=0)
        rows.append([k, *map(_fmt, rgb), *map(_fmt, lab)])
    table = out / "codes.csv"
    atomic_write_text(table, _csv_text(["vector", "r", "g", "b", "L", "a", "b_star"], rows))
    return written + [table]


# --------------------------------------------------------------------------
# stats / report


def cmd_stats(images, spaces, out_path, pixels_per_image=100, seed=0) -> list[Path]:
    rows = []
    for s in spaces:
        rep = channel_correlations(images, s, pixels_per_image, seed)
        rows.append(
            [
                rep.space.short_name,
                _fmt(rep.r01),
                _fmt(rep.r02),
                _fmt(rep.r12),
                _fmt(rep.mean_abs()),
                rep.sample_count,
                ";".join(str(d).lower() for d in rep.degenerate),
            ]
        )
    header = ["space", "r01", "r02", "r12", "mean_abs_r", "samples", "degenerate"]
    atomic_write_text(out_path, _csv_text(header, rows))
    return [Path(out_path)]


REPORT_FIELDS = (
    "run",
    "conversion",
    "epochs",
    "first_mean_delta_e",
    "final_mean_delta_e",
    "improvement",
    "final_total",
    "eval_mean_delta_e",
)


def cmd_report(run_dirs, out_path) -> list[Path]:
    """Aggregate training logs and evaluations of several runs into one CSV."""
    rows = []
    for d in run_dirs:
        d = Path(d)
        cfg = inspect_checkpoint((d / "model.vqcc").read_bytes())
        recs = TrainingLog.from_csv((d / "training_log.csv").read_text()).records
        first = recs[0].mean_delta_e if recs else float("nan")
        last = recs[-1].mean_delta_e if recs else float("nan")
        total = recs[-1].total if recs else float("nan")
        eval_de = ""
        if (d / "eval.csv").exists():
            ev = list(csv.DictReader(io.StringIO((d / "eval.csv").read_text())))
            eval_de = ev[0]["mean_delta_e"] if ev else ""
        rows.append(
            [d.name, cfg.name, len(recs), _fmt(first), _fmt(last), _fmt(first / last if recs else float("nan")), _fmt(total), eval_de]
        )
    atomic_write_text(out_path, _csv_text(REPORT_FIELDS, rows))
    return [Path(out_path)]


# --------------------------------------------------------------------------
# argument parsing


def _add_dataset_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data", metavar="DIR", help="folder of PNG/PPM images")
    g.add_argument("--synthetic", metavar="N", type=int, help="use N seeded Mondrians")
    p.add_argument("--side", type=int, help="image side (defaults to the checkpoint's)")
    p.add_argument("--count", type=int, default=10**9, help="maximum images read from --data")
    p.add_argument("--seed", type=int, default=0, help="dataset seed")


def _dataset_spec(args, side) -> DatasetSpec:
    side = args.side or side
    if args.data:
        return DatasetSpec("directory", side, args.count, args.seed, args.data)
    return DatasetSpec("synthetic", side, args.synthetic or 64, args.seed)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="colourvq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert an image file between colour spaces")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("--from", dest="src", help="source space (raw files carry their own)")
    c.add_argument("--to", dest="dst", required=True, help="destination space")

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("config")

    e = sub.add_parser("eval", help="mean CIEDE2000 of checkpoints")
    e.add_argument("checkpoints", nargs="+")
    e.add_argument("--out", required=True)
    _add_dataset_args(e)

    le = sub.add_parser("lesion", help="per-vector lesion analysis")
    le.add_argument("checkpoint")
    le.add_argument("--out", required=True)
    le.add_argument("--top-fraction", type=float, default=0.01)
    le.add_argument("--cube-samples", type=int, default=9)
    _add_dataset_args(le)

    co = sub.add_parser("codes", help="single-code reconstructions")
    co.add_argument("checkpoint")
    co.add_argument("--out", required=True)

    st = sub.add_parser("stats", help="channel correlations of a dataset")
    st.add_argument("--out", required=True)
    st.add_argument("--spaces", default="rgb,lms,lab,dkl,hsv")
    st.add_argument("--pixels", type=int, default=100)
    _add_dataset_args(st)

    r = sub.add_parser("report", help="aggregate several training runs")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", required=True)
    return p


def _configure_logging():
    level = os.environ.get("COLOURVQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def run(args) -> list[Path]:
    if args.command == "convert":
        return cmd_convert(args.input, args.src, args.dst, args.output)
    if args.command == "train":
        return cmd_train(args.config)
    if args.command == "eval":
        spec = None
        if args.data or args.synthetic or args.side:
            first = load_checkpoint(args.checkpoints[0])
            spec = _dataset_spec(args, first.config.image_side)
        return cmd_eval(args.checkpoints, spec, args.out)
    if args.command == "lesion":
        model = load_checkpoint(args.checkpoint)
        images = _dataset_for(model, _dataset_spec(args, model.config.image_side))
        return cmd_lesion(model, images, args.out, args.top_fraction, args.cube_samples)
    if args.command == "codes":
        return cmd_codes(args.checkpoint, args.out)
    if args.command == "stats":
        spec = _dataset_spec(args, args.side or 32)
        images = load_dataset(spec, resize=not args.data or bool(args.side))
        spaces = [s for s in args.spaces.split(",") if s]
        try:
            spaces = [ColourSpace.parse(s) for s in spaces]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return cmd_stats(images, spaces, args.out, args.pixels, args.seed)
    if args.command == "report":
        return cmd_report(args.runs, args.out)
    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        written = run(args)
    except (UsageError, ConfigError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"colourvq {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
