"""Command-line interface: ``hma <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classify import Prediction, evaluate
from .data import SyntheticSpec, generate_synthetic, load_manifest, load_model, save_manifest, save_model
from .errors import DataError, HMAError, NumericalError, RawFeaturesRequired
from .factor import reconstruct_coefficients
from .features import extract, extract_depth, load_image, resize_image, save_image
from .grbf import synthesis_mse, synthesize_view
from .infer import InferenceConfig
from .manifold import PoseAngles
from .pipeline import TrainOptions, evaluate_records, infer_record, train

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


# -- output -------------------------------------------------------------------


class Output:
    """Aligned text tables or line-delimited JSON records on stdout."""

    def __init__(self, fmt: str, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout

    def record(self, kind: str, fields: dict):
        if self.fmt == "records":
            print(json.dumps({"type": kind, **fields}, sort_keys=True, default=_jsonable), file=self.stream)
        else:
            width = max((len(k) for k in fields), default=0)
            print(f"[{kind}]", file=self.stream)
            for k, v in fields.items():
                print(f"  {k:<{width}}  {_fmt(v)}", file=self.stream)

    def table(self, kind: str, rows: list, columns: list):
        if self.fmt == "records":
            for row in rows:
                self.record(kind, {c: row[c] for c in columns})
            return
        cells = [[_fmt(row[c]) for c in columns] for row in rows]
        widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
        print("  ".join(c.ljust(w) for c, w in zip(columns, widths)), file=self.stream)
        for r in cells:
            print("  ".join(v.ljust(w) for v, w in zip(r, widths)), file=self.stream)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialize {type(v)}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in v)
    return str(v)


def _append_run_record(path, argv, config: dict, seed, wall, metrics: dict):
    rec = {"command": argv, "config": config, "seed": seed, "wall_time_s": round(wall, 6), "metrics": metrics}
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")


# -- argument helpers -----------------------------------------------------------


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _d_s(text):
    if text == "full":
        return "full"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("d_s must be an integer or 'full'") from None


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $HMA_THREADS or 1)")
    p.add_argument("--output-format", choices=("text", "records"), default="text")
    p.add_argument("--run-log", type=Path, help="append one JSON run record to this file")


def _kernel_flags(p):
    p.add_argument("--centers", type=int, default=35, help="number of mapping centers M")
    p.add_argument("--basis", choices=("thin_plate_spline", "gaussian", "multiquadric"),
                   default="thin_plate_spline")
    p.add_argument("--width", type=float, default=1.0, help="gaussian width / multiquadric shape")
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--no-polynomial", action="store_true", help="drop the polynomial part (gaussian only)")
    p.add_argument("--d-s", type=_d_s, default="full", help="style dimensionality or 'full'")


def _inference_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with inference settings")
    p.add_argument("--iterations", type=int)
    p.add_argument("--sigma", help="likelihood width or 'auto'")
    p.add_argument("--particles", type=int, dest="viewpoint_count", help="viewpoint samples L")
    p.add_argument("--std-style", type=float, dest="resample_std_style")
    p.add_argument("--std-angle", type=float, dest="resample_std_angle_deg", help="degrees")
    p.add_argument("--decay", type=float)
    p.add_argument("--oracle", action="store_true", help="exhaustive grid search instead of sampling")
    p.add_argument("--resolution", type=float, default=1.0, help="oracle grid step in degrees")
    p.add_argument("-k", type=int, default=1, help="neighbours for label voting")


def _inference_config(args) -> InferenceConfig:
    values = {}
    if args.config is not None:
        try:
            values.update(json.loads(args.config.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read inference config {args.config}: {exc}") from None
    for key in ("iterations", "sigma", "viewpoint_count", "resample_std_style", "resample_std_angle_deg", "decay"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if "resample_std_angle_deg" in values:
        values["resample_std_angle"] = math.radians(float(values.pop("resample_std_angle_deg")))
    if "sigma" in values and values["sigma"] != "auto":
        values["sigma"] = float(values["sigma"])
    values["seed"] = args.seed
    try:
        return InferenceConfig(**values)
    except TypeError as exc:
        raise UsageError(f"bad inference setting: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("HMA_THREADS")
    return max(1, int(env)) if env and env.isdigit() else 1


# -- commands -------------------------------------------------------------------


def cmd_train(args, out: Output):
    manifest = load_manifest(args.manifest)
    opts = TrainOptions(args.centers, args.basis, args.width, args.ridge, not args.no_polynomial, args.d_s)
    try:
        container, fits = train(manifest, opts, threads=_threads(args),
                                provenance={"seed": args.seed, "manifest": str(args.manifest)})
    except HMAError as exc:
        raise type(exc)(f"{args.manifest}: {exc}") from exc
    for f in fits:
        if f.degenerate:
            print(f"warning: object {f.object_id} has a degenerate view manifold", file=sys.stderr)
    save_model(container, args.output)
    rows = [{"object_id": f.object_id, "category_id": f.category_id, "rms_residual": f.rms_residual,
             "effective_rank": f.effective_rank, "degenerate": f.degenerate} for f in fits]
    out.table("object", rows, ["object_id", "category_id", "rms_residual", "effective_rank", "degenerate"])
    sv = container.space.singular_values
    metrics = {"objects": len(fits), "d_s": container.space.d_s, "feature_dim": container.space.feature_dim,
               "n_centers": opts.n_centers, "singular_values": [float(v) for v in sv]}
    out.record("model", {**metrics, "path": str(args.output)})
    return metrics


def _query_features(args, container):
    fc = container.feature_config
    if args.features is not None:
        path = args.features
        y = np.load(path) if path.suffix == ".npy" else np.loadtxt(path)
        return np.asarray(y, dtype=float).ravel()
    if args.depth is not None:
        return extract_depth(load_image(args.depth), fc)
    return extract(load_image(args.image), fc)


def cmd_infer(args, out: Output):
    container = load_model(args.model)
    cfg = _inference_config(args)
    y = _query_features(args, container)
    res, inst, cat = infer_record(container, y, cfg, args.oracle, math.radians(args.resolution), args.k)
    yaw, pitch, roll = res.pose.degrees()
    fields = {"yaw_deg": yaw}
    if pitch is not None:
        fields["pitch_deg"] = pitch
    if roll is not None:
        fields["roll_deg"] = roll
    fields.update({"instance": inst, "category": cat, "reconstruction_error": res.reconstruction_error,
                   "method": "grid_oracle" if args.oracle else "particles", "trace": res.trace})
    out.record("inference", fields)
    return fields


def cmd_synthesize(args, out: Output):
    container = load_model(args.model)
    fc = container.feature_config
    if fc.kind != "raw":
        raise RawFeaturesRequired("view synthesis needs a model trained on raw intensities, not HOG")
    labels = container.labels
    if args.object is not None:
        if args.object not in labels.instance_ids:
            raise DataError(f"unknown object {args.object!r}")
        k = labels.instance_ids.index(args.object)
    else:
        k = args.style_index
        if not 0 <= k < len(labels):
            raise DataError(f"style index {k} out of range")
    model = reconstruct_coefficients(container.space, container.space.style(k))
    pose = PoseAngles.from_degrees(args.yaw, args.pitch, args.roll)
    img = synthesize_view(model, pose, fc.resize_to) * 255.0
    save_image(args.output, img)
    fields = {"object": labels.instance_ids[k], "yaw_deg": args.yaw, "output": str(args.output)}
    if args.reference is not None:
        ref = resize_image(load_image(args.reference), fc.resize_to)
        fields["mse"] = synthesis_mse(ref, np.clip(np.rint(img), 0, 255))
    out.record("synthesis", fields)
    return fields


def cmd_evaluate(args, out: Output):
    container = load_model(args.model)
    manifest = load_manifest(args.manifest)
    records = manifest.split(args.split)
    if not records:
        raise DataError(f"{args.manifest}: no records in split {args.split!r}")
    cfg = _inference_config(args)
    report, results = evaluate_records(container, manifest, records, cfg, base_seed=args.seed,
                                       oracle=args.oracle, resolution=math.radians(args.resolution),
                                       k=args.k, threads=_threads(args))
    if not args.summary_only:
        cols = ["index", "object_id", "true_yaw_deg", "yaw_deg", "ae_deg", "instance", "category", "error"]
        out.table("record", [asdict(r) for r in results], cols)
    metrics = report.as_dict()
    out.record("report", metrics)
    return metrics


def cmd_cross_validate(args, out: Output):
    manifest = load_manifest(args.manifest)
    objects = manifest.objects("train")
    if len(objects) < 2:
        raise DataError(f"{args.manifest}: cross-validation needs at least two training objects")
    n_folds = len(objects) if args.folds is None else min(args.folds, len(objects))
    folds = [objects[i::n_folds] for i in range(n_folds)]
    cfg = _inference_config(args)
    has_media = any(r.features is None for r in manifest.records)
    grids = args.grid_sizes if (has_media and manifest.feature_config.kind == "hog") else [manifest.feature_config.hog_grid]
    rows = []
    for M in args.centers_grid:
        for n in grids:
            m = replace(manifest, feature_config=replace(manifest.feature_config, hog_grid=n))
            preds, truth = [], []
            for held in folds:
                keep = [o for o in objects if o not in held]
                opts = TrainOptions(M, args.basis, args.width, args.ridge, not args.no_polynomial)
                container, _ = train(m, opts, object_ids=set(keep))
                recs = [r for r in m.split("train") if r.object_id in held]
                _, results = evaluate_records(container, m, recs, cfg, base_seed=args.seed, oracle=args.oracle,
                                              resolution=math.radians(args.resolution), threads=_threads(args))
                preds += [Prediction(math.radians(r.yaw_deg)) for r in results]
                truth += [Prediction(math.radians(r.true_yaw_deg)) for r in results]
            rep = evaluate(preds, truth)
            rows.append({"centers": M, "grid": n, "mae_deg": rep.mae_degrees,
                         "pct_ae_under_22_5": rep.pct_ae_under_22_5, "pct_ae_under_45": rep.pct_ae_under_45})
    out.table("cell", rows, ["centers", "grid", "mae_deg", "pct_ae_under_22_5", "pct_ae_under_45"])
    best = min(rows, key=lambda r: (r["mae_deg"], r["centers"], r["grid"]))
    out.record("selection", best)
    return {"cells": rows, "selection": best}


def cmd_gen_synthetic(args, out: Output):
    spec = SyntheticSpec(args.objects, args.views, args.dim, args.harmonics, args.noise, args.seed,
                         args.heldout_every, args.categories)
    manifest = generate_synthetic(spec)
    save_manifest(manifest, args.output)
    fields = {"output": str(args.output), "records": len(manifest.records),
              "train": len(manifest.split("train")), "test": len(manifest.split("test"))}
    out.record("manifest", fields)
    return fields


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hma", description="Homeomorphic manifold analysis: "
                                     "joint category, instance and continuous pose estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit per-object mappings and factorize them into a style space")
    p.add_argument("manifest", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True, help="model file (.hma-model)")
    _kernel_flags(p)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="estimate instance, category and pose of one input")
    p.add_argument("model", type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", type=Path)
    src.add_argument("--depth", type=Path, help="16-bit depth map; holes are zeros")
    src.add_argument("--features", type=Path, help=".npy or whitespace-separated text vector")
    _inference_flags(p)
    _common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("synthesize", help="render a learned object at an arbitrary pose")
    p.add_argument("model", type=Path)
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--object", help="instance id")
    who.add_argument("--style-index", type=int)
    p.add_argument("--yaw", type=float, required=True, help="degrees")
    p.add_argument("--pitch", type=float)
    p.add_argument("--roll", type=float)
    p.add_argument("-o", "--output", type=Path, required=True, help=".png or .pgm")
    p.add_argument("--reference", type=Path, help="ground-truth image; prints MSE on the 0-255 scale")
    _common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="infer every record of a split and report metrics")
    p.add_argument("model", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--summary-only", action="store_true")
    _inference_flags(p)
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross-validate", help="grid over M and HOG grid size, object-held-out folds")
    p.add_argument("manifest", type=Path)
    p.add_argument("--centers-grid", type=_int_list, default=[8, 12, 16, 24, 35])
    p.add_argument("--grid-sizes", type=_int_list, default=[3, 5, 7, 9])
    p.add_argument("--folds", type=int, help="number of object folds (default: leave one object out)")
    p.add_argument("--basis", choices=("thin_plate_spline", "gaussian", "multiquadric"),
                   default="thin_plate_spline")
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--no-polynomial", action="store_true")
    _inference_flags(p)
    _common(p)
    p.set_defaults(func=cmd_cross_validate)

    p = sub.add_parser("gen-synthetic", help="write a synthetic turntable manifest")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--objects", type=int, default=5)
    p.add_argument("--views", type=int, default=72)
    p.add_argument("--dim", type=int, default=40)
    p.add_argument("--harmonics", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--heldout-every", type=int, default=4)
    p.add_argument("--categories", type=int, help="number of categories (default: one per object)")
    _common(p)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Output(args.output_format)
    start = time.perf_counter()
    try:
        metrics = args.func(args, out)
    except UsageError as exc:
        print(f"hma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"hma: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"hma: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"hma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.run_log is not None:
        cfg = {k: v for k, v in vars(args).items() if k not in ("func", "run_log")}
        _append_run_record(args.run_log, ["hma"] + argv, cfg, args.seed, time.perf_counter() - start, metrics)
    return 0


if __name__ == "__main__":
    sys.exit(main())
