"""Training and evaluation loops over a dataset manifest."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .classify import LabeledStyleSet, Prediction, evaluate, knn_classify
from .data import DatasetManifest, ModelContainer
from .errors import IllPosed
from .factor import build_style_space, degeneracy_rank, stack_coefficients
from .grbf import KernelConfig, evaluate_mapping, fit_mapping
from .infer import InferenceConfig, grid_oracle, infer
from .manifold import angular_error, embed_angles, place_centers

@dataclass
class TrainOptions:
    n_centers: int = 35
    basis: str = "thin_plate_spline"
    width: float = 1.0
    ridge: float = 1e-8
    polynomial: bool = True
    d_s: object = "full"


@dataclass
class ObjectFit:
    object_id: str
    category_id: str
    model: object
    rms_residual: float
    effective_rank: int
    degenerate: bool


def _pose_arrays(records):
    yaw = np.radians([r.yaw_deg for r in records])
    pitch = None if records[0].pitch_deg is None else np.radians([r.pitch_deg for r in records])
    roll = None if records[0].roll_deg is None else np.radians([r.roll_deg for r in records])
    return yaw, pitch, roll


def record_points(records) -> np.ndarray:
    return embed_angles(*_pose_arrays(records))


def fit_objects(manifest: DatasetManifest, opts: TrainOptions, split="train", object_ids=None, threads=1):
    """One mapping per object. Raises :class:`IllPosed` when M exceeds an object's view count."""
    kernel = KernelConfig(place_centers(opts.n_centers, manifest.manifold_case), opts.basis,
                          opts.width, opts.ridge, opts.polynomial)
    by_object = {}
    for r in manifest.split(split):
        if object_ids is None or r.object_id in object_ids:
            by_object.setdefault(r.object_id, []).append(r)
    if not by_object:
        raise IllPosed(f"no {split} records to train on")
    short = {o: len(rs) for o, rs in by_object.items() if len(rs) < opts.n_centers}
    if short:
        detail = ", ".join(f"{o} ({n} views)" for o, n in short.items())
        raise IllPosed(f"{opts.n_centers} mapping centers exceed the training views of {detail}; "
                       "the mapping problem is ill-posed")

    def fit_one(item):
        obj, recs = item
        X = record_points(recs)
        Y = np.stack([manifest.features(r) for r in recs])
        model = fit_mapping(X, Y, kernel)
        pred = evaluate_mapping(model, X)
        rms = float(np.sqrt(np.mean((pred - Y) ** 2)))
        rank, degen = degeneracy_rank(model)
        return ObjectFit(obj, recs[0].category_id, model, rms, rank, degen)

    items = list(by_object.items())
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fit_one, items))
    return [fit_one(it) for it in items]


def train(manifest: DatasetManifest, opts: TrainOptions = None, threads=1, object_ids=None, provenance=None):
    opts = opts or TrainOptions()
    fits = fit_objects(manifest, opts, object_ids=object_ids, threads=threads)
    models = [f.model for f in fits]
    space = build_style_space(models, opts.d_s)
    labels = LabeledStyleSet(space.styles.T, [f.object_id for f in fits], [f.category_id for f in fits])
    prov = {"n_centers": opts.n_centers, "basis": opts.basis, "width": opts.width, "ridge": opts.ridge,
            "d_s": opts.d_s}
    prov.update(provenance or {})
    container = ModelContainer(space, labels, manifest.feature_config, manifest.manifold_case,
                               stack_coefficients(models), manifest.source, prov)
    return container, fits


@dataclass
class RecordResult:
    index: int
    object_id: str
    category_id: str
    true_yaw_deg: float
    yaw_deg: float
    instance: str
    category: str
    error: float
    ae_deg: float


def infer_record(container: ModelContainer, y, config: InferenceConfig, oracle=False,
                 resolution=math.radians(1.0), k=1):
    space = container.space
    if oracle:
        res = grid_oracle(space, y, resolution)
    else:
        res = infer(space, y, config)
    inst = knn_classify(container.labels, res.style, k, "instance")
    cat = knn_classify(container.labels, res.style, k, "category")
    return res, inst, cat


def evaluate_records(container, manifest, records, config: InferenceConfig, base_seed=0, oracle=False,
                     resolution=math.radians(1.0), k=1, threads=1):
    """Infer every record with seed ``base_seed + index``; returns (report, per-record results)."""
    def run(item):
        i, r = item
        cfg = replace(config, seed=base_seed + i)
        res, inst, cat = infer_record(container, manifest.features(r), cfg, oracle, resolution, k)
        yaw = math.degrees(res.pose.yaw)
        ae = math.degrees(angular_error(res.pose.yaw, math.radians(r.yaw_deg)))
        return RecordResult(i, r.object_id, r.category_id, r.yaw_deg, yaw, inst, cat,
                            res.reconstruction_error, ae)

    items = list(enumerate(records))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    preds = [Prediction(math.radians(r.yaw_deg), r.category, r.instance) for r in results]
    truth = [Prediction(math.radians(r.true_yaw_deg), r.category_id, r.object_id) for r in results]
    return evaluate(preds, truth), results
