"""Dataset manifests, the synthetic turntable generator and model files.

Manifest (``.hma-manifest``): UTF-8 text. A header of ``key: value`` lines,
then one tab-separated record per line::

    format_version: 1
    manifold_case: 1D
    feature.kind: hog
    feature.resize: 112x112
    feature.grid: 7
    feature.bins: 9
    feature.normalize: l2_global

    # path  object_id  category_id  yaw_deg  pitch_deg  roll_deg  split
    cars/01/000.png	car01	car	0	-	-	train

The first column is a path relative to the manifest, or ``@inline:`` followed
by comma-separated feature values. Absent angles are written ``-``.

Model (``.hma-model``): ``b"HMAMODEL"``, little-endian u32 version, u64
header length, a JSON header, raw little-endian float64 arrays, and a
trailing CRC32 of everything before it.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .classify import LabeledStyleSet
from .errors import CorruptContainer, InvalidAngles, MissingMedia, ParseError, UnsupportedVersion
from .factor import StyleSpace
from .features import FeatureConfig, extract, extract_depth, load_image
from .grbf import KernelConfig
from .manifold import CASES, TWO_PI, PoseAngles

MANIFEST_VERSION = 1
MODEL_VERSION = 1
MODEL_MAGIC = b"HMAMODEL"
INLINE = "@inline:"
SPLITS = ("train", "test")
COLUMNS = ("path", "object_id", "category_id", "yaw_deg", "pitch_deg", "roll_deg", "split")


@dataclass(frozen=True, eq=False)
class Record:
    object_id: str
    category_id: str
    yaw_deg: float
    pitch_deg: Optional[float] = None
    roll_deg: Optional[float] = None
    split: str = "train"
    path: Optional[str] = None
    features: Optional[np.ndarray] = None

    @property
    def pose(self) -> PoseAngles:
        return PoseAngles.from_degrees(self.yaw_deg, self.pitch_deg, self.roll_deg)


@dataclass
class DatasetManifest:
    records: list
    feature_config: FeatureConfig
    manifold_case: str = "1D"
    root: Path = field(default_factory=Path.cwd)
    source: str = "intensity"  # or "depth"
    extras: dict = field(default_factory=dict)
    format_version: int = MANIFEST_VERSION

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def objects(self, split: str = "train") -> list:
        """Object ids in first-appearance order."""
        seen = {}
        for r in self.records:
            if r.split == split:
                seen.setdefault(r.object_id, r.category_id)
        return list(seen)

    def features(self, record: Record) -> np.ndarray:
        if record.features is not None:
            return np.asarray(record.features, dtype=float)
        img = load_image(self.root / record.path)
        if self.source == "depth":
            return extract_depth(img, self.feature_config)
        return extract(img, self.feature_config)


def _parse_size(text: str, lineno: int) -> tuple:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise ParseError(f"bad size {text!r}, expected ROWSxCOLS", lineno) from None


def _angle(text: str, name: str, lineno: int) -> Optional[float]:
    if text in ("", "-"):
        return None
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{name} {text!r} is not a number", lineno) from None
    if not math.isfinite(v):
        raise InvalidAngles(f"line {lineno}: {name} is not finite")
    return v


def parse_manifest(text: str, root: Path = None) -> DatasetManifest:
    root = Path(root) if root is not None else Path.cwd()
    header = {}
    header_lines = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" in line:
            rows.append((lineno, line.split("\t")))
        elif rows:
            raise ParseError("header line after the first record", lineno)
        else:
            key, sep, value = line.partition(":")
            if not sep:
                raise ParseError(f"expected 'key: value', got {line!r}", lineno)
            header[key.strip()] = value.strip()
            header_lines[key.strip()] = lineno

    def get(key, default=None):
        return header.get(key, default)

    try:
        version = int(get("format_version", MANIFEST_VERSION))
    except ValueError:
        raise ParseError("format_version is not an integer", header_lines.get("format_version")) from None
    if version != MANIFEST_VERSION:
        raise ParseError(f"unsupported manifest version {version}", header_lines.get("format_version"))
    case = get("manifold_case", "1D")
    if case not in CASES:
        raise ParseError(f"manifold_case must be one of {CASES}", header_lines.get("manifold_case"))
    try:
        fc = FeatureConfig(
            kind=get("feature.kind", "hog"),
            resize_to=_parse_size(get("feature.resize", "112x112"), header_lines.get("feature.resize")),
            hog_grid=int(get("feature.grid", 7)),
            hog_bins=int(get("feature.bins", 9)),
            normalize=get("feature.normalize", "l2_global"),
        )
    except ValueError as exc:
        raise ParseError(f"bad feature config: {exc}") from None
    source = get("feature.source", "intensity")
    if source not in ("intensity", "depth"):
        raise ParseError("feature.source must be 'intensity' or 'depth'", header_lines.get("feature.source"))
    known = {"format_version", "manifold_case", "feature.kind", "feature.resize", "feature.grid",
             "feature.bins", "feature.normalize", "feature.source"}
    extras = {k: v for k, v in header.items() if k not in known}

    records = []
    inline_dim = None
    for lineno, cols in rows:
        if len(cols) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} tab-separated columns, got {len(cols)}", lineno)
        src, obj, cat, yaw_s, pitch_s, roll_s, split = (c.strip() for c in cols)
        if not obj or not cat:
            raise ParseError("object_id and category_id are required", lineno)
        if split not in SPLITS:
            raise ParseError(f"split must be one of {SPLITS}, got {split!r}", lineno)
        yaw = _angle(yaw_s, "yaw_deg", lineno)
        pitch = _angle(pitch_s, "pitch_deg", lineno)
        roll = _angle(roll_s, "roll_deg", lineno)
        if yaw is None:
            raise InvalidAngles(f"line {lineno}: record {obj!r} has no yaw")
        if case == "1D" and (pitch is not None or roll is not None):
            raise ParseError("1D manifest record carries pitch/roll", lineno)
        if case == "2D" and roll is not None:
            raise ParseError("2D manifest record carries roll", lineno)
        if case in ("2D", "3D") and pitch is None:
            raise InvalidAngles(f"line {lineno}: record {obj!r} has no pitch")
        if case == "3D" and roll is None:
            raise InvalidAngles(f"line {lineno}: record {obj!r} has no roll")
        if pitch is not None and abs(pitch) > 90.0:
            raise InvalidAngles(f"line {lineno}: pitch {pitch} outside [-90, 90]")
        if roll is not None and abs(roll) >= 90.0:
            raise InvalidAngles(f"line {lineno}: roll {roll} outside (-90, 90)")

        path = feats = None
        if src.startswith(INLINE):
            try:
                feats = np.array([float(v) for v in src[len(INLINE):].split(",")], dtype=float)
            except ValueError:
                raise ParseError("inline features are not comma-separated numbers", lineno) from None
            if inline_dim is None:
                inline_dim = feats.size
            elif feats.size != inline_dim:
                raise ParseError(f"inline feature length {feats.size} != {inline_dim}", lineno)
            feats.setflags(write=False)
        else:
            if not src:
                raise ParseError("empty media path", lineno)
            if not (root / src).is_file():
                raise MissingMedia(f"line {lineno}: {root / src} not found")
            path = src
        records.append(Record(obj, cat, yaw, pitch, roll, split, path, feats))

    counts = Counter(r.object_id for r in records if r.split == "train")
    thin = sorted(o for o, n in counts.items() if n < 2)
    if thin:
        raise ParseError(f"training objects with fewer than 2 views: {', '.join(thin)}")
    return DatasetManifest(records, fc, case, root, source, extras, version)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingMedia(f"manifest {path} not found") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"manifest is not UTF-8: {exc}") from None
    return parse_manifest(text, root=path.parent)


def format_manifest(manifest: DatasetManifest) -> str:
    fc = manifest.feature_config
    lines = [
        f"format_version: {manifest.format_version}",
        f"manifold_case: {manifest.manifold_case}",
        f"feature.kind: {fc.kind}",
        f"feature.resize: {fc.resize_to[0]}x{fc.resize_to[1]}",
        f"feature.grid: {fc.hog_grid}",
        f"feature.bins: {fc.hog_bins}",
        f"feature.normalize: {fc.normalize}",
    ]
    if manifest.source != "intensity":
        lines.append(f"feature.source: {manifest.source}")
    lines += [f"{k}: {v}" for k, v in manifest.extras.items()]
    lines += ["", "# " + "\t".join(COLUMNS)]
    fmt = lambda v: "-" if v is None else repr(float(v))
    for r in manifest.records:
        src = r.path if r.features is None else INLINE + ",".join(repr(float(v)) for v in r.features)
        lines.append("\t".join([src, r.object_id, r.category_id, fmt(r.yaw_deg),
                                fmt(r.pitch_deg), fmt(r.roll_deg), r.split]))
    return "\n".join(lines) + "\n"


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(format_manifest(manifest), encoding="utf-8")


# -- synthetic turntable data -------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    object_count: int = 5
    views_per_object: int = 72
    feature_dim: int = 40
    harmonic_order: int = 3
    noise_std: float = 0.0
    seed: int = 0
    heldout_every: int = 4
    category_count: Optional[int] = None  # default: one category per object
    identity_basis: bool = False

    def __post_init__(self):
        if self.object_count < 1 or self.views_per_object < 1 or self.harmonic_order < 1:
            raise ValueError("object_count, views_per_object and harmonic_order must be >= 1")
        if self.feature_dim < 2 * self.harmonic_order:
            raise ValueError("feature_dim must be at least 2 * harmonic_order")


def harmonics(theta, order: int) -> np.ndarray:
    """[cos t, sin t, cos 2t, sin 2t, ...] for each angle: (n, 2*order)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    h = np.arange(1, order + 1)
    out = np.empty((theta.size, 2 * order))
    out[:, 0::2] = np.cos(np.outer(theta, h))
    out[:, 1::2] = np.sin(np.outer(theta, h))
    return out


def synthetic_bases(spec: SyntheticSpec) -> list:
    """The per-object D x 2H matrices that define each view manifold."""
    if spec.identity_basis:
        return [np.eye(spec.feature_dim, 2 * spec.harmonic_order) for _ in range(spec.object_count)]
    rng = np.random.default_rng(spec.seed)
    return [rng.standard_normal((spec.feature_dim, 2 * spec.harmonic_order)) for _ in range(spec.object_count)]


def generate_synthetic(spec: SyntheticSpec) -> DatasetManifest:
    bases = synthetic_bases(spec)
    noise_rng = np.random.default_rng([spec.seed, 1])
    n_cat = spec.category_count or spec.object_count
    N = spec.views_per_object
    theta = TWO_PI * np.arange(N) / N
    H = harmonics(theta, spec.harmonic_order)
    records = []
    for k, B in enumerate(bases):
        Y = H @ B.T
        if spec.noise_std > 0:
            Y = Y + noise_rng.normal(0.0, spec.noise_std, size=Y.shape)
        for i in range(N):
            test = spec.heldout_every > 0 and i % spec.heldout_every == spec.heldout_every - 1
            feats = Y[i].copy()
            feats.setflags(write=False)
            records.append(Record(f"obj{k:02d}", f"cat{k % n_cat:02d}", math.degrees(theta[i]),
                                  split="test" if test else "train", features=feats))
    fc = FeatureConfig(kind="raw", resize_to=(1, spec.feature_dim), normalize="none")
    extras = {f"synthetic.{k}": str(v) for k, v in asdict(spec).items()}
    return DatasetManifest(records, fc, "1D", Path.cwd(), extras=extras)


def rotating_bar_images(n_views: int = 72, size: int = 24, width: float = 1.6, seed: int = 0):
    """Grayscale images (values in [0, 1]) of a clock hand spinning about the center.

    A faint fixed blob keeps the views from being pure rotations of each
    other. Returns ``(images (n, size, size), yaw angles)``.
    """
    rng = np.random.default_rng(seed)
    theta = TWO_PI * np.arange(n_views) / n_views
    c = (size - 1) / 2.0
    rr, cc = np.mgrid[0:size, 0:size].astype(float)
    dy, dx = rr - c, cc - c
    bx, by = rng.uniform(-0.3, 0.3, size=2) * size
    blob = 0.3 * np.exp(-((dx - bx) ** 2 + (dy - by) ** 2) / (2 * (size / 8) ** 2))
    length = 0.42 * size
    images = np.empty((n_views, size, size))
    for i, t in enumerate(theta):
        ux, uy = math.cos(t), -math.sin(t)
        along = dx * ux + dy * uy
        across = -dx * uy + dy * ux
        along_c = np.clip(along, 0.0, length)
        d2 = (along - along_c) ** 2 + across**2
        images[i] = np.clip(0.7 * np.exp(-d2 / (2 * width**2)) + blob, 0.0, 1.0)
    return images, theta


# -- model container ----------------------------------------------------------


@dataclass(eq=False)
class ModelContainer:
    space: StyleSpace
    labels: LabeledStyleSet
    feature_config: FeatureConfig
    manifold_case: str = "1D"
    coefficients: Optional[np.ndarray] = None  # stacked (D*N_psi) x K training coefficients
    source: str = "intensity"
    provenance: dict = field(default_factory=dict)
    format_version: int = MODEL_VERSION


def _array_payload(arrays: dict):
    index, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        buf = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(buf)})
        chunks.append(buf)
        offset += len(buf)
    return index, b"".join(chunks)


def container_bytes(c: ModelContainer, version: int = None) -> bytes:
    sp = c.space
    arrays = {
        "centers": sp.kernel.centers,
        "basis": sp.basis,
        "styles": sp.styles,
        "singular_values": sp.singular_values,
    }
    if c.coefficients is not None:
        arrays["coefficients"] = c.coefficients
    index, payload = _array_payload(arrays)
    header = {
        "manifold_case": c.manifold_case,
        "kernel": {"basis": sp.kernel.basis, "width": sp.kernel.width, "ridge": sp.kernel.ridge,
                   "polynomial": sp.kernel.polynomial},
        "feature_dim": sp.feature_dim,
        "feature_config": {**asdict(c.feature_config), "resize_to": list(c.feature_config.resize_to)},
        "source": c.source,
        "instance_ids": list(c.labels.instance_ids),
        "category_ids": list(c.labels.category_ids),
        "provenance": c.provenance,
        "arrays": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    v = c.format_version if version is None else version
    body = MODEL_MAGIC + struct.pack("<IQ", v, len(hbytes)) + hbytes + payload
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(container: ModelContainer, path) -> None:
    Path(path).write_bytes(container_bytes(container))


def model_from_bytes(data: bytes) -> ModelContainer:
    if len(data) < len(MODEL_MAGIC) + 16 or not data.startswith(MODEL_MAGIC):
        raise CorruptContainer("not an .hma-model file (bad magic or too short)")
    version, hlen = struct.unpack_from("<IQ", data, len(MODEL_MAGIC))
    if version != MODEL_VERSION:
        raise UnsupportedVersion(f"model format version {version}; this build reads {MODEL_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptContainer("checksum mismatch (truncated or modified file)")
    start = len(MODEL_MAGIC) + 12
    try:
        header = json.loads(body[start : start + hlen].decode("utf-8"))
        payload = body[start + hlen :]
        arrays = {}
        for entry in header["arrays"]:
            raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
            if len(raw) != entry["nbytes"]:
                raise CorruptContainer(f"array {entry['name']} is truncated")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(float)
        k = header["kernel"]
        kernel = KernelConfig(arrays["centers"], k["basis"], k["width"], k["ridge"], k["polynomial"])
        space = StyleSpace(arrays["basis"], arrays["styles"], arrays["singular_values"], kernel,
                           header["feature_dim"])
        fc = header["feature_config"]
        labels = LabeledStyleSet(space.styles.T, header["instance_ids"], header["category_ids"])
        return ModelContainer(
            space=space,
            labels=labels,
            feature_config=FeatureConfig(**fc),
            manifold_case=header["manifold_case"],
            coefficients=arrays.get("coefficients"),
            source=header.get("source", "intensity"),
            provenance=header.get("provenance", {}),
            format_version=version,
        )
    except CorruptContainer:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptContainer(f"inconsistent model header: {exc}") from exc


def load_model(path) -> ModelContainer:
    return model_from_bytes(Path(path).read_bytes())
