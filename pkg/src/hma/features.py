"""Image -> feature vector.

Two descriptors: raw intensities scaled to [0, 1], and a grid-of-cells HOG
(no block overlap, one global L2 normalization). Depth maps get their holes
filled by repeated 3x3 median passes and are rescaled to 0-255 first.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from skimage.transform import resize

from .errors import AllHoles, EmptyImage

KINDS = ("raw", "hog")
NORMALIZATIONS = ("none", "l2_global")
L2_EPS = 1e-12
MAX_FILL_PASSES = 10


@dataclass(frozen=True)
class FeatureConfig:
    kind: str = "hog"
    resize_to: tuple = (112, 112)
    hog_grid: int = 7
    hog_bins: int = 9
    normalize: str = "l2_global"

    def __post_init__(self):
        object.__setattr__(self, "resize_to", tuple(int(v) for v in self.resize_to))
        if self.kind not in KINDS:
            raise ValueError(f"feature kind must be one of {KINDS}, got {self.kind!r}")
        if self.normalize not in NORMALIZATIONS:
            raise ValueError(f"normalize must be one of {NORMALIZATIONS}, got {self.normalize!r}")
        if self.hog_grid < 1 or self.hog_bins < 2:
            raise ValueError("hog_grid must be >= 1 and hog_bins >= 2")
        if len(self.resize_to) != 2 or min(self.resize_to) < 1:
            raise ValueError(f"bad resize target {self.resize_to}")
        if self.kind == "hog" and min(self.resize_to) < self.hog_grid:
            raise ValueError("resize target smaller than the HOG grid")

    @property
    def dim(self) -> int:
        if self.kind == "raw":
            return self.resize_to[0] * self.resize_to[1]
        return self.hog_grid**2 * self.hog_bins

    def digest(self) -> str:
        key = f"{self.kind}|{self.resize_to}|{self.hog_grid}|{self.hog_bins}|{self.normalize}"
        return hashlib.sha1(key.encode()).hexdigest()[:12]


def load_image(path) -> np.ndarray:
    """Grayscale float array. RGB is converted to luma; 16-bit stays 16-bit."""
    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA", "P", "LA", "CMYK", "YCbCr"):
            im = im.convert("L")
        return np.asarray(im, dtype=float)


def save_image(path, image: np.ndarray) -> None:
    """Write an 8-bit grayscale PNG or PGM; values are clipped to 0-255."""
    arr = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def resize_image(image: np.ndarray, shape) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.shape == tuple(shape):
        return image.copy()
    return resize(image, shape, order=1, mode="edge", anti_aliasing=False, preserve_range=True)


def _gradients(img: np.ndarray):
    p = np.pad(img, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return gx, gy


def hog(img: np.ndarray, grid: int, bins: int) -> np.ndarray:
    """Per-cell orientation histograms, cells concatenated row-major.

    Unsigned orientation in [0, pi); bin b is centered at ``b*pi/bins`` and
    votes are split linearly between the two nearest centers (wrapping at pi).
    """
    gx, gy = _gradients(img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), math.pi)
    pos = ang / (math.pi / bins)
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    lo %= bins
    hi = (lo + 1) % bins

    rows, cols = img.shape
    rb = np.linspace(0, rows, grid + 1).round().astype(int)
    cb = np.linspace(0, cols, grid + 1).round().astype(int)
    cell_r = np.searchsorted(rb, np.arange(rows), side="right") - 1
    cell_c = np.searchsorted(cb, np.arange(cols), side="right") - 1
    cell = (cell_r[:, None] * grid + cell_c[None, :]).ravel()

    hist = np.zeros(grid * grid * bins)
    m = mag.ravel()
    np.add.at(hist, cell * bins + lo.ravel(), m * (1.0 - frac.ravel()))
    np.add.at(hist, cell * bins + hi.ravel(), m * frac.ravel())
    return hist


def extract(image, config: FeatureConfig) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.size == 0:
        raise EmptyImage("image has no pixels")
    if image.ndim == 3:
        # ITU-R 601 luma, same weights Pillow uses
        image = image[..., :3] @ np.array([0.299, 0.587, 0.114])
    img = resize_image(image, config.resize_to)
    if config.kind == "raw":
        return img.ravel() / 255.0
    v = hog(img, config.hog_grid, config.hog_bins)
    if config.normalize == "l2_global":
        v = v / (np.linalg.norm(v) + L2_EPS)
    return v


def fill_holes(depth: np.ndarray, max_passes: int = MAX_FILL_PASSES) -> np.ndarray:
    """Fill zero pixels with the median of their valid 3x3 neighbours, repeatedly."""
    d = np.asarray(depth, dtype=float).copy()
    if not np.any(d > 0):
        raise AllHoles("depth image has no valid pixels")
    for _ in range(max_passes):
        holes = d == 0
        if not holes.any():
            break
        p = np.pad(d, 1, mode="constant", constant_values=0.0)
        win = np.stack([p[i : i + d.shape[0], j : j + d.shape[1]] for i in range(3) for j in range(3)])
        win = np.where(win > 0, win, np.nan)
        fillable = holes & np.any(np.isfinite(win), axis=0)
        if not fillable.any():
            break
        with np.errstate(all="ignore"):
            med = np.nanmedian(win[:, fillable], axis=0)
        d[fillable] = med
    return d


def extract_depth(depth, config: FeatureConfig) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    if depth.size == 0:
        raise EmptyImage("depth image has no pixels")
    d = fill_holes(depth)
    valid = d > 0
    lo, hi = d[valid].min(), d[valid].max()
    out = np.zeros_like(d)
    if hi > lo:
        out[valid] = (d[valid] - lo) / (hi - lo) * 255.0
    return extract(out, config)
