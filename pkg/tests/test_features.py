import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hma.errors import AllHoles, EmptyImage
from hma.features import (
    FeatureConfig,
    extract,
    extract_depth,
    fill_holes,
    hog,
    load_image,
    save_image,
)

RAW8 = dict(resize_to=(8, 8), normalize="none")


def step_image():
    img = np.zeros((8, 8))
    img[:, 4:] = 255.0
    return img


def naive_hog(img, grid, bins):
    """Pixel-by-pixel reference implementation."""
    rows, cols = img.shape
    hist = np.zeros((grid, grid, bins))
    rb = [round(i * rows / grid) for i in range(grid + 1)]
    cb = [round(j * cols / grid) for j in range(grid + 1)]
    width = math.pi / bins
    for r in range(rows):
        for c in range(cols):
            gx = (img[r, min(c + 1, cols - 1)] - img[r, max(c - 1, 0)]) / 2
            gy = (img[min(r + 1, rows - 1), c] - img[max(r - 1, 0), c]) / 2
            m = math.hypot(gx, gy)
            if m == 0:
                continue
            a = math.atan2(gy, gx) % math.pi
            b0 = int(a // width)
            f = a / width - b0
            i = max(k for k in range(grid) if rb[k] <= r)
            j = max(k for k in range(grid) if cb[k] <= c)
            hist[i, j, b0 % bins] += m * (1 - f)
            hist[i, j, (b0 + 1) % bins] += m * f
    return hist.ravel()


def test_step_edge_single_cell():
    v = extract(step_image(), FeatureConfig(hog_grid=1, **RAW8))
    assert v[0] == 2040.0
    assert np.all(v[1:] == 0)


def test_step_edge_two_by_two():
    v = extract(step_image(), FeatureConfig(hog_grid=2, **RAW8)).reshape(2, 2, 9)
    np.testing.assert_array_equal(v[:, :, 0], [[510.0, 510.0], [510.0, 510.0]])
    assert np.all(v[:, :, 1:] == 0)
    # normalized: the four equal cells each get 1/2
    n = extract(step_image(), FeatureConfig(hog_grid=2, resize_to=(8, 8))).reshape(2, 2, 9)
    np.testing.assert_allclose(n[:, :, 0], 0.5, rtol=1e-12)


def test_horizontal_edge_lands_in_middle_bin():
    v = extract(step_image().T, FeatureConfig(hog_grid=1, hog_bins=4, **RAW8))
    # gradient along rows -> angle pi/2 -> bin 2 of 4
    assert v[2] == 2040.0 and v.sum() == 2040.0


def test_matches_naive_loop(rng):
    img = rng.uniform(0, 255, size=(21, 17))
    for grid, bins in ((1, 9), (3, 9), (4, 6)):
        np.testing.assert_allclose(hog(img, grid, bins), naive_hog(img, grid, bins), rtol=1e-10, atol=1e-9)


def test_constant_and_dimension():
    cfg = FeatureConfig()
    assert cfg.dim == 441
    v = extract(np.full((50, 60), 17.0), cfg)
    assert v.shape == (441,) and np.all(v == 0)


def test_raw_features():
    img = np.arange(12, dtype=float).reshape(3, 4) * 20
    v = extract(img, FeatureConfig(kind="raw", resize_to=(3, 4)))
    np.testing.assert_array_equal(v, img.ravel() / 255.0)
    assert extract(img, FeatureConfig(kind="raw", resize_to=(6, 8))).shape == (48,)


def test_rgb_uses_luma():
    g = np.random.default_rng(1).uniform(0, 255, size=(16, 16))
    rgb = np.repeat(g[..., None], 3, axis=2)
    np.testing.assert_allclose(extract(rgb, FeatureConfig(resize_to=(16, 16), hog_grid=2)),
                               extract(g, FeatureConfig(resize_to=(16, 16), hog_grid=2)), atol=1e-12)


def test_empty_image():
    with pytest.raises(EmptyImage):
        extract(np.zeros((0, 5)), FeatureConfig())


def test_deterministic(rng):
    img = rng.uniform(0, 255, size=(40, 30))
    a, b = extract(img, FeatureConfig()), extract(img.copy(), FeatureConfig())
    assert a.tobytes() == b.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-100, 100), st.floats(0.1, 10))
def test_hog_invariances(seed, shift, scale):
    img = np.random.default_rng(seed).uniform(0, 255, size=(16, 16))
    cfg = FeatureConfig(resize_to=(16, 16), hog_grid=4)
    base = extract(img, cfg)
    np.testing.assert_allclose(extract(img + shift, cfg), base, atol=1e-9)
    np.testing.assert_allclose(extract(img * scale, cfg), base, atol=1e-9)
    assert abs(np.linalg.norm(base) - 1) < 1e-9


def test_fill_single_hole():
    d = np.arange(1, 26, dtype=float).reshape(5, 5)
    d[2, 2] = 0
    out = fill_holes(d)
    assert out[2, 2] == np.median([7, 8, 9, 12, 14, 17, 18, 19])
    assert np.all(out[d > 0] == d[d > 0])


def test_fill_recursive_and_all_holes():
    d = np.zeros((6, 6))
    d[0, 0] = 5.0
    assert np.all(fill_holes(d) == 5.0)
    with pytest.raises(AllHoles):
        fill_holes(np.zeros((3, 3)))


def test_depth_without_holes_is_scaled_extract(rng):
    d = rng.uniform(500, 900, size=(24, 24))
    cfg = FeatureConfig(resize_to=(24, 24), hog_grid=3)
    scaled = (d - d.min()) / (d.max() - d.min()) * 255
    np.testing.assert_allclose(extract_depth(d, cfg), extract(scaled, cfg), atol=1e-12)


def test_image_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, size=(9, 11)).astype(float)
    for name in ("a.png", "a.pgm"):
        save_image(tmp_path / name, img)
        np.testing.assert_array_equal(load_image(tmp_path / name), img)


def test_config_validation():
    with pytest.raises(ValueError):
        FeatureConfig(kind="sift")
    with pytest.raises(ValueError):
        FeatureConfig(resize_to=(4, 4), hog_grid=7)
    assert FeatureConfig().digest() != FeatureConfig(hog_grid=5).digest()
