import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hma.data import (
    SyntheticSpec,
    container_bytes,
    format_manifest,
    generate_synthetic,
    load_manifest,
    load_model,
    model_from_bytes,
    parse_manifest,
    rotating_bar_images,
    save_manifest,
    save_model,
)
from hma.errors import CorruptContainer, InvalidAngles, MissingMedia, ParseError, UnsupportedVersion
from hma.features import save_image
from hma.grbf import KernelConfig, evaluate_mapping, fit_mapping
from hma.infer import InferenceConfig, infer
from hma.pipeline import record_points

HEADER = "format_version: 1\nmanifold_case: {case}\nfeature.kind: hog\n\n"


def write_images(root, names):
    for n in names:
        save_image(root / n, np.full((8, 8), 100.0))


def test_three_record_manifest(tmp_path):
    write_images(tmp_path, ["a.png", "b.png", "c.png"])
    text = HEADER.format(case="1D") + "".join(
        f"{n}\tmug\tcup\t{yaw}\t-\t-\ttrain\n" for n, yaw in (("a.png", 0), ("b.png", 90), ("c.png", 180))
    )
    (tmp_path / "m.hma-manifest").write_text(text)
    m = load_manifest(tmp_path / "m.hma-manifest")
    assert len(m.records) == 3 and m.manifold_case == "1D"
    assert m.records[1].pose.yaw == pytest.approx(math.pi / 2)
    assert m.features(m.records[0]).shape == (441,)


def test_missing_yaw_names_record(tmp_path):
    text = HEADER.format(case="1D") + "@inline:1,2\tmug\tcup\t-\t-\t-\ttrain\n"
    with pytest.raises(InvalidAngles, match="mug"):
        parse_manifest(text, tmp_path)


def test_roll_in_2d_is_schema_error(tmp_path):
    text = HEADER.format(case="2D") + "@inline:1,2\tmug\tcup\t10\t5\t3\ttrain\n"
    with pytest.raises(ParseError) as exc:
        parse_manifest(text, tmp_path)
    assert exc.value.line == 5


@pytest.mark.parametrize("row, err", [
    ("nothere.png\tmug\tcup\t0\t-\t-\ttrain", MissingMedia),
    ("@inline:1,2\tmug\tcup\tabc\t-\t-\ttrain", ParseError),
    ("@inline:1,2\tmug\tcup\t0\t-\t-\tvalidate", ParseError),
    ("@inline:1,2\tmug\tcup\t0\t-\ttrain", ParseError),
    ("@inline:1,2\tmug\tcup\tnan\t-\t-\ttrain", InvalidAngles),
])
def test_bad_records(tmp_path, row, err):
    with pytest.raises(err):
        parse_manifest(HEADER.format(case="1D") + row + "\n", tmp_path)


def test_pitch_range_and_single_view(tmp_path):
    with pytest.raises(InvalidAngles):
        parse_manifest(HEADER.format(case="2D") + "@inline:1\tm\tc\t0\t95\t-\ttrain\n", tmp_path)
    with pytest.raises(ParseError, match="fewer than 2"):
        parse_manifest(HEADER.format(case="1D") + "@inline:1\tm\tc\t0\t-\t-\ttrain\n", tmp_path)


def test_unknown_version(tmp_path):
    with pytest.raises(ParseError):
        parse_manifest("format_version: 9\n", tmp_path)


def test_synthetic_round_trip(tmp_path):
    m = generate_synthetic(SyntheticSpec(object_count=2, views_per_object=8, feature_dim=6, noise_std=0.1))
    save_manifest(m, tmp_path / "s.hma-manifest")
    back = load_manifest(tmp_path / "s.hma-manifest")
    assert format_manifest(back) == format_manifest(m)
    for a, b in zip(m.records, back.records):
        np.testing.assert_array_equal(a.features, b.features)
        assert (a.object_id, a.yaw_deg, a.split) == (b.object_id, b.yaw_deg, b.split)
    assert back.feature_config == m.feature_config
    assert back.extras == m.extras


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 12))
def test_synthetic_deterministic(seed, K, N):
    spec = SyntheticSpec(object_count=K, views_per_object=N, feature_dim=6, noise_std=0.05, seed=seed)
    assert format_manifest(generate_synthetic(spec)) == format_manifest(generate_synthetic(spec))


def test_synthetic_circle_and_split():
    spec = SyntheticSpec(object_count=1, views_per_object=12, feature_dim=2, harmonic_order=1,
                         identity_basis=True)
    m = generate_synthetic(spec)
    for r in m.records:
        t = math.radians(r.yaw_deg)
        np.testing.assert_allclose(r.features, [math.cos(t), math.sin(t)], atol=1e-15)
    assert [i for i, r in enumerate(m.records) if r.split == "test"] == [3, 7, 11]


def test_synthetic_interpolating_fit():
    m = generate_synthetic(SyntheticSpec(object_count=5, views_per_object=72, feature_dim=40, harmonic_order=3))
    recs = m.split("train")
    worst = 0.0
    for obj in m.objects():
        rs = [r for r in recs if r.object_id == obj]
        X = record_points(rs)
        Y = np.stack([r.features for r in rs])
        model = fit_mapping(X, Y, KernelConfig(X))
        worst = max(worst, np.abs(evaluate_mapping(model, X) - Y).max())
    assert worst < 1e-6


def test_rotating_bar():
    imgs, th = rotating_bar_images(8, 16)
    assert imgs.shape == (8, 16, 16) and imgs.min() >= 0 and imgs.max() <= 1
    assert not np.allclose(imgs[0], imgs[2])


def test_container_round_trip(tmp_path, bench):
    manifest, container, _ = bench
    save_model(container, tmp_path / "m.hma-model")
    back = load_model(tmp_path / "m.hma-model")
    for a, b in ((container.space.basis, back.space.basis), (container.space.styles, back.space.styles),
                 (container.space.kernel.centers, back.space.kernel.centers),
                 (container.coefficients, back.coefficients)):
        assert a.tobytes() == b.tobytes()
    assert back.feature_config == container.feature_config
    assert back.labels.instance_ids == container.labels.instance_ids
    assert back.space.kernel.basis == container.space.kernel.basis
    assert back.space.d_s == container.space.d_s
    y = manifest.features(manifest.split("test")[0])
    r1 = infer(container.space, y, InferenceConfig(seed=3))
    r2 = infer(back.space, y, InferenceConfig(seed=3))
    assert r1.trace == r2.trace and r1.style.tobytes() == r2.style.tobytes()


def test_container_corruption(bench):
    _, container, _ = bench
    blob = container_bytes(container)
    with pytest.raises(CorruptContainer):
        model_from_bytes(blob[:-100])
    flipped = bytearray(blob)
    flipped[200] ^= 0xFF
    with pytest.raises(CorruptContainer):
        model_from_bytes(bytes(flipped))
    with pytest.raises(CorruptContainer):
        model_from_bytes(b"not a model")
    with pytest.raises(UnsupportedVersion):
        model_from_bytes(container_bytes(container, version=2))
