import numpy as np
import pytest

from hma.data import SyntheticSpec, generate_synthetic
from hma.pipeline import TrainOptions, train

# the benchmark used throughout: 5 objects x 72 views, every 4th view held out
BENCH_SPEC = SyntheticSpec(object_count=5, views_per_object=72, feature_dim=40, harmonic_order=3,
                           noise_std=0.01, seed=0, heldout_every=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bench_manifest():
    return generate_synthetic(BENCH_SPEC)


@pytest.fixture(scope="session")
def bench(bench_manifest):
    container, fits = train(bench_manifest, TrainOptions(n_centers=12))
    return bench_manifest, container, fits


@pytest.fixture(scope="session")
def bench_depth_manifest():
    # a second "modality" with the same objects and poses but different manifolds
    spec = SyntheticSpec(**{**BENCH_SPEC.__dict__, "seed": 1, "feature_dim": 30})
    return generate_synthetic(spec)


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed") for r in terminalreporter.stats.get(key, [])]
    rows = sorted(
        (r.nodeid.split("::")[-1], r.outcome)
        for r in reports
        if r.when == "call" and "test_acceptance.py" in r.nodeid
    )
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in rows:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
