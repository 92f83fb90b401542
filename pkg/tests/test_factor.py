import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from hma.errors import ConfigMismatch, DimensionMismatch
from hma.factor import (
    build_style_space,
    closed_form_style,
    degeneracy_rank,
    factorize,
    reconstruct_coefficients,
    stack_coefficients,
    unstack_coefficients,
)
from hma.grbf import KernelConfig, MappingModel, fit_mapping
from hma.manifold import embed_angles, place_centers

KERNEL = KernelConfig(place_centers(6))


def random_models(rng, K, D=5, kernel=KERNEL):
    return [MappingModel(rng.normal(size=(D, kernel.n_features)), kernel) for _ in range(K)]


def test_stack_single_and_layout(rng):
    (m,) = random_models(rng, 1)
    col = stack_coefficients([m])[:, 0]
    C = m.coefficients
    # column-wise vectorization: first D entries are the first column of C
    np.testing.assert_array_equal(col[: C.shape[0]], C[:, 0])
    np.testing.assert_array_equal(col, np.concatenate([C[:, j] for j in range(C.shape[1])]))


def test_stack_identical_models(rng):
    (m,) = random_models(rng, 1)
    S = stack_coefficients([m, m])
    np.testing.assert_array_equal(S[:, 0], S[:, 1])


def test_unstack_round_trip(rng):
    models = random_models(rng, 4)
    back = unstack_coefficients(stack_coefficients(models), 5)
    for m, C in zip(models, back):
        np.testing.assert_array_equal(m.coefficients, C)


def test_stack_rejects_mixed_kernels(rng):
    a = random_models(rng, 1)[0]
    b = random_models(rng, 1, kernel=KernelConfig(place_centers(6), ridge=1e-3))[0]
    with pytest.raises(ConfigMismatch):
        stack_coefficients([a, b])


def test_factorize_identity():
    space = factorize(np.eye(3))
    np.testing.assert_allclose(space.singular_values, [1, 1, 1])
    np.testing.assert_allclose(space.basis @ space.styles, np.eye(3), atol=1e-15)


def test_factorize_rank_one(rng):
    u, v = rng.normal(size=12), rng.normal(size=4)
    S = np.outer(u, v)
    space = factorize(S, 1)
    assert np.abs(space.basis @ space.styles - S).max() < 1e-12 * np.abs(S).max()


def test_factorize_random_round_trip(rng):
    S = rng.normal(size=(40, 5))
    space = factorize(S)
    assert np.linalg.norm(space.basis @ space.styles - S) / np.linalg.norm(S) < 1e-10
    np.testing.assert_allclose(space.styles @ space.styles.T, np.eye(5), atol=1e-10)


def test_singular_values_match_gram_eigenvalues(rng):
    # independent route: eigenvalues of S^T S are the squared singular values
    S = rng.normal(size=(30, 6))
    ev = scipy.linalg.eigh(S.T @ S, eigvals_only=True)[::-1]
    np.testing.assert_allclose(factorize(S).singular_values, np.sqrt(ev), rtol=1e-10)


def test_sign_convention_deterministic(rng):
    S = rng.normal(size=(20, 4))
    a, b = factorize(S), factorize(S.copy())
    np.testing.assert_array_equal(a.basis, b.basis)
    U = a.basis / a.singular_values
    idx = np.argmax(np.abs(U), axis=0)
    assert np.all(U[idx, np.arange(4)] >= 0)
    # negating the input keeps the (sign-fixed) basis and negates the styles
    c = factorize(-S)
    np.testing.assert_allclose(c.basis, a.basis, atol=1e-12)
    np.testing.assert_allclose(c.styles, -a.styles, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_truncation_error_is_tail_energy(seed, K):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(25, K))
    full = factorize(S)
    prev = math.inf
    for d in range(1, K + 1):
        sp = factorize(S, d)
        err2 = np.linalg.norm(S - sp.basis @ sp.styles) ** 2
        tail = float(np.sum(full.singular_values[d:] ** 2))
        assert err2 == pytest.approx(tail, rel=1e-8, abs=1e-20 * np.linalg.norm(S) ** 2 + 1e-24)
        assert err2 <= prev + 1e-9
        prev = err2


def test_reconstruct_and_closed_form(rng):
    models = random_models(rng, 4)
    space = build_style_space(models)
    for k, m in enumerate(models):
        C = reconstruct_coefficients(space, space.style(k)).coefficients
        assert np.linalg.norm(C - m.coefficients) / np.linalg.norm(m.coefficients) < 1e-8
        np.testing.assert_allclose(closed_form_style(space, m), space.style(k), atol=1e-8)
    zero = reconstruct_coefficients(space, np.zeros(space.d_s))
    assert np.all(zero.coefficients == 0)
    np.testing.assert_allclose(closed_form_style(space, zero), 0.0, atol=1e-10)


def test_reconstruct_is_linear(rng):
    space = build_style_space(random_models(rng, 3))
    s1, s2 = rng.normal(size=3), rng.normal(size=3)
    lhs = reconstruct_coefficients(space, 2.0 * s1 - 0.5 * s2).coefficients
    rhs = 2.0 * reconstruct_coefficients(space, s1).coefficients - 0.5 * reconstruct_coefficients(space, s2).coefficients
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        reconstruct_coefficients(space, np.zeros(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_closed_form_inverts_reconstruct(seed):
    rng = np.random.default_rng(seed)
    space = build_style_space(random_models(rng, 5))
    s0 = rng.normal(size=5)
    np.testing.assert_allclose(closed_form_style(space, reconstruct_coefficients(space, s0)), s0, atol=1e-9)


def test_closed_form_rejects_foreign_kernel(rng):
    space = build_style_space(random_models(rng, 3))
    other = random_models(rng, 1, kernel=KernelConfig(place_centers(7)))[0]
    with pytest.raises(DimensionMismatch):
        closed_form_style(space, other)


def test_degeneracy():
    th = 2 * math.pi * np.arange(24) / 24
    X = embed_angles(th)
    cfg = KernelConfig(place_centers(8))
    const = fit_mapping(X, np.full((24, 5), 0.4), cfg)
    assert degeneracy_rank(const, 1e-8)[1] is True
    rich = fit_mapping(X, np.stack([np.cos(th), np.sin(th), np.cos(2 * th), np.sin(2 * th)], 1), cfg)
    rank, degen = degeneracy_rank(rich, 1e-8)
    assert not degen and rank == 4
    assert degeneracy_rank(MappingModel(np.zeros((3, cfg.n_features)), cfg)) == (0, True)
