"""Joint style / viewpoint inference.

The sampler keeps K style particles (initialized at the learned styles) and
L viewpoint particles (uniform on the conceptual sphere). Every pairing is
scored by ``exp(-err / (2 sigma^2))``; marginal weights drive resampling
with Gaussian perturbations that shrink geometrically, and the best pairing
seen so far is copied into the next population so the best error never goes
up.

Random streams: viewpoint resampling, style parent selection and style noise
draw from separate children of ``SeedSequence(seed)``. All channels share
one standard-normal draw per iteration (sliced to each channel's d_s), so a
duplicated channel follows the single-channel trajectory exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import AllZeroLikelihoods, DimensionMismatch
from .factor import StyleSpace, reconstruct_coefficients
from .grbf import evaluate_mapping, kernel_map
from .manifold import (
    TWO_PI,
    PoseAngles,
    angles_from_points,
    case_for_dim,
    embed_angles,
    random_points,
)

MAX_WIDENINGS = 3
FLAT_RTOL = 1e-12


@dataclass
class InferenceConfig:
    iterations: int = 30
    sigma: Union[float, str] = "auto"
    viewpoint_count: int = 36
    resample_std_style: float = 0.25
    resample_std_angle: float = math.radians(20.0)
    decay: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.viewpoint_count < 1:
            raise ValueError("iterations and viewpoint_count must be positive")
        if self.sigma != "auto" and not float(self.sigma) > 0:
            raise ValueError("sigma must be positive or 'auto'")
        if self.resample_std_style <= 0 or self.resample_std_angle <= 0:
            raise ValueError("resampling stds must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class InferenceResult:
    style: np.ndarray
    pose: PoseAngles
    point: np.ndarray
    reconstruction_error: float
    trace: list = field(default_factory=list)
    style_index: Optional[int] = None
    sigma: Optional[float] = None


@dataclass
class MultimodalResult:
    style_a: np.ndarray
    style_b: np.ndarray
    combined_style: np.ndarray
    pose: PoseAngles
    point: np.ndarray
    fused_error: float
    trace: list = field(default_factory=list)


def _check_y(space: StyleSpace, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != space.feature_dim:
        raise DimensionMismatch(f"feature vector has length {y.shape[0]}, model expects {space.feature_dim}")
    return y


def reconstruction_error(space: StyleSpace, s, x, y) -> float:
    """Squared distance between ``y`` and the render of style ``s`` at ``x``."""
    y = _check_y(space, y)
    model = reconstruct_coefficients(space, s)
    r = y - evaluate_mapping(model, np.asarray(x, dtype=float))
    return float(r @ r)


def render_errors(space: StyleSpace, styles: np.ndarray, points: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Reconstruction errors for every (style row, point row) pair: (K_p, L)."""
    coeffs = np.einsum("ijm,km->kij", space.tensor, styles)
    psi = kernel_map(points, space.kernel)
    renders = np.einsum("kij,lj->kli", coeffs, psi)
    diff = renders - y
    return np.einsum("kli,kli->kl", diff, diff)


def particle_likelihood(error, sigma: float):
    return np.exp(-np.asarray(error, dtype=float) / (2.0 * sigma * sigma))


def marginal_weights(likelihoods):
    """Normalized row sums (styles) and column sums (viewpoints)."""
    w = np.asarray(likelihoods, dtype=float)
    if np.any(w < 0):
        raise ValueError("likelihoods must be non-negative")
    total = w.sum()
    if not total > 0:
        raise AllZeroLikelihoods("every particle likelihood underflowed to zero; widen sigma")
    return w.sum(axis=1) / total, w.sum(axis=0) / total


def _initial_sigma(errors: np.ndarray) -> float:
    med = float(np.median(errors))
    if med > 0:
        return math.sqrt(med)
    top = float(errors.max())
    return math.sqrt(top) if top > 0 else 1.0


def _run_sampler(channels, config: InferenceConfig):
    """Core of the particle search over one or more channels.

    ``channels`` is a list of ``(space, y, weight)``; all spaces share the
    conceptual manifold and the number of training objects.
    """
    spaces = [c[0] for c in channels]
    e = spaces[0].kernel.coord_dim
    K = spaces[0].n_objects
    for sp in spaces[1:]:
        if sp.kernel.coord_dim != e:
            raise DimensionMismatch("channels use different conceptual manifolds")
        if sp.n_objects != K:
            raise DimensionMismatch("channels were trained on different numbers of objects")
    case = case_for_dim(e)
    L = config.viewpoint_count

    children = np.random.SeedSequence(int(config.seed)).spawn(3)
    view_rng = np.random.default_rng(children[0])
    parent_rng = np.random.default_rng(children[1])
    noise_rng = np.random.default_rng(children[2])
    d_max = max(sp.d_s for sp in spaces)

    styles = [sp.styles.T.copy() for sp in spaces]
    style_scale = [math.sqrt(float(np.mean(np.sum(sp.styles**2, axis=0)))) for sp in spaces]
    points = random_points(view_rng, L, case)
    angles = np.stack(angles_from_points(points), axis=-1)

    sigma = None if config.sigma == "auto" else float(config.sigma)
    best_err = math.inf
    best_styles = best_point = best_angles = None
    trace = []

    for it in range(config.iterations):
        E = None
        for (sp, y, lam), S in zip(channels, styles):
            term = lam * render_errors(sp, S, points, y)
            E = term if E is None else E + term
        if sigma is None:
            sigma = _initial_sigma(E)
        w = particle_likelihood(E, sigma)
        widened = 0
        while not w.sum() > 0:
            if widened == MAX_WIDENINGS:
                raise AllZeroLikelihoods(f"all likelihoods zero even at sigma = {sigma:.3g}")
            sigma *= 10.0
            widened += 1
            w = particle_likelihood(E, sigma)
        w_style, w_view = marginal_weights(w)

        k, l = np.unravel_index(np.argmin(E), E.shape)
        if E[k, l] < best_err:
            best_err = float(E[k, l])
            best_styles = [S[k].copy() for S in styles]
            best_point = points[l].copy()
            best_angles = angles[l].copy()
        trace.append(best_err)
        if it == config.iterations - 1:
            break

        shrink = config.decay**it
        parents = view_rng.choice(L, size=L, p=w_view)
        angles = angles[parents] + view_rng.normal(0.0, config.resample_std_angle * shrink, size=angles.shape)
        points = embed_angles(*angles.T)
        angles = np.stack(angles_from_points(points), axis=-1)
        points[0], angles[0] = best_point, best_angles

        parents = parent_rng.choice(K, size=K, p=w_style)
        z = noise_rng.standard_normal((K, d_max))
        for c, sp in enumerate(spaces):
            std = config.resample_std_style * style_scale[c] * shrink
            styles[c] = styles[c][parents] + std * z[:, : sp.d_s]
            styles[c][0] = best_styles[c]

    return best_styles, best_point, best_angles, best_err, trace, sigma


def _pose(angles) -> PoseAngles:
    return PoseAngles(*(float(a) for a in angles))


def infer(space: StyleSpace, y, config: InferenceConfig = None) -> InferenceResult:
    config = config or InferenceConfig()
    y = _check_y(space, y)
    styles, point, angles, err, trace, sigma = _run_sampler([(space, y, 1.0)], config)
    return InferenceResult(styles[0], _pose(angles), point, err, trace, sigma=sigma)


def infer_multimodal(space_a, space_b, y_a, y_b, lambda_a=0.7, lambda_b=0.3, config=None) -> MultimodalResult:
    """Shared-viewpoint inference over two channels with a weighted error sum."""
    config = config or InferenceConfig()
    if not (lambda_a > 0 and lambda_b > 0):
        raise ValueError("channel weights must be positive")
    y_a, y_b = _check_y(space_a, y_a), _check_y(space_b, y_b)
    styles, point, angles, err, trace, _ = _run_sampler(
        [(space_a, y_a, lambda_a), (space_b, y_b, lambda_b)], config
    )
    combined = np.concatenate([lambda_a * styles[0], lambda_b * styles[1]])
    return MultimodalResult(styles[0], styles[1], combined, _pose(angles), point, err, trace)


def _yaw_grid(resolution: float) -> np.ndarray:
    if not resolution > 0:
        raise ValueError("angular resolution must be positive")
    n = max(1, int(math.floor(TWO_PI / resolution + 1e-9)))
    return resolution * np.arange(n)


def _require_circle(space: StyleSpace):
    if space.kernel.coord_dim != 2:
        raise DimensionMismatch("grid search is only defined on the viewing circle (1D case)")


def grid_oracle(space: StyleSpace, y, angular_resolution: float = math.radians(1.0)) -> InferenceResult:
    """Exhaustive search over training styles x a uniform yaw grid."""
    _require_circle(space)
    y = _check_y(space, y)
    grid = _yaw_grid(angular_resolution)
    points = embed_angles(grid)
    E = render_errors(space, space.styles.T, points, y)
    k, j = np.unravel_index(np.argmin(E), E.shape)
    err = float(E[k, j])
    return InferenceResult(space.style(k), PoseAngles(float(grid[j])), points[j], err, [err], style_index=int(k))


def _golden_section(f, a, b, tol=1e-10, max_iter=200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def viewpoint_given_style(space: StyleSpace, s, y, resolution: float = math.radians(1.0)):
    """Yaw minimizing the reconstruction error for a known style.

    Grid search, then golden-section refinement inside the neighbouring grid
    cells. The refined angle replaces the grid angle only if strictly better,
    so flat error curves return the lowest grid angle.
    """
    _require_circle(space)
    y = _check_y(space, y)
    s = np.asarray(s, dtype=float)
    grid = _yaw_grid(resolution)
    E = render_errors(space, s[None, :], embed_angles(grid), y)[0]
    # values within rounding of the minimum count as ties
    tol = FLAT_RTOL * max(float(E.min()), float(np.abs(y) @ np.abs(y)), np.finfo(float).tiny)
    j = int(np.flatnonzero(E <= E.min() + tol)[0])
    theta, err = float(grid[j]), float(E[j])

    def f(t):
        return float(render_errors(space, s[None, :], embed_angles(np.array([t])), y)[0, 0])

    t_ref, e_ref = _golden_section(f, theta - resolution, theta + resolution)
    if e_ref < err - tol:
        theta, err = t_ref, e_ref
    return PoseAngles(theta), err
