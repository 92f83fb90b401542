"""Style factorization of per-object mapping coefficients.

Each object's ``C^k`` (D x N_psi) is vectorized column by column and the
vectors are placed side by side in a (D*N_psi) x K matrix. Its thin SVD
``U S V^T`` gives the content basis ``U S`` and one style vector per object
(rows of ``V``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NumericalFailure
from .grbf import KernelConfig, MappingModel, require_same_kernel

DEGENERACY_TOL = 1e-8


def vec(C: np.ndarray) -> np.ndarray:
    return np.asarray(C).reshape(-1, order="F")


def unvec(v: np.ndarray, feature_dim: int) -> np.ndarray:
    return np.asarray(v).reshape(feature_dim, -1, order="F")


def stack_coefficients(models) -> np.ndarray:
    if len(models) < 1:
        raise ValueError("need at least one mapping model")
    require_same_kernel(models)
    D = models[0].feature_dim
    for m in models:
        if m.feature_dim != D:
            raise DimensionMismatch(f"feature dims differ: {D} vs {m.feature_dim}")
    return np.stack([vec(m.coefficients) for m in models], axis=1)


def unstack_coefficients(stacked: np.ndarray, feature_dim: int) -> list:
    return [unvec(stacked[:, k], feature_dim) for k in range(stacked.shape[1])]


@dataclass(frozen=True, eq=False)
class StyleSpace:
    """Content basis ``basis`` ((D*N_psi) x d_s) and training styles (d_s x K)."""

    basis: np.ndarray
    styles: np.ndarray
    singular_values: np.ndarray
    kernel: KernelConfig
    feature_dim: int

    @property
    def d_s(self) -> int:
        return self.styles.shape[0]

    @property
    def n_objects(self) -> int:
        return self.styles.shape[1]

    @property
    def tensor(self) -> np.ndarray:
        """The basis as a D x N_psi x d_s array: ``C(s) = tensor @ s``."""
        return self.basis.reshape(self.feature_dim, self.kernel.n_features, self.d_s, order="F")

    def style(self, k: int) -> np.ndarray:
        return self.styles[:, k].copy()


def _fix_signs(U, Vt):
    # flip each singular pair so the largest-|.| entry of u is non-negative
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    return U * signs, Vt * signs[:, None]


def factorize(stacked, d_s="full", kernel: KernelConfig = None, feature_dim: int = None) -> StyleSpace:
    """Thin SVD of the stacked coefficients, truncated to ``d_s`` styles.

    ``kernel`` and ``feature_dim`` describe how to unstack the basis and are
    required for everything downstream of the factorization.
    """
    stacked = np.asarray(stacked, dtype=float)
    rows, K = stacked.shape
    full = min(rows, K)
    d = full if d_s == "full" else int(d_s)
    if not 1 <= d <= full:
        raise ValueError(f"d_s must be in [1, {full}], got {d_s}")
    if not np.all(np.isfinite(stacked)):
        raise NumericalFailure("stacked coefficients contain non-finite values")
    try:
        U, S, Vt = np.linalg.svd(stacked, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    U, Vt = _fix_signs(U, Vt)
    if feature_dim is None:
        feature_dim = rows // kernel.n_features if kernel is not None else rows
    return StyleSpace(
        basis=U[:, :d] * S[:d],
        styles=Vt[:d, :].copy(),
        singular_values=S,
        kernel=kernel,
        feature_dim=feature_dim,
    )


def build_style_space(models, d_s="full") -> StyleSpace:
    stacked = stack_coefficients(models)
    return factorize(stacked, d_s, kernel=models[0].kernel, feature_dim=models[0].feature_dim)


def reconstruct_coefficients(space: StyleSpace, s) -> MappingModel:
    s = np.asarray(s, dtype=float)
    if s.shape != (space.d_s,):
        raise DimensionMismatch(f"style has shape {s.shape}, space has d_s = {space.d_s}")
    return MappingModel(unvec(space.basis @ s, space.feature_dim), space.kernel)


def closed_form_style(space: StyleSpace, model: MappingModel) -> np.ndarray:
    """Least-squares style of a mapping fitted on dense views of a new object."""
    if model.feature_dim != space.feature_dim or not model.kernel.matches(space.kernel):
        raise DimensionMismatch("mapping model does not share the style space's kernel and feature dim")
    return np.linalg.lstsq(space.basis, vec(model.coefficients), rcond=None)[0]


def degeneracy_rank(model: MappingModel, tolerance: float = DEGENERACY_TOL):
    """(effective rank of C, whether the RBF block has collapsed).

    A view manifold that carries no information beyond an affine function of
    the viewpoint (a textureless object, a constant image) has a zero RBF
    block. Both ranks count singular values above ``tolerance`` times the
    largest singular value of the full ``C``.
    """
    C = model.coefficients
    sv = np.linalg.svd(C, compute_uv=False)
    top = sv[0] if sv.size else 0.0
    if top == 0.0:
        return 0, True
    thresh = tolerance * top
    rank = int(np.sum(sv > thresh))
    w_sv = np.linalg.svd(model.rbf_block, compute_uv=False)
    return rank, bool(np.sum(w_sv > thresh) == 0)
