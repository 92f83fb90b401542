"""Generalized RBF mappings from the conceptual manifold to feature space.

For one object, each feature dimension is modelled as

    gamma(x) = sum_j w_j phi(|x - z_j|) + c0 + c^T x

with the side conditions ``sum_j w_j p(z_j) = 0`` for the linear polynomial
basis ``p in {1, x_1, ..., x_e}``. Stacking all output dimensions gives
``gamma(x) = C @ psi(x)`` with ``psi(x) = [phi(|x - z_1|), ..., phi(|x - z_M|), 1, x]``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigMismatch, DimensionMismatch, ShapeMismatch, SingularSystem
from .manifold import PoseAngles, embed

BASES = ("thin_plate_spline", "gaussian", "multiquadric")
DEFAULT_RIDGE = 1e-8
COND_LIMIT = 1e12


def thin_plate(r):
    r = np.asarray(r, dtype=float)
    r2 = r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r2 * np.log(r)
    # phi(0) = 0 by continuity; r**2 underflows to 0 long before log(r) does anything odd
    return np.where(r2 > 0.0, out, 0.0)


def gaussian(r, width):
    r = np.asarray(r, dtype=float)
    return np.exp(-(r * r) / (2.0 * width * width))


def multiquadric(r, shape):
    r = np.asarray(r, dtype=float)
    return np.sqrt(r * r + shape * shape)


@dataclass(frozen=True, eq=False)
class KernelConfig:
    """Basis function, centers and ridge shared by every mapping of a model.

    ``width`` is the Gaussian width or the multiquadric shape parameter and
    is ignored by the thin-plate spline.
    """

    centers: np.ndarray
    basis: str = "thin_plate_spline"
    width: float = 1.0
    ridge: float = DEFAULT_RIDGE
    polynomial: bool = True

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float, ndmin=2)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}; expected one of {BASES}")
        if centers.shape[0] < 1:
            raise ValueError("need at least one center")
        if not np.allclose(np.linalg.norm(centers, axis=1), 1.0, atol=1e-9):
            raise ValueError("centers must lie on the unit sphere")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.basis != "thin_plate_spline" and self.width <= 0:
            raise ValueError("width must be positive")
        if not self.polynomial and self.basis != "gaussian":
            raise ValueError("only the gaussian basis may drop the polynomial part")

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def coord_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def n_features(self) -> int:
        """Length of psi(x)."""
        return self.n_centers + (self.coord_dim + 1 if self.polynomial else 0)

    def phi(self, r):
        if self.basis == "thin_plate_spline":
            return thin_plate(r)
        if self.basis == "gaussian":
            return gaussian(r, self.width)
        return multiquadric(r, self.width)

    def matches(self, other: "KernelConfig") -> bool:
        return (
            self.basis == other.basis
            and self.polynomial == other.polynomial
            and self.width == other.width
            and self.ridge == other.ridge
            and np.array_equal(self.centers, other.centers)
        )

    def digest(self) -> str:
        h = hashlib.sha1()
        h.update(f"{self.basis}|{self.width!r}|{self.ridge!r}|{self.polynomial}".encode())
        h.update(np.ascontiguousarray(self.centers, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def _distances(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    # direct differences rather than the |x|^2 + |z|^2 - 2x.z expansion, which
    # loses all precision for nearby points
    return np.linalg.norm(X[:, None, :] - Z[None, :, :], axis=-1)


def kernel_map(x, config: KernelConfig) -> np.ndarray:
    """psi(x) for one point ``(e,)`` or a batch ``(n, e)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != config.coord_dim:
        raise DimensionMismatch(f"point has {X.shape[1]} coords, kernel expects {config.coord_dim}")
    Phi = config.phi(_distances(X, config.centers))
    if config.polynomial:
        Phi = np.hstack([Phi, np.ones((X.shape[0], 1)), X])
    return Phi[0] if single else Phi


@dataclass(frozen=True, eq=False)
class MappingModel:
    """Coefficient matrix ``C`` (D x N_psi) of one object's mapping."""

    coefficients: np.ndarray
    kernel: KernelConfig
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        C = np.array(self.coefficients, dtype=float, ndmin=2)
        if C.shape[1] != self.kernel.n_features:
            raise DimensionMismatch(
                f"coefficients have {C.shape[1]} columns, kernel needs {self.kernel.n_features}"
            )
        if not np.all(np.isfinite(C)):
            raise ValueError("non-finite mapping coefficients")
        object.__setattr__(self, "coefficients", C)

    @property
    def feature_dim(self) -> int:
        return self.coefficients.shape[0]

    @property
    def rbf_block(self) -> np.ndarray:
        return self.coefficients[:, : self.kernel.n_centers]

    def side_condition_residual(self) -> float:
        """max_l |P_t^T w^l| relative to the size of the w block."""
        if not self.kernel.polynomial:
            return 0.0
        Z = self.kernel.centers
        Pt = np.hstack([np.ones((Z.shape[0], 1)), Z])
        W = self.rbf_block
        scale = max(np.abs(W).max(), np.finfo(float).tiny)
        return float(np.abs(W @ Pt).max() / scale)


def _polynomial_block(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _nullspace(Pt: np.ndarray) -> np.ndarray:
    """Orthonormal basis of {w : Pt^T w = 0}."""
    return scipy.linalg.null_space(Pt.T)


def fit_mapping(embeddings, observations, config: KernelConfig) -> MappingModel:
    """Solve for the coefficient matrix of one object.

    Square case (as many views as centers): the bordered system

        [A + ridge*I  P_x] [W^T]   [Y]
        [P_t^T        0  ] [c^T] = [0]

    When the centers coincide with the embeddings this interpolates.
    Otherwise the ridge-regularized least-squares problem

        min |A W^T + P_x c^T - Y|^2 + ridge |W|^2   s.t.  P_t^T W^T = 0

    is solved by restricting ``W^T`` to the null space of ``P_t^T`` and
    calling an orthogonal least-squares solver on the stacked system (same
    minimizer as the constrained normal equations, without squaring the
    condition number).
    """
    X = np.array(embeddings, dtype=float, ndmin=2)
    Y = np.asarray(observations, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, e = X.shape
    if Y.shape[0] != n:
        raise DimensionMismatch(f"{n} embeddings but {Y.shape[0]} observation rows")
    if e != config.coord_dim:
        raise DimensionMismatch(f"embeddings have {e} coords, centers have {config.coord_dim}")
    if n < 2:
        raise DimensionMismatch("need at least two views to fit a mapping")
    if config.polynomial and n < e + 1:
        raise DimensionMismatch(f"need at least {e + 1} views for the polynomial part")

    M = config.n_centers
    D = Y.shape[1]
    A = config.phi(_distances(X, config.centers))
    lam = config.ridge

    if not config.polynomial:
        if n == M:
            K = A + lam * np.eye(M)
            _check_cond(K)
            W = np.linalg.solve(K, Y)
        else:
            K = np.vstack([A, np.sqrt(lam) * np.eye(M)])
            _check_cond(K)
            W = np.linalg.lstsq(K, np.vstack([Y, np.zeros((M, D))]), rcond=None)[0]
        return MappingModel(W.T, config)

    Px = _polynomial_block(X)
    Pt = _polynomial_block(config.centers)
    q = e + 1
    if n == M:
        K = np.block([[A + lam * np.eye(M), Px], [Pt.T, np.zeros((q, q))]])
        _check_cond(K)
        sol = np.linalg.solve(K, np.vstack([Y, np.zeros((q, D))]))
        W, c = sol[:M], sol[M:]
    else:
        N = _nullspace(Pt)
        r = N.shape[1]
        K = np.block([[A @ N, Px], [np.sqrt(lam) * np.eye(r), np.zeros((r, q))]])
        _check_cond(K)
        sol = np.linalg.lstsq(K, np.vstack([Y, np.zeros((r, D))]), rcond=None)[0]
        W, c = N @ sol[:r], sol[r:]
    return MappingModel(np.hstack([W.T, c.T]), config)


def _check_cond(K: np.ndarray) -> None:
    if not np.all(np.isfinite(K)):
        raise SingularSystem("kernel system has non-finite entries")
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(
            f"kernel system condition number {cond:.3g} exceeds {COND_LIMIT:.0e}; "
            "centers may be degenerate or embeddings duplicated"
        )


def evaluate_mapping(model: MappingModel, x) -> np.ndarray:
    """``C @ psi(x)``; ``(D,)`` for one point, ``(n, D)`` for a batch."""
    psi = kernel_map(x, model.kernel)
    return psi @ model.coefficients.T


def synthesize_view(model: MappingModel, pose: PoseAngles, image_shape, scale: float = 1.0) -> np.ndarray:
    """Render the image the mapping predicts at ``pose``, clamped to [0, scale]."""
    rows, cols = image_shape
    if rows * cols != model.feature_dim:
        raise ShapeMismatch(f"image {rows}x{cols} does not match feature dim {model.feature_dim}")
    y = evaluate_mapping(model, embed(pose))
    return np.clip(y, 0.0, scale).reshape(rows, cols)


def synthesis_mse(reference, synthesized) -> float:
    a = np.asarray(reference, dtype=float)
    b = np.asarray(synthesized, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def require_same_kernel(models) -> KernelConfig:
    first = models[0].kernel
    for m in models[1:]:
        if not first.matches(m.kernel):
            raise ConfigMismatch("mapping models were trained with different kernels or centers")
    return first
