"""Conceptual view manifold: pose angles <-> points on a unit sphere.

A viewing circle (yaw only) lives on S^1 in R^2, a view sphere (yaw, pitch)
on S^2 in R^3 and full head-style orientation (yaw, pitch, roll) on S^3 in
R^4. Points are plain 1-D numpy arrays; batches are ``(n, e)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GimbalDegenerate, InvalidAngles

TWO_PI = 2.0 * math.pi
CASES = ("1D", "2D", "3D")
GIMBAL_GUARD = 1e-9


def coord_dim(case: str) -> int:
    """Ambient dimension of the conceptual sphere for a pose case."""
    try:
        return {"1D": 2, "2D": 3, "3D": 4}[case]
    except KeyError:
        raise ValueError(f"unknown manifold case {case!r}") from None


def case_for_dim(e: int) -> str:
    try:
        return {2: "1D", 3: "2D", 4: "3D"}[e]
    except KeyError:
        raise ValueError(f"no manifold case has {e} coordinates") from None


def wrap_angle(a):
    """Map angles to [0, 2pi)."""
    out = np.mod(a, TWO_PI)
    # mod of a tiny negative number rounds up to exactly 2pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PoseAngles:
    """Yaw/pitch/roll in radians. Yaw is wrapped to [0, 2pi) on construction."""

    yaw: float
    pitch: Optional[float] = None
    roll: Optional[float] = None

    def __post_init__(self):
        vals = [v for v in (self.yaw, self.pitch, self.roll) if v is not None]
        if self.yaw is None:
            raise InvalidAngles("yaw is required")
        if self.roll is not None and self.pitch is None:
            raise InvalidAngles("roll given without pitch")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidAngles(f"non-finite angle in {vals}")
        if self.pitch is not None and abs(self.pitch) > math.pi / 2:
            raise InvalidAngles(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if self.roll is not None and abs(self.roll) >= math.pi / 2:
            raise InvalidAngles(f"roll {self.roll} outside (-pi/2, pi/2)")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def case(self) -> str:
        if self.pitch is None:
            return "1D"
        return "2D" if self.roll is None else "3D"

    @classmethod
    def from_degrees(cls, yaw, pitch=None, roll=None) -> "PoseAngles":
        rad = lambda v: None if v is None else math.radians(v)
        return cls(rad(yaw), rad(pitch), rad(roll))

    def degrees(self) -> tuple:
        deg = lambda v: None if v is None else math.degrees(v)
        return deg(self.yaw), deg(self.pitch), deg(self.roll)

    def as_tuple(self) -> tuple:
        return tuple(v for v in (self.yaw, self.pitch, self.roll) if v is not None)


def embed_angles(yaw, pitch=None, roll=None) -> np.ndarray:
    """Vectorized embedding. Returns shape ``(..., e)``."""
    yaw = np.asarray(yaw, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    if pitch is None:
        return np.stack([c, s], axis=-1)
    pitch = np.asarray(pitch, dtype=float)
    cb, sb = np.cos(pitch), np.sin(pitch)
    if roll is None:
        return np.stack([c * cb, s * cb, sb], axis=-1)
    roll = np.asarray(roll, dtype=float)
    cz, sz = np.cos(roll), np.sin(roll)
    return np.stack([c * cb * cz, s * cb * cz, sb * cz, sz], axis=-1)


def embed(pose: PoseAngles) -> np.ndarray:
    return embed_angles(pose.yaw, pose.pitch, pose.roll)


def angles_from_points(X: np.ndarray) -> tuple:
    """Vectorized inverse of :func:`embed_angles` without pole checks.

    Returns ``(yaw,)``, ``(yaw, pitch)`` or ``(yaw, pitch, roll)`` arrays.
    The arcsine inverses are evaluated as arctan2 of the component against
    the norm of the preceding ones, which is the same value on the unit
    sphere but stays accurate near the poles.
    """
    X = np.asarray(X, dtype=float)
    e = X.shape[-1]
    yaw = wrap_angle(np.arctan2(X[..., 1], X[..., 0]))
    if e == 2:
        return (yaw,)
    pitch = np.arctan2(X[..., 2], np.hypot(X[..., 0], X[..., 1]))
    if e == 3:
        return yaw, pitch
    roll = np.arctan2(X[..., 3], np.linalg.norm(X[..., :3], axis=-1))
    return yaw, pitch, roll


def recover_angles(x: np.ndarray) -> PoseAngles:
    """Pose angles of a conceptual point (full-range yaw via atan2)."""
    x = np.asarray(x, dtype=float)
    n = float(np.linalg.norm(x))
    if abs(n - 1.0) > 1e-9:
        raise InvalidAngles(f"point is not unit norm (|x| = {n!r})")
    e = x.shape[-1]
    if e == 3 and abs(x[2]) >= 1.0 - GIMBAL_GUARD:
        raise GimbalDegenerate("yaw undefined at the pole of the view sphere")
    if e == 4:
        if abs(x[3]) >= 1.0 - GIMBAL_GUARD:
            raise GimbalDegenerate("pitch and yaw undefined at roll = +-pi/2")
        if abs(x[2]) >= (1.0 - GIMBAL_GUARD) * np.linalg.norm(x[:3]):
            raise GimbalDegenerate("yaw undefined at pitch = +-pi/2")
    return PoseAngles(*(float(a) for a in angles_from_points(x)))


def angular_error(a, b):
    """Circular distance between two angles, in [0, pi]."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), TWO_PI)
    out = np.minimum(d, TWO_PI - d)
    if np.ndim(out) == 0:
        return float(out)
    return out


def place_centers(count: int, case: str = "1D") -> np.ndarray:
    """Deterministic, evenly spread kernel centers on the conceptual sphere.

    1D: uniform angles ``2*pi*j/count``. 2D: Fibonacci lattice on S^2.
    3D: a stratified spiral on S^3 -- the first coordinate is stratified and
    the two Hopf angles follow the additive recurrence of the generalized
    golden ratio (plastic number), pushed through the volume-preserving
    parameterization of S^3.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    j = np.arange(count, dtype=float)
    if case == "1D":
        return embed_angles(TWO_PI * j / count)
    if case == "2D":
        z = 1.0 - (2.0 * j + 1.0) / count
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = j * math.pi * (3.0 - math.sqrt(5.0))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    if case == "3D":
        g = 1.32471795724474602596  # plastic number
        u1 = (j + 0.5) / count
        u2 = np.mod(0.5 + j / g, 1.0)
        u3 = np.mod(0.5 + j / (g * g), 1.0)
        r1, r2 = np.sqrt(1.0 - u1), np.sqrt(u1)
        t1, t2 = TWO_PI * u2, TWO_PI * u3
        return np.stack([r1 * np.cos(t1), r1 * np.sin(t1), r2 * np.cos(t2), r2 * np.sin(t2)], axis=-1)
    raise ValueError(f"unknown manifold case {case!r}")


def random_points(rng: np.random.Generator, n: int, case: str) -> np.ndarray:
    """Uniform samples on the conceptual sphere of ``case``."""
    X = rng.standard_normal((n, coord_dim(case)))
    return X / np.linalg.norm(X, axis=1, keepdims=True)
