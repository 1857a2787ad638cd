"""Rigid transforms parameterized by an axis-angle vector and a translation.

A transform ``T`` maps a point ``X`` to ``R(r) @ X + t``.  Frames follow the
``T_a_b`` convention used throughout the package: ``T_c_b`` takes points from
the body frame ``b`` to the camera frame ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError

_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def skew_batch(v: np.ndarray) -> np.ndarray:
    """Stack of cross-product matrices for an ``(N, 3)`` array."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotation_matrix(r: np.ndarray) -> np.ndarray:
    """Rodrigues' formula, with a Taylor expansion near zero angle."""
    r = np.asarray(r, dtype=float)
    theta2 = float(r @ r)
    K = skew(r)
    if theta2 < _SMALL_ANGLE**2:
        # sin(t)/t ~ 1 - t^2/6, (1 - cos t)/t^2 ~ 1/2 - t^2/24
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_matrices(r: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rotation_matrix` for an ``(N, 3)`` array."""
    r = np.asarray(r, dtype=float).reshape(-1, 3)
    theta2 = np.einsum("ij,ij->i", r, r)
    theta = np.sqrt(theta2)
    small = theta2 < _SMALL_ANGLE**2
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    K = skew_batch(r)
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)


def _canonical_axis_sign(axis: np.ndarray) -> np.ndarray:
    # At exactly pi, +axis and -axis are the same rotation; pick the one whose
    # first non-negligible component is positive.
    for c in axis:
        if abs(c) > 1e-12:
            return axis if c > 0 else -axis
    return axis


def canonicalize(r: np.ndarray) -> np.ndarray:
    """Map an axis-angle vector to the equivalent one with angle in [0, pi]."""
    r = np.asarray(r, dtype=float)
    theta = float(np.linalg.norm(r))
    if theta <= math.pi:
        if theta == math.pi:
            return _canonical_axis_sign(r)
        return r.copy()
    axis = r / theta
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta > math.pi:
        theta = 2.0 * math.pi - theta
        axis = -axis
    out = theta * axis
    if theta == math.pi:
        out = _canonical_axis_sign(out)
    return out


def rotation_vector(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotation_matrix`, returning the canonical vector.

    Stable for angles near 0 and near pi.
    """
    R = np.asarray(R, dtype=float)
    s = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = float(np.linalg.norm(s))
    cos_t = max(-1.0, min(1.0, 0.5 * (np.trace(R) - 1.0)))
    theta = math.atan2(sin_t, cos_t)
    if cos_t > -0.5:
        if sin_t < _SMALL_ANGLE:
            # theta ~ sin_t; second order correction is below round-off
            return s * (1.0 + sin_t * sin_t / 6.0)
        return s * (theta / sin_t)
    # near pi the antisymmetric part vanishes; read the axis off the
    # symmetric part: S = cos I + (1 - cos) a a^T
    S = 0.5 * (R + R.T)
    A = (S - cos_t * np.eye(3)) / (1.0 - cos_t)
    k = int(np.argmax(np.diag(A)))
    axis = A[:, k] / math.sqrt(max(A[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    if sin_t > 1e-12:
        if axis @ s < 0.0:
            axis = -axis
        return canonicalize(theta * axis)
    return _canonical_axis_sign(math.pi * axis)


def so3_exp_left(omega: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Left-multiplicative rotation update ``Exp(omega) @ R``."""
    return rotation_matrix(omega) @ R


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(3)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RigidTransform:
    """Axis-angle rotation plus translation; ``T * X = R(rotation) X + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _readonly(canonicalize(np.asarray(self.rotation, float).reshape(3))))
        object.__setattr__(self, "translation", _readonly(self.translation))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, R: np.ndarray, t: np.ndarray) -> "RigidTransform":
        return cls(rotation_vector(R), t)

    @classmethod
    def from_homogeneous(cls, M: np.ndarray) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return cls.from_matrix(M[:3, :3], M[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 rotation matrix."""
        return rotation_matrix(self.rotation)

    @property
    def angle(self) -> float:
        return float(np.linalg.norm(self.rotation))

    def homogeneous(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.matrix
        M[:3, 3] = self.translation
        return M

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Transform a point ``(3,)`` or a stack of points ``(N, 3)``."""
        X = np.asarray(X, dtype=float)
        return X @ self.matrix.T + self.translation

    def rotate(self, v: np.ndarray) -> np.ndarray:
        """Rotate directions without translating."""
        return np.asarray(v, dtype=float) @ self.matrix.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self * other``: apply ``other`` first, then ``self``."""
        Ra = self.matrix
        return RigidTransform.from_matrix(Ra @ other.matrix, Ra @ other.translation + self.translation)

    def __mul__(self, other: "RigidTransform") -> "RigidTransform":
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        Rt = self.matrix.T
        return RigidTransform.from_matrix(Rt, -(Rt @ self.translation))

    @property
    def center(self) -> np.ndarray:
        """Position of the target frame's origin in the source frame.

        For ``T_c_b`` this is the camera center in body coordinates.
        """
        return -(self.matrix.T @ self.translation)

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        r = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"RigidTransform(rotation=[{r}], translation=[{t}])"

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation))

    def __hash__(self) -> int:
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def apply(T: RigidTransform, X: np.ndarray) -> np.ndarray:
    return T.apply(X)


def compose(A: RigidTransform, B: RigidTransform) -> RigidTransform:
    return A.compose(B)


def inverse(T: RigidTransform) -> RigidTransform:
    return T.inverse()


def rotation_angle_between(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle (radians) between two rotation matrices."""
    return float(np.linalg.norm(rotation_vector(Ra.T @ Rb)))


def project_unit_sphere(X: np.ndarray) -> np.ndarray:
    """Normalize points onto the unit sphere.

    Accepts ``(3,)`` or ``(N, 3)``.  Raises :class:`DegenerateInputError` for a
    zero vector.
    """
    X = np.asarray(X, dtype=float)
    n = np.linalg.norm(X, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise DegenerateInputError("cannot project the zero vector onto the unit sphere")
    return X / n


def angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle between (stacks of) vectors, accurate for small angles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def chord_from_angle(angle: float) -> float:
    """Chordal distance between unit rays separated by ``angle``."""
    return 2.0 * math.sin(0.5 * angle)


def angle_from_chord(chord):
    return 2.0 * np.arcsin(np.clip(np.asarray(chord) * 0.5, 0.0, 1.0))
