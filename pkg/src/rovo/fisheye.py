"""Equidistant fisheye lens model (``r = f * theta``).

Pixels are ``(u, v)`` with ``u`` along image columns (camera +x) and ``v``
along rows (camera +y).  The optical axis is camera +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, OutOfFovError

PAPER_RESOLUTION = (1600, 1532)
PAPER_HALF_FOV = math.radians(110.0)


@dataclass(frozen=True)
class FisheyeIntrinsics:
    focal: float
    principal_point: tuple[float, float]
    resolution: tuple[int, int]
    fov_max: float

    def __post_init__(self):
        if not 0.0 < self.fov_max <= math.pi:
            raise ValueError(f"fov_max must be in (0, pi], got {self.fov_max}")
        if self.focal <= 0.0:
            raise ValueError("focal must be positive")
        w, h = self.resolution
        cx, cy = self.principal_point
        if not (0.0 <= cx <= w and 0.0 <= cy <= h):
            raise ValueError("principal point outside the image")
        object.__setattr__(self, "principal_point", (float(cx), float(cy)))
        object.__setattr__(self, "resolution", (int(w), int(h)))

    @classmethod
    def default(cls) -> "FisheyeIntrinsics":
        """1600x1532 sensor with the 110 deg half-FOV touching the short edge."""
        w, h = PAPER_RESOLUTION
        return cls(focal=(h / 2) / PAPER_HALF_FOV, principal_point=(w / 2, h / 2), resolution=(w, h), fov_max=PAPER_HALF_FOV)

    @property
    def max_radius(self) -> float:
        return self.focal * self.fov_max

    def in_fov(self, X: np.ndarray) -> np.ndarray:
        """Boolean mask of camera-frame points within ``fov_max`` of the axis."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return incidence_angle(X) <= self.fov_max

    def in_image(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w, h = self.resolution
        return (x[:, 0] >= 0) & (x[:, 0] <= w - 1) & (x[:, 1] >= 0) & (x[:, 1] <= h - 1)


def incidence_angle(X: np.ndarray) -> np.ndarray:
    """Angle between camera-frame points and the optical axis."""
    X = np.asarray(X, dtype=float)
    rho = np.hypot(X[..., 0], X[..., 1])
    return np.arctan2(rho, X[..., 2])


def project(X: np.ndarray, phi: FisheyeIntrinsics, check: bool = True) -> np.ndarray:
    """Map camera-frame points ``(3,)`` or ``(N, 3)`` to pixels.

    Raises:
        DegenerateInputError: for the zero vector.
        OutOfFovError: if any point lies beyond ``phi.fov_max`` and ``check``.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    rho = np.hypot(X[:, 0], X[:, 1])
    if np.any((rho == 0.0) & (X[:, 2] == 0.0)):
        raise DegenerateInputError("cannot project the zero vector")
    theta = np.arctan2(rho, X[:, 2])
    if check and np.any(theta > phi.fov_max):
        raise OutOfFovError(f"incidence angle {np.degrees(theta.max()):.3f} deg exceeds fov_max")
    r = phi.focal * theta
    safe = np.where(rho > 0.0, rho, 1.0)
    # on the optical axis the direction is irrelevant since r == 0
    cosp = np.where(rho > 0.0, X[:, 0] / safe, 0.0)
    sinp = np.where(rho > 0.0, X[:, 1] / safe, 0.0)
    cx, cy = phi.principal_point
    out = np.column_stack([cx + r * cosp, cy + r * sinp])
    return out[0] if single else out


def unproject(x: np.ndarray, phi: FisheyeIntrinsics, check: bool = True) -> np.ndarray:
    """Map pixels ``(2,)`` or ``(N, 2)`` to unit rays in the camera frame."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    cx, cy = phi.principal_point
    du = x[:, 0] - cx
    dv = x[:, 1] - cy
    r = np.hypot(du, dv)
    if check and np.any(r > phi.max_radius * (1.0 + 1e-12)):
        raise OutOfFovError("pixel lies beyond the lens field of view")
    theta = r / phi.focal
    safe = np.where(r > 0.0, r, 1.0)
    s = np.sin(theta)
    out = np.column_stack([
        np.where(r > 0.0, s * du / safe, 0.0),
        np.where(r > 0.0, s * dv / safe, 0.0),
        np.cos(theta),
    ])
    return out[0] if single else out
