"""Multi-camera rig: per-camera extrinsics ``T_c_b``, intrinsics and baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRigError
from .fisheye import FisheyeIntrinsics
from .geometry import RigidTransform


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares plane through ``points``; returns ``(centroid, unit normal)``.

    Raises:
        DegenerateRigError: if the points are (nearly) collinear.
    """
    P = np.asarray(points, dtype=float)
    if len(P) < 3:
        raise DegenerateRigError("need at least three camera centers to fit a rig plane")
    c = P.mean(axis=0)
    _, s, vt = np.linalg.svd(P - c)
    scale = max(s[0], 1e-300)
    if s[1] / scale < 1e-9:
        raise DegenerateRigError("camera centers are collinear")
    return c, vt[2]


def ring_order(centers: np.ndarray, normal: np.ndarray) -> list[int]:
    """Camera indices sorted by azimuth about the rig centroid."""
    c = centers.mean(axis=0)
    ref = centers[0] - c
    ref = ref - (ref @ normal) * normal
    if np.linalg.norm(ref) < 1e-12:
        ref = np.cross(normal, [1.0, 0.0, 0.0])
        if np.linalg.norm(ref) < 1e-6:
            ref = np.cross(normal, [0.0, 1.0, 0.0])
    ref /= np.linalg.norm(ref)
    ortho = np.cross(normal, ref)
    d = centers - c
    az = np.arctan2(d @ ortho, d @ ref)
    return [int(i) for i in np.argsort(np.mod(az, 2 * math.pi), kind="stable")]


def neighbor_pairs(extrinsics: list[RigidTransform]) -> list[tuple[int, int]]:
    """Pairs of cameras adjacent around the rig."""
    n = len(extrinsics)
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    centers = np.array([T.center for T in extrinsics])
    _, normal = fit_plane(centers)
    order = ring_order(centers, normal)
    if n == 3:
        return [(0, 1), (0, 2), (1, 2)]
    pairs = []
    for k in range(n):
        a, b = order[k], order[(k + 1) % n]
        pairs.append((min(a, b), max(a, b)))
    return sorted(set(pairs))


@dataclass(frozen=True)
class RigConfig:
    """Cameras mounted on a rigid body.

    ``baseline_lengths`` holds the reference distance between the centers of
    each neighboring pair; it is fixed at construction and preserved by
    :meth:`with_extrinsics` so later estimates can be checked against it.
    """

    extrinsics: tuple[RigidTransform, ...]
    intrinsics: tuple[FisheyeIntrinsics, ...]
    pairs: tuple[tuple[int, int], ...] = ()
    baseline_lengths: tuple[float, ...] = field(default=())

    def __post_init__(self):
        ext = tuple(self.extrinsics)
        intr = tuple(self.intrinsics)
        if len(ext) != len(intr):
            raise ValueError("extrinsics and intrinsics must have the same length")
        object.__setattr__(self, "extrinsics", ext)
        object.__setattr__(self, "intrinsics", intr)
        pairs = tuple(tuple(p) for p in self.pairs) or tuple(neighbor_pairs(list(ext)))
        object.__setattr__(self, "pairs", pairs)
        if not self.baseline_lengths:
            lengths = tuple(float(np.linalg.norm(ext[i].center - ext[j].center)) for i, j in pairs)
            object.__setattr__(self, "baseline_lengths", lengths)
        elif len(self.baseline_lengths) != len(pairs):
            raise ValueError("one baseline length per camera pair is required")
        else:
            object.__setattr__(self, "baseline_lengths", tuple(float(b) for b in self.baseline_lengths))

    @property
    def num_cameras(self) -> int:
        return len(self.extrinsics)

    def centers(self) -> np.ndarray:
        """Camera centers in the body frame, ``(n, 3)``."""
        return np.array([T.center for T in self.extrinsics])

    def current_baselines(self) -> np.ndarray:
        c = self.centers()
        return np.array([np.linalg.norm(c[i] - c[j]) for i, j in self.pairs])

    def with_extrinsics(self, extrinsics) -> "RigConfig":
        return RigConfig(tuple(extrinsics), self.intrinsics, self.pairs, self.baseline_lengths)

    def neighbors(self, cam: int) -> list[int]:
        out = []
        for i, j in self.pairs:
            if i == cam:
                out.append(j)
            elif j == cam:
                out.append(i)
        return out


def look_extrinsic(center: np.ndarray, forward: np.ndarray, down: np.ndarray) -> RigidTransform:
    """``T_c_b`` for a camera at ``center`` with optical axis ``forward``."""
    z = np.asarray(forward, float)
    z = z / np.linalg.norm(z)
    y = np.asarray(down, float)
    y = y - (y @ z) * z
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    R = np.vstack([x, y, z])
    return RigidTransform.from_matrix(R, -R @ np.asarray(center, float))


def default_rig(length: float = 2.0, width: float = 1.0, intrinsics: FisheyeIntrinsics | None = None) -> RigConfig:
    """Four fisheye cameras on the corners of a ``length x width`` rectangle.

    Body frame: x forward, y left, z up.  Optical axes point diagonally
    outward at 45, 135, 225 and 315 degrees of azimuth.
    """
    phi = intrinsics or FisheyeIntrinsics.default()
    hx, hy = 0.5 * length, 0.5 * width
    corners = [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)]
    extr = []
    for k, (cx, cy) in enumerate(corners):
        az = math.radians(45.0 + 90.0 * k)
        fwd = np.array([math.cos(az), math.sin(az), 0.0])
        extr.append(look_extrinsic(np.array([cx, cy, 0.0]), fwd, np.array([0.0, 0.0, -1.0])))
    return RigConfig(tuple(extr), tuple(phi for _ in extr))
