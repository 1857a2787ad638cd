"""Inter-view match filtering, triangulation and track bookkeeping.

Candidate inter-view matches come from the (simulated) descriptor matcher:
observations in two neighboring cameras that carry the same track id.  They
are screened with stereo-style geometric policies before being triangulated
into landmarks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRigError, LowParallaxError
from .geometry import RigidTransform
from .hybrid import HybridProjectionConfig, build_config
from .rig import RigConfig, fit_plane
from .world import FrameObservations

FILTERS = ("y_distance", "epipolar", "positive_disparity", "left_right")


@dataclass(frozen=True)
class MatchThresholds:
    tau_y: float = 3.0  # warped pixels
    tau_e: float = math.radians(0.2)
    tau_parallel: float = math.radians(0.5)


@dataclass
class InterViewMatch:
    """A candidate correspondence between observations in cameras ``i`` and ``j``."""

    cameras: tuple[int, int]
    observations: tuple[int, int]
    flags: dict[str, bool] = field(default_factory=dict)
    point: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return bool(self.flags) and all(self.flags.values())


@dataclass(frozen=True)
class Triangulation:
    point: np.ndarray
    parallax: float  # angle between the two rays (radians)
    gap: float  # distance between the closest points of the rays
    depths: tuple[float, float]


@dataclass(frozen=True)
class PairGeometry:
    """Per-pair quantities shared by all candidates of a camera pair (body frame)."""

    cam_i: int
    cam_j: int
    R_i: np.ndarray  # body->camera rotations
    R_j: np.ndarray
    center_i: np.ndarray
    center_j: np.ndarray
    rect_normal: np.ndarray  # common plane normal, perpendicular to the baseline
    rect_up: np.ndarray
    focal: float

    @classmethod
    def build(cls, rig: RigConfig, i: int, j: int, warps: list[HybridProjectionConfig] | None = None) -> "PairGeometry":
        Ei, Ej = rig.extrinsics[i], rig.extrinsics[j]
        ci, cj = Ei.center, Ej.center
        centers = rig.centers()
        try:
            _, up = fit_plane(centers)
        except DegenerateRigError:
            up = np.array([0.0, 0.0, 1.0])
        cam_up = Ei.matrix.T @ np.array([0.0, -1.0, 0.0])
        if up @ cam_up < 0:
            up = -up
        base = cj - ci
        base = base - (base @ up) * up
        d = np.cross(up, base)
        d /= np.linalg.norm(d)
        axis_sum = Ei.matrix.T[:, 2] + Ej.matrix.T[:, 2]
        if d @ axis_sum < 0:
            d = -d
        if warps is not None:
            focal = 0.5 * (warps[i].projection_focal + warps[j].projection_focal)
        else:
            focal = build_config(rig, i).projection_focal if rig.num_cameras >= 3 else 300.0
        return cls(i, j, Ei.matrix, Ej.matrix, ci, cj, d, up, focal)

    def rectified_rows(self, b_i: np.ndarray, b_j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Row coordinate of each bearing on the pair's shared rectifying plane."""
        d_i = b_i @ self.R_i
        d_j = b_j @ self.R_j
        with np.errstate(divide="ignore", invalid="ignore"):
            qi = d_i @ self.rect_normal
            qj = d_j @ self.rect_normal
            yi = np.where(qi > 1e-6, -self.focal * (d_i @ self.rect_up) / qi, np.nan)
            yj = np.where(qj > 1e-6, -self.focal * (d_j @ self.rect_up) / qj, np.nan)
        return yi, yj


def epipolar_residual(d_i: np.ndarray, d_j: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Angle of body-frame ray ``d_j`` to the plane through ``d_i`` and the baseline."""
    n = np.cross(d_i, baseline)
    nn = np.linalg.norm(n, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.abs(np.sum(n * d_j, axis=-1)) / nn
    return np.where(nn > 1e-12, np.arcsin(np.clip(s, 0.0, 1.0)), math.pi / 2)


def _midpoint(o_i, d_i, o_j, d_j):
    w0 = o_i - o_j
    b = np.sum(d_i * d_j, axis=-1)
    d = np.sum(d_i * w0, axis=-1)
    e = np.sum(d_j * w0, axis=-1)
    denom = 1.0 - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_i = (b * e - d) / denom
        lam_j = (e - b * d) / denom
    p_i = o_i + lam_i[..., None] * d_i
    p_j = o_j + lam_j[..., None] * d_j
    return 0.5 * (p_i + p_j), lam_i, lam_j, np.linalg.norm(p_i - p_j, axis=-1)


def triangulate_rays(o_i, d_i, o_j, d_j):
    """Vectorized midpoint triangulation of rays given by origins and unit directions.

    Returns ``(points, parallax, gap, depth_i, depth_j)``.
    """
    o_i, d_i, o_j, d_j = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (o_i, d_i, o_j, d_j))
    pts, lam_i, lam_j, gap = _midpoint(o_i, d_i, o_j, d_j)
    cross = np.linalg.norm(np.cross(d_i, d_j), axis=-1)
    parallax = np.arctan2(cross, np.sum(d_i * d_j, axis=-1))
    return pts, parallax, gap, lam_i, lam_j


def triangulate(
    bearing_i: np.ndarray,
    pose_i: RigidTransform,
    bearing_j: np.ndarray,
    pose_j: RigidTransform,
    tau_parallel: float = MatchThresholds.tau_parallel,
) -> Triangulation:
    """Midpoint of the closest approach between two camera rays.

    ``pose_i``/``pose_j`` map world points into the respective camera frames.

    Raises:
        LowParallaxError: if the rays are within ``tau_parallel`` of parallel.
    """
    d_i = pose_i.matrix.T @ np.asarray(bearing_i, float)
    d_j = pose_j.matrix.T @ np.asarray(bearing_j, float)
    d_i /= np.linalg.norm(d_i)
    d_j /= np.linalg.norm(d_j)
    parallax = math.atan2(np.linalg.norm(np.cross(d_i, d_j)), d_i @ d_j)
    if parallax < tau_parallel:
        raise LowParallaxError(f"ray angle {math.degrees(parallax):.4f} deg below threshold")
    pts, lam_i, lam_j, gap = _midpoint(pose_i.center, d_i, pose_j.center, d_j)
    return Triangulation(pts, float(parallax), float(gap), (float(lam_i), float(lam_j)))


def filter_candidates(
    pair: PairGeometry,
    bearings_i: np.ndarray,
    bearings_j: np.ndarray,
    candidates: np.ndarray,
    thresholds: MatchThresholds = MatchThresholds(),
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate every filter for a batch of candidates of one camera pair.

    Args:
        bearings_i, bearings_j: camera-frame observations of each camera.
        candidates: ``(K, 2)`` index pairs into the two bearing arrays.

    Returns:
        ``(flags, points)``: boolean ``(K, 4)`` array ordered like
        :data:`FILTERS` and body-frame triangulated points ``(K, 3)``.
    """
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    K = len(candidates)
    flags = np.zeros((K, 4), dtype=bool)
    if K == 0:
        return flags, np.zeros((0, 3))
    b_i = bearings_i[candidates[:, 0]]
    b_j = bearings_j[candidates[:, 1]]

    yi, yj = pair.rectified_rows(b_i, b_j)
    flags[:, 0] = np.abs(yi - yj) <= thresholds.tau_y

    d_i = b_i @ pair.R_i
    d_j = b_j @ pair.R_j
    baseline = pair.center_j - pair.center_i
    resid = epipolar_residual(d_i, d_j, baseline[None, :])
    flags[:, 1] = resid <= thresholds.tau_e

    pts, _, _, lam_i, lam_j = triangulate_rays(pair.center_i[None, :], d_i, pair.center_j[None, :], d_j)
    flags[:, 2] = (lam_i > 0) & (lam_j > 0)

    # mutual best under the epipolar residual among competing candidates
    best_i = {}
    best_j = {}
    for k, (p, q) in enumerate(candidates):
        if p not in best_i or resid[k] < resid[best_i[p]]:
            best_i[p] = k
        if q not in best_j or resid[k] < resid[best_j[q]]:
            best_j[q] = k
    for k, (p, q) in enumerate(candidates):
        flags[k, 3] = best_i[p] == k and best_j[q] == k
    return flags, pts


def filter_match(
    bearing_i: np.ndarray,
    bearing_j: np.ndarray,
    pair: PairGeometry,
    thresholds: MatchThresholds = MatchThresholds(),
) -> InterViewMatch:
    """Screen a single candidate (which is trivially its own mutual best)."""
    flags, pts = filter_candidates(pair, np.atleast_2d(bearing_i), np.atleast_2d(bearing_j), [[0, 0]], thresholds)
    m = InterViewMatch((pair.cam_i, pair.cam_j), (0, 0), dict(zip(FILTERS, (bool(f) for f in flags[0]))))
    if m.passed:
        m.point = pts[0]
    return m


@dataclass
class TrackInfo:
    landmark: int
    last_seen: int
    cameras: set[int] = field(default_factory=set)


@dataclass
class TrackTable:
    """Track id -> landmark id; a track maps to at most one landmark."""

    tracks: dict[int, TrackInfo] = field(default_factory=dict)

    def link(self, track: int, landmark: int, frame: int, cameras=()) -> None:
        self.tracks[int(track)] = TrackInfo(int(landmark), frame, set(int(c) for c in cameras))

    def unlink(self, track: int) -> None:
        self.tracks.pop(int(track), None)

    def unlink_landmarks(self, landmarks) -> None:
        dead = set(int(x) for x in landmarks)
        for t in [t for t, info in self.tracks.items() if info.landmark in dead]:
            del self.tracks[t]

    def landmark_of(self, track: int) -> int | None:
        info = self.tracks.get(int(track))
        return None if info is None else info.landmark

    def __contains__(self, track) -> bool:
        return int(track) in self.tracks

    def __len__(self) -> int:
        return len(self.tracks)


@dataclass
class Association:
    """2D-3D correspondences for one frame, grouped by camera."""

    obs_index: dict[int, np.ndarray]  # camera -> indices into the frame's observations
    landmark: dict[int, np.ndarray]  # camera -> landmark ids, aligned with obs_index
    queued: np.ndarray  # observation indices whose track has no landmark yet

    @property
    def total(self) -> int:
        return int(sum(len(v) for v in self.obs_index.values()))


def associate_tracks(
    obs: FrameObservations,
    table: TrackTable,
    live_landmarks=None,
    num_cameras: int | None = None,
) -> Association:
    """Split observations into known 2D-3D pairs and tracks awaiting triangulation.

    ``live_landmarks`` optionally restricts matches to landmarks still in the
    map; tracks pointing at dead landmarks are treated as unmatched.
    """
    n_cam = num_cameras if num_cameras is not None else (int(obs.camera.max()) + 1 if len(obs) else 0)
    lm = np.array([table.landmark_of(t) if t in table else -1 for t in obs.track], dtype=np.int64)
    if live_landmarks is not None and len(lm):
        live = np.isin(lm, np.fromiter(live_landmarks, dtype=np.int64))
        lm = np.where(live, lm, -1)
    known = lm >= 0
    by_idx = {}
    by_lm = {}
    for c in range(n_cam):
        m = np.flatnonzero(known & (obs.camera == c))
        by_idx[c] = m
        by_lm[c] = lm[m]
    return Association(by_idx, by_lm, np.flatnonzero(~known))
