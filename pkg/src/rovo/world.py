"""Synthetic ground-truth scenes and simulated bearing observations.

Stands in for rendered imagery plus an image frontend: every observation is
a unit ray in the camera frame tagged with a track id.  Static landmarks use
their own id as track id, so correct tracks are consistent over time and
across cameras; mismatches are simulated by shuffling ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError
from .geometry import RigidTransform, rotation_matrices
from .rig import RigConfig

MAX_RANGE = 100.0
MIN_RANGE = 0.3
TRAJECTORIES = ("straight", "circle", "lawnmower")


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene.

    ``length`` is the path length in meters; frames are spaced ``length /
    frames`` apart, so a circle closes exactly after ``frames`` steps.
    ``density`` counts landmarks per meter of path (walls and ground).
    """

    trajectory: str = "circle"
    frames: int = 300
    length: float = 350.0
    density: float = 3.0
    wall_distance: float = 8.0
    wall_height: float = 8.0
    ground_fraction: float = 0.25
    body_height: float = 1.6
    dynamic: int = 0
    dynamic_speed: float = 4.0
    frame_rate: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if self.trajectory not in TRAJECTORIES:
            raise SpecError(f"unknown trajectory {self.trajectory!r}; choose from {TRAJECTORIES}")
        if self.frames <= 0:
            raise SpecError("frames must be positive")
        if self.length <= 0:
            raise SpecError("length must be positive")
        if self.density <= 0:
            raise SpecError("landmark density must be positive")
        if self.dynamic < 0:
            raise SpecError("dynamic object count must be non-negative")
        if self.frame_rate <= 0 or self.wall_distance <= 0 or self.wall_height <= 0:
            raise SpecError("frame rate and wall geometry must be positive")
        if not 0.0 <= self.ground_fraction <= 1.0:
            raise SpecError("ground_fraction must lie in [0, 1]")

    @property
    def step(self) -> float:
        return self.length / self.frames


@dataclass(frozen=True)
class DynamicObject:
    """Rigid point cluster moving at constant velocity."""

    ids: np.ndarray
    offsets: np.ndarray  # (k, 3) relative to the cluster center
    origin: np.ndarray  # center at time 0
    velocity: np.ndarray

    def points(self, t: float) -> np.ndarray:
        return self.origin + self.velocity * t + self.offsets


@dataclass(frozen=True)
class SyntheticScene:
    spec: SceneSpec
    landmark_ids: np.ndarray
    landmarks: np.ndarray  # (N, 3) world points
    dynamic: tuple[DynamicObject, ...]
    trajectory: tuple[RigidTransform, ...]  # T_b_w per frame
    timestamps: np.ndarray

    @property
    def frame_rate(self) -> float:
        return self.spec.frame_rate

    def points_at(self, frame: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Track ids, world points and a dynamic flag for every point at ``frame``."""
        t = float(self.timestamps[frame])
        ids = [self.landmark_ids]
        pts = [self.landmarks]
        dyn = [np.zeros(len(self.landmark_ids), dtype=bool)]
        for obj in self.dynamic:
            ids.append(obj.ids)
            pts.append(obj.points(t))
            dyn.append(np.ones(len(obj.ids), dtype=bool))
        return np.concatenate(ids), np.vstack(pts), np.concatenate(dyn)


@dataclass(frozen=True)
class Observation:
    frame: int
    camera: int
    track: int
    bearing: np.ndarray
    landmark: int | None = None


@dataclass
class FrameObservations:
    """All observations of one frame, stored column-wise."""

    frame: int
    camera: np.ndarray
    track: np.ndarray
    bearing: np.ndarray

    def __len__(self) -> int:
        return len(self.track)

    def __iter__(self):
        for c, t, b in zip(self.camera, self.track, self.bearing):
            yield Observation(self.frame, int(c), int(t), b)

    def for_camera(self, cam: int) -> "FrameObservations":
        m = self.camera == cam
        return FrameObservations(self.frame, self.camera[m], self.track[m], self.bearing[m])


def _path(spec: SceneSpec, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Planar position ``(N, 2)`` and heading ``(N,)`` at arc length ``s``.

    Every path starts at the origin heading along +x.
    """
    s = np.asarray(s, dtype=float)
    if spec.trajectory == "straight":
        return np.column_stack([s, np.zeros_like(s)]), np.zeros_like(s)
    if spec.trajectory == "circle":
        R = spec.length / (2 * math.pi)
        a = s / R
        return np.column_stack([R * np.sin(a), R - R * np.cos(a)]), a
    # lawnmower: straight legs joined by alternating half-circle turns
    r = 1.5 * spec.wall_distance + 2.0
    turn = math.pi * r
    leg = max(spec.length / 3.0 - turn, 10.0)
    period = leg + turn
    pos = np.zeros((len(s), 2))
    head = np.zeros(len(s))
    for k, sk in enumerate(s):
        i = int(math.floor(sk / period))
        rem = sk - i * period
        y0 = 2 * r * i
        sign = 1.0 if i % 2 == 0 else -1.0
        x_start = 0.0 if i % 2 == 0 else leg
        if rem <= leg:
            pos[k] = (x_start + sign * rem, y0)
            head[k] = 0.0 if sign > 0 else math.pi
        else:
            a = (rem - leg) / r
            cx = x_start + sign * leg
            # turn left (sign>0) or right keeping +y progression
            pos[k] = (cx + sign * r * math.sin(a), y0 + r - r * math.cos(a))
            head[k] = (a if sign > 0 else math.pi - a)
    return pos, head


def _body_pose(p: np.ndarray, heading: float) -> RigidTransform:
    """``T_b_w`` for a body at planar position ``p`` with yaw ``heading``."""
    c, s = math.cos(heading), math.sin(heading)
    R_wb = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    t_wb = np.array([p[0], p[1], 0.0])
    return RigidTransform.from_matrix(R_wb.T, -R_wb.T @ t_wb)


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Deterministic scene for ``spec`` (seeded by ``spec.seed``).

    Landmarks sit on two vertical walls flanking the path and on the ground
    plane ``body_height`` below the body origin.

    Raises:
        SpecError: for invalid parameters.
    """
    spec.validate()
    rng = np.random.default_rng([spec.seed, 1])
    n_frames = spec.frames
    s_frames = np.arange(n_frames) * spec.step
    pos, head = _path(spec, s_frames)
    trajectory = tuple(_body_pose(pos[k], head[k]) for k in range(n_frames))
    timestamps = np.arange(n_frames) / spec.frame_rate

    margin = 30.0
    n_land = max(1, int(round(spec.density * (spec.length + 2 * margin))))
    s = rng.uniform(-margin, spec.length + margin, n_land)
    if spec.trajectory == "straight":
        base, hd = np.column_stack([s, np.zeros_like(s)]), np.zeros_like(s)
    else:
        base, hd = _path(spec, np.mod(s, spec.length) if spec.trajectory == "circle" else np.clip(s, 0.0, spec.length))
    left = np.column_stack([-np.sin(hd), np.cos(hd)])
    ground = rng.uniform(size=n_land) < spec.ground_fraction
    side = np.where(rng.uniform(size=n_land) < 0.5, -1.0, 1.0)
    lateral = np.where(
        ground,
        side * rng.uniform(2.0, spec.wall_distance, n_land),
        side * (spec.wall_distance + rng.uniform(-0.5, 0.5, n_land)),
    )
    z = np.where(ground, -spec.body_height, -spec.body_height + rng.uniform(0.2, spec.wall_height, n_land))
    xy = base + lateral[:, None] * left
    landmarks = np.column_stack([xy, z])
    ids = np.arange(n_land, dtype=np.int64)

    dynamic = []
    next_id = n_land
    duration = n_frames / spec.frame_rate
    for _ in range(spec.dynamic):
        k = int(rng.integers(20, 101))
        offsets = rng.uniform([-2.0, -1.0, 0.0], [2.0, 1.0, 1.5], size=(k, 3))
        offsets[:, 2] -= spec.body_height
        t_cross = rng.uniform(0.0, duration)
        s_cross = min(spec.length, t_cross * spec.frame_rate * spec.step)
        p_cross, _ = _path(spec, np.array([s_cross]))
        ang = rng.uniform(0.0, 2 * math.pi)
        vel = spec.dynamic_speed * np.array([math.cos(ang), math.sin(ang), 0.0])
        origin = np.array([p_cross[0, 0], p_cross[0, 1], 0.0]) - vel * t_cross
        dynamic.append(DynamicObject(np.arange(next_id, next_id + k, dtype=np.int64), offsets, origin, vel))
        next_id += k

    return SyntheticScene(spec, ids, landmarks, tuple(dynamic), trajectory, timestamps)


def tangent_noise(bearings: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb unit rays by isotropic Gaussian displacement in their tangent plane."""
    b = np.atleast_2d(bearings)
    if sigma == 0.0 or len(b) == 0:
        return b.copy()
    helper = np.where(np.abs(b[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(b, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(b, e1)
    n = rng.normal(0.0, sigma, size=(len(b), 2))
    out = b + n[:, [0]] * e1 + n[:, [1]] * e2
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def observe_frame(
    scene: SyntheticScene,
    rig: RigConfig,
    frame: int,
    noise_sigma: float = 0.0,
    outlier_rate=0.0,
    rng: np.random.Generator | None = None,
) -> FrameObservations:
    """Simulated per-camera observations of every visible point at ``frame``.

    ``outlier_rate`` may be a scalar or one value per camera.  That fraction
    of each camera's static observations gets its track ids shuffled among
    themselves (every shuffled id is wrong and ids stay unique per camera).
    Dynamic points keep their own ids although they move.
    """
    if not 0 <= frame < len(scene.trajectory):
        raise IndexError(f"frame {frame} outside trajectory")
    rates = np.broadcast_to(np.asarray(outlier_rate, dtype=float), (rig.num_cameras,))
    if np.any(rates < 0) or np.any(rates >= 1):
        raise ValueError("outlier_rate must lie in [0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    ids, pts, dyn = scene.points_at(frame)
    T_b_w = scene.trajectory[frame]
    X_b = T_b_w.apply(pts)
    cams, tracks, bearings = [], [], []
    for c, (E, phi) in enumerate(zip(rig.extrinsics, rig.intrinsics)):
        X_c = E.apply(X_b)
        rng_c = np.linalg.norm(X_c, axis=1)
        vis = (rng_c > MIN_RANGE) & (rng_c <= MAX_RANGE)
        vis[vis] &= np.arctan2(np.hypot(X_c[vis, 0], X_c[vis, 1]), X_c[vis, 2]) <= phi.fov_max
        idx = np.flatnonzero(vis)
        b = X_c[idx] / rng_c[idx, None]
        b = tangent_noise(b, noise_sigma, rng)
        tr = ids[idx].copy()
        if rates[c] > 0.0:
            static = np.flatnonzero(~dyn[idx])
            n_out = int(round(rates[c] * len(static)))
            if n_out >= 2:
                sel = rng.choice(static, size=n_out, replace=False)
                tr[sel] = np.roll(tr[sel], 1)
        cams.append(np.full(len(idx), c, dtype=np.int64))
        tracks.append(tr)
        bearings.append(b)
    return FrameObservations(frame, np.concatenate(cams), np.concatenate(tracks), np.vstack(bearings) if bearings else np.zeros((0, 3)))


def perturb_extrinsics(rig: RigConfig, sigma_deg: float, rng: np.random.Generator) -> RigConfig:
    """Rotate each camera about its own center by a Gaussian axis-angle.

    Per-axis standard deviation is ``sigma_deg``.  Camera centers do not move,
    so the stored baseline lengths stay exact.
    """
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be non-negative")
    if sigma_deg == 0:
        return rig
    deltas = rng.normal(0.0, math.radians(sigma_deg), size=(rig.num_cameras, 3))
    out = []
    for E, R_d in zip(rig.extrinsics, rotation_matrices(deltas)):
        out.append(RigidTransform.from_matrix(R_d @ E.matrix, R_d @ E.translation))
    return rig.with_extrinsics(out)


@dataclass
class Dataset:
    """A simulated sequence: rig, per-frame observations and ground truth."""

    rig: RigConfig
    frames: list[FrameObservations]
    ground_truth: list[RigidTransform]  # T_b_w per frame
    scene_config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def simulate(
    spec: SceneSpec,
    rig: RigConfig,
    noise_sigma: float = 0.0,
    outlier_rate=0.0,
    scene: SyntheticScene | None = None,
) -> Dataset:
    """Generate a scene and observe every frame; seeded by ``spec.seed``."""
    scene = scene or generate_scene(spec)
    frames = [
        observe_frame(scene, rig, k, noise_sigma, outlier_rate, np.random.default_rng([spec.seed, 2, k]))
        for k in range(len(scene.trajectory))
    ]
    cfg = {f.name: getattr(spec, f.name) for f in spec.__dataclass_fields__.values()}
    cfg.update(noise_sigma=noise_sigma, outlier_rate=outlier_rate)
    return Dataset(rig, frames, list(scene.trajectory), cfg)

