"""Frame loop: associate, estimate the rig pose, grow the map, adjust the window.

Frame 0 defines the world frame (identity pose) and seeds the map by
triangulating inter-view matches between neighboring cameras.  Every later
frame runs

    associate -> multi-view RANSAC -> pose refinement -> new landmarks
    -> window update -> bundle adjustment

with a constant-velocity prediction standing in whenever RANSAC fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .backend import FrameState, ProblemOptions, WindowState, extrinsic_report, solve_window, update_window
from .errors import InsufficientDataError, RansacFailure, RovoError, UnderdeterminedError
from .estimation import RansacParams, multiview_p3p_ransac, ray_residuals, refine_pose, truncated_score
from .files import format_float, write_trajectory
from .frontend import MatchThresholds, PairGeometry, TrackTable, associate_tracks, filter_candidates
from .geometry import RigidTransform, angle_from_chord, chord_from_angle
from .lm import LmSettings
from .rig import RigConfig
from .world import Dataset, FrameObservations


class Mode(str, Enum):
    GT_EXT = "GTExt"
    NOISY_EXT = "NoisyExt"
    ONLINE_EXT = "OnlineExt"


class PipelineAborted(RovoError):
    """Too many consecutive frames without a usable RANSAC pose."""


@dataclass(frozen=True)
class PipelineConfig:
    """Run settings.

    ``extrinsic_sigma_deg`` is the assumed per-axis uncertainty of the
    supplied extrinsics.  It widens every angular gate (inter-view filters,
    RANSAC threshold, observation admission) until online calibration has
    had ``gate_decay_frames`` frames to settle.
    """

    mode: Mode = Mode.GT_EXT
    ransac: RansacParams = RansacParams()
    lm: LmSettings = LmSettings(max_iterations=30, cost_tolerance=1e-4)
    thresholds: MatchThresholds = MatchThresholds()
    window: int = 10
    seed: int = 0
    multi_weight: float = 2.0
    extrinsic_sigma_deg: float = 0.0
    gate_decay_frames: int = 30
    max_failure_fraction: float = 0.25
    min_inliers: int = 6

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.window < 2:
            raise ValueError("window must hold at least two frames")

    @property
    def optimize_extrinsics(self) -> bool:
        return self.mode is Mode.ONLINE_EXT


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    inlier_ratio: float
    reproj_err_deg: float
    num_landmarks: int
    ransac_failed: bool = False


@dataclass
class PipelineOutput:
    poses: list[RigidTransform]  # T_b_w per frame, latest estimate
    records: list[FrameRecord]
    extrinsic_history: list[tuple[int, tuple[RigidTransform, ...]]] = field(default_factory=list)
    final_extrinsics: tuple[RigidTransform, ...] = ()
    baseline_history: list[np.ndarray] = field(default_factory=list)
    window_solves: int = 0
    non_monotone_solves: int = 0  # solves whose accepted steps ever raised the cost

    @property
    def failed_frames(self) -> list[int]:
        return [r.frame for r in self.records if r.ransac_failed]

    def write_trajectory(self, path) -> None:
        write_trajectory(path, self.poses)

    def write_metrics(self, path) -> None:
        lines = ["frame,inlier_ratio,reproj_err_deg,num_landmarks"]
        for r in self.records:
            lines.append(f"{r.frame},{format_float(r.inlier_ratio)},{format_float(r.reproj_err_deg)},{r.num_landmarks}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_extrinsic_history(self, path, reference: int = 0) -> None:
        lines = ["frame,cam,pitch_deg,roll_deg,yaw_deg,tx,ty,tz"]
        for frame, extr in self.extrinsic_history:
            for row in extrinsic_report(extr, reference):
                vals = [row.pitch_deg, row.roll_deg, row.yaw_deg, *row.translation]
                lines.append(f"{frame},{row.camera}," + ",".join(format_float(v) for v in vals))
        Path(path).write_text("\n".join(lines) + "\n")


def _derived_seed(seed: int, frame: int) -> int:
    return int(np.random.SeedSequence([seed, frame]).generate_state(1)[0])


class _Runner:
    def __init__(self, dataset: Dataset, config: PipelineConfig, rig: RigConfig):
        self.data = dataset
        self.cfg = config
        self.rig = rig
        self.n_cam = rig.num_cameras
        self.table = TrackTable()
        self.window: WindowState | None = None
        self.extrinsics = tuple(rig.extrinsics)
        self.poses: dict[int, RigidTransform] = {}
        self.next_landmark = 0
        self.records: list[FrameRecord] = []
        self.history: list[tuple[int, tuple[RigidTransform, ...]]] = []
        self.baselines: list[np.ndarray] = []
        self._pairs_cache: tuple | None = None
        self.solves = 0
        self.non_monotone = 0

    # -- gates ---------------------------------------------------------------

    def _slack(self, frame: int) -> float:
        """Extra angular tolerance (radians) owed to uncertain extrinsics."""
        sigma = math.radians(self.cfg.extrinsic_sigma_deg)
        if sigma == 0.0:
            return 0.0
        if self.cfg.optimize_extrinsics:
            sigma *= max(0.0, 1.0 - frame / max(1, self.cfg.gate_decay_frames))
        return 3.0 * math.sqrt(3.0) * sigma

    def _tau(self, frame: int) -> float:
        slack = self._slack(frame)
        if slack == 0.0:
            return self.cfg.ransac.tau_r
        return chord_from_angle(angle_from_chord(self.cfg.ransac.tau_r) + slack)

    def _thresholds(self, frame: int) -> MatchThresholds:
        slack = self._slack(frame)
        th = self.cfg.thresholds
        if slack == 0.0:
            return th
        return replace(th, tau_e=th.tau_e + slack, tau_y=th.tau_y + 300.0 * math.tan(slack))

    def _pair_geometry(self) -> list[PairGeometry]:
        key = self.extrinsics
        if self._pairs_cache is None or self._pairs_cache[0] is not key:
            rig = self.rig.with_extrinsics(self.extrinsics)
            self._pairs_cache = (key, [PairGeometry.build(rig, i, j) for i, j in rig.pairs])
        return self._pairs_cache[1]

    # -- map growth ----------------------------------------------------------

    def _triangulate_new(self, obs: FrameObservations, pose: RigidTransform, candidates: np.ndarray, frame: int):
        """New landmarks from inter-view matches among ``candidates`` (observation indices).

        Returns ``(landmarks, cams, landmark_ids, bearings)`` for the window.
        """
        th = self._thresholds(frame)
        tau = self._tau(frame)
        pose_inv = pose.inverse()
        taken: set[int] = set()
        new_lm: dict[int, np.ndarray] = {}
        out_c, out_l, out_b = [], [], []
        cam = obs.camera[candidates]
        track = obs.track[candidates]
        ext_R = np.array([E.matrix for E in self.extrinsics])
        ext_t = np.array([E.translation for E in self.extrinsics])
        for pair in self._pair_geometry():
            in_i = candidates[cam == pair.cam_i]
            in_j = candidates[cam == pair.cam_j]
            common, ai, aj = np.intersect1d(obs.track[in_i], obs.track[in_j], assume_unique=False, return_indices=True)
            if len(common) == 0:
                continue
            keep = np.array([t not in taken for t in common.tolist()], dtype=bool)
            common, ai, aj = common[keep], ai[keep], aj[keep]
            if len(common) == 0:
                continue
            oi, oj = in_i[ai], in_j[aj]
            flags, pts_b = filter_candidates(
                pair, obs.bearing, obs.bearing, np.column_stack([oi, oj]), th
            )
            ok = flags.all(axis=1)
            # parallax gate on the body-frame rays
            d_i = obs.bearing[oi] @ pair.R_i
            d_j = obs.bearing[oj] @ pair.R_j
            parallax = np.arccos(np.clip(np.sum(d_i * d_j, axis=1), -1.0, 1.0))
            ok &= parallax >= th.tau_parallel
            for k in np.flatnonzero(ok):
                X_w = pose_inv.apply(pts_b[k])
                lid = self.next_landmark
                self.next_landmark += 1
                t = int(common[k])
                taken.add(t)
                # every camera seeing this track in this frame and agreeing with the point
                members = candidates[track == t]
                r = ray_residuals(
                    pose.matrix, pose.translation, ext_R, ext_t,
                    obs.bearing[members], np.repeat(X_w[None], len(members), 0), obs.camera[members],
                )
                members = members[r < tau]
                if len(set(obs.camera[members].tolist())) < 2:
                    continue
                new_lm[lid] = X_w
                self.table.link(t, lid, frame, obs.camera[members])
                out_c.append(obs.camera[members])
                out_l.append(np.full(len(members), lid, dtype=np.int64))
                out_b.append(obs.bearing[members])
        if out_c:
            return new_lm, np.concatenate(out_c), np.concatenate(out_l), np.vstack(out_b)
        return new_lm, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3))

    # -- per frame -----------------------------------------------------------

    def _predict(self, frame: int) -> RigidTransform:
        prev = self.poses[frame - 1]
        if frame >= 2:
            return (prev * self.poses[frame - 2].inverse()) * prev
        return prev

    def bootstrap(self) -> None:
        obs = self.data.frames[0]
        pose = RigidTransform.identity()
        self.poses[0] = pose
        new_lm, c, l, b = self._triangulate_new(obs, pose, np.arange(len(obs)), 0)
        self.window = WindowState([], {}, list(self.extrinsics), capacity=self.cfg.window)
        self.window, _ = update_window(self.window, FrameState(0, pose), new_lm, (c, l, b))
        self.records.append(FrameRecord(0, 1.0 if len(c) else 0.0, 0.0, len(self.window.landmarks)))
        self.history.append((0, self.extrinsics))
        self.baselines.append(self.rig.with_extrinsics(self.extrinsics).current_baselines())

    def step(self, frame: int) -> bool:
        obs = self.data.frames[frame]
        w = self.window
        assoc = associate_tracks(obs, self.table, w.landmarks.keys(), self.n_cam)
        corr = []
        for c in range(self.n_cam):
            idx = assoc.obs_index[c]
            pts = np.array([w.landmarks[int(l)] for l in assoc.landmark[c]]).reshape(-1, 3)
            corr.append((obs.bearing[idx], pts))
        tau = self._tau(frame)
        params = replace(self.cfg.ransac, tau_r=tau, seed=_derived_seed(self.cfg.seed, frame))
        predicted = self._predict(frame)

        failed = False
        pose = predicted
        try:
            result = multiview_p3p_ransac(corr, self.rig.with_extrinsics(self.extrinsics), params)
            if result.num_inliers < self.cfg.min_inliers:
                raise RansacFailure("too few inliers")
            pose = result.pose
        except (InsufficientDataError, RansacFailure):
            failed = True

        bear = np.vstack([b for b, _ in corr]) if corr else np.zeros((0, 3))
        pts = np.vstack([p for _, p in corr]) if corr else np.zeros((0, 3))
        cams = np.concatenate([np.full(len(b), c, dtype=np.int64) for c, (b, _) in enumerate(corr)])
        ext_R = np.array([E.matrix for E in self.extrinsics])
        ext_t = np.array([E.translation for E in self.extrinsics])

        def residuals(T):
            return ray_residuals(T.matrix, T.translation, ext_R, ext_t, bear, pts, cams)

        if not failed and truncated_score(residuals(predicted), tau) > truncated_score(residuals(pose), tau):
            pose = predicted  # prediction explains the data better than the hypothesis
        inl = residuals(pose) < tau
        if inl.sum() >= 3:
            try:
                split = [(b[m], p[m]) for (b, p), m in zip(corr, np.split(inl, np.cumsum([len(b) for b, _ in corr])[:-1]))]
                pose = refine_pose(pose, split, self.rig.with_extrinsics(self.extrinsics), scale=tau)
            except UnderdeterminedError:
                pass
        r = residuals(pose)
        inl = r < tau
        n_assoc = len(r)
        inlier_ratio = float(inl.sum()) / n_assoc if n_assoc else 0.0
        reproj = float(np.degrees(np.mean(angle_from_chord(r[inl])))) if inl.any() else 0.0

        # outlier associations lose their landmark link and can be re-triangulated later
        obs_idx = np.concatenate([assoc.obs_index[c] for c in range(self.n_cam)]).astype(np.int64)
        lm_ids = np.concatenate([assoc.landmark[c] for c in range(self.n_cam)]).astype(np.int64)
        for t in obs.track[obs_idx[~inl]]:
            self.table.unlink(t)

        self.poses[frame] = pose
        new_lm, c_new, l_new, b_new = self._triangulate_new(obs, pose, assoc.queued, frame)
        cams_w = np.concatenate([obs.camera[obs_idx[inl]], c_new])
        lms_w = np.concatenate([lm_ids[inl], l_new])
        bear_w = np.vstack([obs.bearing[obs_idx[inl]], b_new])
        self.window, dropped = update_window(w, FrameState(frame, pose), new_lm, (cams_w, lms_w, bear_w))
        self.window.extrinsics = list(self.extrinsics)
        self.table.unlink_landmarks(dropped)
        self._adjust(frame)
        self.records.append(FrameRecord(frame, inlier_ratio, reproj, len(self.window.landmarks), failed))
        return failed

    def _adjust(self, frame: int) -> None:
        w = self.window
        if len(w.frames) < 2 or w.num_observations == 0:
            return
        rig = self.rig
        opts = ProblemOptions(
            optimize_extrinsics=self.cfg.optimize_extrinsics,
            multi_weight=self.cfg.multi_weight,
            loss_scale=self._tau(frame),
            baseline_weight=self.cfg.lm.baseline_weight,
            pairs=rig.pairs,
            baseline_lengths=rig.baseline_lengths,
        )
        self.window, report = solve_window(w, opts, self.cfg.lm)
        self.solves += 1
        self.non_monotone += not report.lm.monotone
        for f in self.window.frames:
            self.poses[f.frame] = f.pose
        if self.cfg.optimize_extrinsics:
            self.extrinsics = tuple(self.window.extrinsics)
        self.history.append((frame, self.extrinsics))
        self.baselines.append(rig.with_extrinsics(self.extrinsics).current_baselines())


def run(dataset: Dataset, config: PipelineConfig = PipelineConfig(), rig: RigConfig | None = None) -> PipelineOutput:
    """Estimate the trajectory of ``dataset``.

    Args:
        rig: extrinsics/intrinsics the estimator starts from (defaults to
            the dataset's rig, i.e. ground truth).

    Raises:
        InsufficientDataError: fewer than two frames.
        PipelineAborted: RANSAC failed on more than ``max_failure_fraction``
            of the frames in a row.
    """
    if len(dataset.frames) < 2:
        raise InsufficientDataError("the pipeline needs at least two frames")
    runner = _Runner(dataset, config, rig or dataset.rig)
    runner.bootstrap()
    limit = max(1, math.ceil(config.max_failure_fraction * len(dataset.frames)))
    streak = 0
    for k in range(1, len(dataset.frames)):
        streak = streak + 1 if runner.step(k) else 0
        if streak > limit:
            raise PipelineAborted(f"RANSAC failed on {streak} consecutive frames (up to frame {k})")
    poses = [runner.poses[k] for k in range(len(dataset.frames))]
    return PipelineOutput(
        poses, runner.records, runner.history, runner.extrinsics, runner.baselines, runner.solves, runner.non_monotone
    )


__all__ = ["FrameRecord", "Mode", "PipelineAborted", "PipelineConfig", "PipelineOutput", "run"]
