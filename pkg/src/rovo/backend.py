"""Sliding-window bundle adjustment with optional online extrinsic calibration.

Unknowns per window: rig poses ``T_b_w`` (oldest frozen as gauge), landmark
positions, and optionally the extrinsics ``T_c_b``.  Each observation
contributes ``sqrt(w) * (x - pi0(T_c_b * T_b_w * X))`` under a Cauchy loss,
with ``w`` larger when its landmark is seen by several cameras.  Neighboring
camera pairs add a quadratic penalty holding the inter-camera distance at
its reference length.

Rotations are updated on the left (``R <- Exp(w) R``) and translations
additively, for poses and extrinsics alike.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import NumericalError, RovoError
from .estimation import RansacParams
from .geometry import RigidTransform, rotation_matrices, skew_batch
from .lm import LOSSES, LmReport, LmSettings, levenberg_marquardt

DEFAULT_WINDOW = 10


@dataclass
class FrameState:
    frame: int
    pose: RigidTransform  # T_b_w


@dataclass
class WindowState:
    """Frames, landmarks, extrinsics and the observations linking them."""

    frames: list[FrameState]
    landmarks: dict[int, np.ndarray]
    extrinsics: list[RigidTransform]
    obs_frame: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    obs_camera: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    obs_landmark: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    obs_bearing: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    capacity: int = DEFAULT_WINDOW

    @property
    def num_observations(self) -> int:
        return len(self.obs_frame)

    def frame_ids(self) -> list[int]:
        return [f.frame for f in self.frames]

    def pose_of(self, frame: int) -> RigidTransform:
        for f in self.frames:
            if f.frame == frame:
                return f.pose
        raise KeyError(frame)

    def weights(self, multi_weight: float) -> np.ndarray:
        """Per-observation weight: ``multi_weight`` if the landmark is seen by >= 2 cameras."""
        if self.num_observations == 0:
            return np.zeros(0)
        pairs = np.unique(np.column_stack([self.obs_landmark, self.obs_camera]), axis=0)
        lm, n_cams = np.unique(pairs[:, 0], return_counts=True)
        multi = set(lm[n_cams >= 2].tolist())
        return np.where(np.isin(self.obs_landmark, list(multi)), multi_weight, 1.0)

    def copy(self) -> "WindowState":
        return WindowState(
            [FrameState(f.frame, f.pose) for f in self.frames],
            {k: v.copy() for k, v in self.landmarks.items()},
            list(self.extrinsics),
            self.obs_frame.copy(),
            self.obs_camera.copy(),
            self.obs_landmark.copy(),
            self.obs_bearing.copy(),
            self.capacity,
        )

    def validate(self) -> None:
        frames = set(self.frame_ids())
        if not set(np.unique(self.obs_frame).tolist()) <= frames:
            raise RovoError("observation references a frame outside the window")
        if not set(np.unique(self.obs_landmark).tolist()) <= set(self.landmarks):
            raise RovoError("observation references an unknown landmark")
        if len(self.frames) > self.capacity:
            raise RovoError("window exceeds its capacity")


def update_window(
    w: WindowState,
    frame: FrameState,
    new_landmarks: dict[int, np.ndarray] | None = None,
    observations: tuple | None = None,
) -> tuple[WindowState, list[int]]:
    """Append ``frame`` (and its observations); slide when over capacity.

    ``observations`` is ``(camera, landmark, bearing)`` arrays for the new
    frame.  When the window overflows, the oldest frame is dropped together
    with every landmark left with fewer than two observations.

    Returns:
        The new window and the ids of the landmarks that were dropped.
    """
    out = w.copy()
    out.frames.append(FrameState(frame.frame, frame.pose))
    if new_landmarks:
        for k, v in new_landmarks.items():
            out.landmarks[int(k)] = np.asarray(v, dtype=float).copy()
    if observations is not None:
        cam, lm, bear = observations
        cam = np.asarray(cam, dtype=np.int64)
        out.obs_frame = np.concatenate([out.obs_frame, np.full(len(cam), frame.frame, dtype=np.int64)])
        out.obs_camera = np.concatenate([out.obs_camera, cam])
        out.obs_landmark = np.concatenate([out.obs_landmark, np.asarray(lm, dtype=np.int64)])
        out.obs_bearing = np.vstack([out.obs_bearing, np.asarray(bear, dtype=float).reshape(-1, 3)])
    dropped: list[int] = []
    if len(out.frames) > out.capacity:
        oldest = out.frames.pop(0).frame
        keep = out.obs_frame != oldest
        _filter_obs(out, keep)
        ids, counts = np.unique(out.obs_landmark, return_counts=True)
        alive = set(ids[counts >= 2].tolist())
        dropped = sorted(k for k in out.landmarks if k not in alive)
        for k in dropped:
            del out.landmarks[k]
        _filter_obs(out, np.isin(out.obs_landmark, list(alive)))
    return out, dropped


def _filter_obs(w: WindowState, keep: np.ndarray) -> None:
    w.obs_frame = w.obs_frame[keep]
    w.obs_camera = w.obs_camera[keep]
    w.obs_landmark = w.obs_landmark[keep]
    w.obs_bearing = w.obs_bearing[keep]


# --------------------------------------------------------------------------- problem


@dataclass(frozen=True)
class ProblemOptions:
    optimize_extrinsics: bool = False
    optimize_landmarks: bool = True
    optimize_poses: bool = True
    freeze_oldest: bool = True
    multi_weight: float = 2.0
    loss: str = "cauchy"
    loss_scale: float = RansacParams.tau_r
    baseline_weight: float = 1e6
    pairs: tuple[tuple[int, int], ...] = ()
    baseline_lengths: tuple[float, ...] = ()
    # 'rig' keeps the centroid and orientation of the camera-center
    # constellation fixed while extrinsics move; 'none' leaves that gauge free
    extrinsic_gauge: str = "rig"


@dataclass
class BundleState:
    R: np.ndarray  # (F, 3, 3) body-from-world rotations
    t: np.ndarray  # (F, 3)
    X: np.ndarray  # (L, 3)
    ER: np.ndarray  # (C, 3, 3) camera-from-body rotations
    Et: np.ndarray  # (C, 3)

    def copy(self) -> "BundleState":
        return BundleState(self.R.copy(), self.t.copy(), self.X.copy(), self.ER.copy(), self.Et.copy())


def _centers(ER, Et):
    return -np.einsum("cji,cj->ci", ER, Et)


class BundleProblem:
    """Residual system for one window; see :func:`build_problem`."""

    def __init__(self, w: WindowState, opts: ProblemOptions):
        if not w.frames:
            raise RovoError("cannot build a problem for an empty window")
        self.window = w
        self.opts = opts
        self.frame_index = {f.frame: k for k, f in enumerate(w.frames)}
        self.landmark_ids = sorted(w.landmarks)
        self.landmark_index = {lid: k for k, lid in enumerate(self.landmark_ids)}
        self.obs_f = np.array([self.frame_index[f] for f in w.obs_frame], dtype=np.int64)
        self.obs_l = np.array([self.landmark_index[l] for l in w.obs_landmark], dtype=np.int64)
        self.obs_c = w.obs_camera.astype(np.int64)
        self.bearing = w.obs_bearing
        self.omega = w.weights(opts.multi_weight)
        F, C, L = len(w.frames), len(w.extrinsics), len(self.landmark_ids)
        self.F, self.C, self.L = F, C, L

        # camera-block parameter offsets; -1 marks frozen blocks
        self.pose_offset = np.full(F, -1, dtype=np.int64)
        n = 0
        for k in range(F):
            if not opts.optimize_poses or (opts.freeze_oldest and k == 0):
                continue
            self.pose_offset[k] = n
            n += 6
        self.ext_offset = np.full(C, -1, dtype=np.int64)
        if opts.optimize_extrinsics:
            for c in range(C):
                self.ext_offset[c] = n
                n += 6
        self.n_cam = n
        self.n_lm = 3 * L if opts.optimize_landmarks else 0
        self.pairs = list(opts.pairs) if opts.optimize_extrinsics else []
        if self.pairs and len(opts.baseline_lengths) != len(self.pairs):
            raise ValueError("baseline_lengths must match pairs")
        self.baseline_ref = np.asarray(opts.baseline_lengths, dtype=float)

    # ------------------------------------------------------------------ state

    def initial_state(self) -> BundleState:
        w = self.window
        R = rotation_matrices(np.array([f.pose.rotation for f in w.frames]))
        t = np.array([f.pose.translation for f in w.frames])
        X = np.array([w.landmarks[k] for k in self.landmark_ids]).reshape(-1, 3)
        ER = rotation_matrices(np.array([E.rotation for E in w.extrinsics]))
        Et = np.array([E.translation for E in w.extrinsics])
        return BundleState(R, t, X, ER, Et)

    def to_window(self, s: BundleState) -> WindowState:
        out = self.window.copy()
        for k, f in enumerate(out.frames):
            f.pose = RigidTransform.from_matrix(s.R[k], s.t[k])
        for k, lid in enumerate(self.landmark_ids):
            out.landmarks[lid] = s.X[k].copy()
        out.extrinsics = [RigidTransform.from_matrix(s.ER[c], s.Et[c]) for c in range(self.C)]
        return out

    @property
    def num_parameters(self) -> int:
        return self.n_cam + self.n_lm

    @property
    def num_residuals(self) -> int:
        return 3 * len(self.obs_f) + len(self.pairs)

    def retract(self, s: BundleState, delta: np.ndarray) -> BundleState:
        out = s.copy()
        for k in range(self.F):
            o = self.pose_offset[k]
            if o >= 0:
                d = delta[o : o + 6]
                out.R[k] = rotation_matrices(d[:3])[0] @ s.R[k]
                out.t[k] = s.t[k] + d[3:]
        for c in range(self.C):
            o = self.ext_offset[c]
            if o >= 0:
                d = delta[o : o + 6]
                out.ER[c] = rotation_matrices(d[:3])[0] @ s.ER[c]
                out.Et[c] = s.Et[c] + d[3:]
        if self.n_lm:
            out.X = s.X + delta[self.n_cam :].reshape(-1, 3)
        return out

    # ------------------------------------------------------------------ residuals

    def _project(self, s: BundleState):
        Xw = s.X[self.obs_l]
        Rp = s.R[self.obs_f]
        RX = (Rp @ Xw[:, :, None])[:, :, 0]
        Xb = RX + s.t[self.obs_f]
        RE = s.ER[self.obs_c]
        REXb = (RE @ Xb[:, :, None])[:, :, 0]
        Xc = REXb + s.Et[self.obs_c]
        n = np.linalg.norm(Xc, axis=1)
        u = Xc / n[:, None]
        return u, n, RX, REXb, Rp, RE

    def _baseline(self, s: BundleState):
        if not self.pairs:
            return np.zeros(0), None
        C = _centers(s.ER, s.Et)
        i = np.array([p[0] for p in self.pairs])
        j = np.array([p[1] for p in self.pairs])
        d = C[i] - C[j]
        length = np.linalg.norm(d, axis=1)
        return math.sqrt(self.opts.baseline_weight) * (length - self.baseline_ref), (C, i, j, d / length[:, None])

    def observation_residuals(self, s: BundleState) -> np.ndarray:
        u, *_ = self._project(s)
        r = self.bearing - u
        if not np.all(np.isfinite(r)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(r), axis=1))[0])
            raise NumericalError(
                f"non-finite residual in observation block {bad} "
                f"(frame {self.window.obs_frame[bad]}, camera {self.obs_c[bad]}, landmark {self.window.obs_landmark[bad]})"
            )
        return r

    def residual_vector(self, s: BundleState) -> np.ndarray:
        """Stacked ``sqrt(w) * r`` observation blocks followed by baseline residuals."""
        r = self.observation_residuals(s) * np.sqrt(self.omega)[:, None]
        rb, _ = self._baseline(s)
        return np.concatenate([r.ravel(), rb])

    def cost(self, s: BundleState) -> float:
        try:
            r = self.observation_residuals(s)
        except NumericalError:
            return math.inf
        sq = self.omega * np.sum(r * r, axis=1)
        rho, _ = LOSSES[self.opts.loss](sq, self.opts.loss_scale)
        rb, _ = self._baseline(s)
        return 0.5 * float(rho.sum()) + 0.5 * float(rb @ rb)

    # ------------------------------------------------------------------ jacobians

    def _jacobians(self, s: BundleState):
        """Per-observation Jacobians of the unweighted residual.

        Returns ``(r, Jc, Jl)`` with ``Jc`` of shape ``(K, 3, 6)`` for the
        pose [w, v], extended to ``(K, 3, 12)`` with the extrinsic [w, v]
        when extrinsics are optimized, and ``Jl`` of shape ``(K, 3, 3)``.
        """
        u, n, RX, REXb, Rp, RE = self._project(s)
        r = self.bearing - u
        dU = -(np.eye(3)[None] - u[:, :, None] * u[:, None, :]) / n[:, None, None]
        A = dU @ RE
        Jc = np.empty((len(r), 3, self._block_width))
        Jc[:, :, 0:3] = -A @ skew_batch(RX)
        Jc[:, :, 3:6] = A
        if self._block_width == 12:
            Jc[:, :, 6:9] = -dU @ skew_batch(REXb)
            Jc[:, :, 9:12] = dU
        Jl = A @ Rp
        return r, Jc, Jl

    @property
    def _block_width(self) -> int:
        return 12 if self.opts.optimize_extrinsics else 6

    def _camera_columns(self) -> np.ndarray:
        """Global column index for each camera-block Jacobian column (-1 = frozen)."""
        if not hasattr(self, "_cols_cache"):
            po = self.pose_offset[self.obs_f]
            eo = self.ext_offset[self.obs_c]
            cols = np.empty((len(po), self._block_width), dtype=np.int64)
            ar = np.arange(6)
            cols[:, :6] = np.where(po[:, None] >= 0, po[:, None] + ar, -1)
            if self._block_width == 12:
                cols[:, 6:] = np.where(eo[:, None] >= 0, eo[:, None] + ar, -1)
            self._cols_cache = cols
        return self._cols_cache

    def _baseline_jacobian(self, s: BundleState) -> tuple[np.ndarray, np.ndarray]:
        """Dense Jacobian of the baseline residuals w.r.t. camera-block parameters."""
        rb, geo = self._baseline(s)
        J = np.zeros((len(rb), self.n_cam))
        if geo is None:
            return rb, J
        _, ii, jj, dirs = geo
        sw = math.sqrt(self.opts.baseline_weight)
        for k, (i, j) in enumerate(zip(ii, jj)):
            for cam, sign in ((i, 1.0), (j, -1.0)):
                o = self.ext_offset[cam]
                RT = s.ER[cam].T
                # dC/dw = -R^T [t]x, dC/dv = -R^T
                dC_dw = -RT @ skew_batch(s.Et[cam][None])[0]
                dC_dv = -RT
                J[k, o : o + 3] += sign * sw * dirs[k] @ dC_dw
                J[k, o + 3 : o + 6] += sign * sw * dirs[k] @ dC_dv
        return rb, J

    def dense_jacobian(self, s: BundleState) -> np.ndarray:
        """Full Jacobian of :meth:`residual_vector` (for testing)."""
        r, Jc, Jl = self._jacobians(s)
        sw = np.sqrt(self.omega)
        K = len(r)
        J = np.zeros((self.num_residuals, self.num_parameters))
        cols = self._camera_columns()
        for k in range(K):
            rows = slice(3 * k, 3 * k + 3)
            for a in range(self._block_width):
                if cols[k, a] >= 0:
                    J[rows, cols[k, a]] += sw[k] * Jc[k, :, a]
            if self.n_lm:
                o = self.n_cam + 3 * self.obs_l[k]
                J[rows, o : o + 3] += sw[k] * Jl[k]
        _, Jb = self._baseline_jacobian(s)
        J[3 * K :, : self.n_cam] = Jb
        return J

    def gauge_basis(self, s: BundleState) -> np.ndarray | None:
        """Null-space basis of the linearized extrinsic gauge constraints."""
        if not (self.opts.optimize_extrinsics and self.opts.extrinsic_gauge == "rig") or self.C < 3:
            return None
        C = _centers(s.ER, s.Et)
        rel = C - C.mean(axis=0)
        A = np.zeros((6, self.n_cam))
        for c in range(self.C):
            o = self.ext_offset[c]
            RT = s.ER[c].T
            dC = np.hstack([-RT @ skew_batch(s.Et[c][None])[0], -RT])  # (3, 6)
            A[0:3, o : o + 6] += dC
            A[3:6, o : o + 6] += skew_batch(rel[c][None])[0] @ dC
        _, sv, vt = np.linalg.svd(A)
        rank = int(np.sum(sv > 1e-10 * sv[0]))
        return vt[rank:].T

    def _units(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Observations grouped by (frame, camera), which share camera-block columns."""
        if not hasattr(self, "_unit_cache"):
            cols = self._camera_columns()
            key = self.obs_f * max(self.C, 1) + self.obs_c
            units = []
            for k in np.unique(key):
                idx = np.flatnonzero(key == k)
                units.append((idx, cols[idx[0]]))
            self._unit_cache = units
        return self._unit_cache

    def linearize(self, s: BundleState) -> "SchurSystem":
        r, Jc, Jl = self._jacobians(s)
        if not np.all(np.isfinite(r)):
            self.observation_residuals(s)  # raises with the offending block
        sq = self.omega * np.sum(r * r, axis=1)
        _, drho = LOSSES[self.opts.loss](sq, self.opts.loss_scale)
        wk = self.omega * drho
        cols = self._camera_columns()
        nc = self.n_cam

        U = np.zeros((nc, nc))
        gc = np.zeros(nc)
        for idx, ucols in self._units():
            live = ucols >= 0
            if not live.any():
                continue
            J = Jc[idx][:, :, live].reshape(-1, int(live.sum()))
            wJ = J * np.repeat(wk[idx], 3)[:, None]
            c = ucols[live]
            U[np.ix_(c, c)] += wJ.T @ J
            gc[c] += wJ.T @ r[idx].ravel()

        rb, Jb = self._baseline_jacobian(s)
        if len(rb):
            U += Jb.T @ Jb
            gc += Jb.T @ rb

        L = self.L if self.n_lm else 0
        if L:
            wJl = Jl * wk[:, None, None]
            wJlT = wJl.transpose(0, 2, 1)
            Vb = wJlT @ Jl
            l9 = (9 * self.obs_l[:, None] + np.arange(9)).ravel()
            V = np.bincount(l9, weights=Vb.ravel(), minlength=9 * L).reshape(L, 3, 3)
            l3 = (3 * self.obs_l[:, None] + np.arange(3)).ravel()
            gl = np.bincount(l3, weights=(wJlT @ r[:, :, None]).ravel(), minlength=3 * L)
            Wb = Jc.transpose(0, 2, 1) @ wJl  # (K, 6 or 12, 3)
            if not hasattr(self, "_w_index"):
                rows = np.where(cols >= 0, cols, nc)
                self._w_index = (rows[:, :, None] * (3 * L) + (3 * self.obs_l)[:, None, None] + np.arange(3)).ravel()
            W = np.bincount(self._w_index, weights=Wb.ravel(), minlength=(nc + 1) * 3 * L).reshape(nc + 1, 3 * L)[:nc]
        else:
            V = np.zeros((0, 3, 3))
            gl = np.zeros(0)
            W = np.zeros((nc, 0))
        return SchurSystem(U, gc, V, gl, W, self.gauge_basis(s), Jc, Jl, wk, cols, self.obs_l, Jb)


@dataclass
class SchurSystem:
    """Normal equations with landmark blocks eliminated by Schur complement.

    ``U`` couples camera-block parameters (poses, extrinsics), ``V`` holds
    one 3x3 block per landmark and ``W`` the coupling between the two.
    """

    U: np.ndarray
    gc: np.ndarray
    V: np.ndarray
    gl: np.ndarray
    W: np.ndarray
    gauge: np.ndarray | None
    Jc: np.ndarray
    Jl: np.ndarray
    wk: np.ndarray
    cols: np.ndarray
    obs_l: np.ndarray
    Jb: np.ndarray

    @property
    def gradient(self) -> np.ndarray:
        return np.concatenate([self.gc, self.gl])

    def solve(self, damping: float) -> np.ndarray:
        Ud = np.clip(np.diag(self.U), 1e-6, 1e32)
        S = self.U + damping * np.diag(Ud)
        b = -self.gc
        L = len(self.V)
        if L:
            Vd = np.clip(np.diagonal(self.V, axis1=1, axis2=2), 1e-6, 1e32)
            Vl = self.V.copy()
            idx = np.arange(3)
            Vl[:, idx, idx] += damping * Vd
            Vinv = np.linalg.inv(Vl)
            W3 = self.W.reshape(len(self.gc), L, 3)
            Y = (W3.transpose(1, 0, 2) @ Vinv).transpose(1, 0, 2).reshape(len(self.gc), 3 * L)
            S = S - Y @ self.W.T
            b = b + Y @ self.gl
        dc = _solve_reduced(S, b, self.gauge)
        if L:
            rhs = (-self.gl - self.W.T @ dc).reshape(L, 3, 1)
            dl = (Vinv @ rhs).ravel()
        else:
            dl = np.zeros(0)
        return np.concatenate([dc, dl])

    def predicted_decrease(self, delta: np.ndarray) -> float:
        nc = len(self.gc)
        dc = np.concatenate([delta[:nc], [0.0]])
        Jd = (self.Jc @ dc[np.where(self.cols >= 0, self.cols, nc)][:, :, None])[:, :, 0]
        if len(self.V):
            Jd += (self.Jl @ delta[nc:].reshape(-1, 3)[self.obs_l][:, :, None])[:, :, 0]
        quad = float(self.wk @ np.sum(Jd * Jd, axis=1))
        if len(self.Jb):
            jb = self.Jb @ delta[:nc]
            quad += float(jb @ jb)
        return float(-(self.gradient @ delta) - 0.5 * quad)


def _solve_reduced(S: np.ndarray, b: np.ndarray, gauge: np.ndarray | None) -> np.ndarray:
    if len(b) == 0:
        return np.zeros(0)
    if gauge is not None:
        return gauge @ _solve_reduced(gauge.T @ S @ gauge, gauge.T @ b, None)
    try:
        return np.linalg.solve(S, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(S, b, rcond=None)[0]


def build_problem(w: WindowState, opts: ProblemOptions = ProblemOptions()) -> BundleProblem:
    """Residual system for window ``w``.

    Raises:
        RovoError: for an empty window.
    """
    return BundleProblem(w, opts)


@dataclass
class BundleReport:
    lm: LmReport
    num_observations: int
    num_landmarks: int

    @property
    def initial_cost(self) -> float:
        return self.lm.initial_cost

    @property
    def final_cost(self) -> float:
        return self.lm.final_cost

    @property
    def iterations(self) -> int:
        return self.lm.iterations

    @property
    def termination(self) -> str:
        return self.lm.termination


def solve_window(w: WindowState, opts: ProblemOptions = ProblemOptions(), settings: LmSettings = LmSettings()) -> tuple[WindowState, BundleReport]:
    """Run LM on the window; returns the updated window and a report."""
    problem = build_problem(w, opts)
    state, report = levenberg_marquardt(problem, problem.initial_state(), settings)
    return problem.to_window(state), BundleReport(report, w.num_observations, len(w.landmarks))


# --------------------------------------------------------------------------- extrinsic report


@dataclass(frozen=True)
class RelativePose:
    camera: int
    pitch_deg: float
    roll_deg: float
    yaw_deg: float
    translation: np.ndarray


def relative_extrinsic(E_j: RigidTransform, E_ref: RigidTransform) -> RigidTransform:
    """``T_j_ref = T_j_b * T_ref_b^-1``."""
    return E_j * E_ref.inverse()


def extrinsic_report(extrinsics, reference: int = 0) -> list[RelativePose]:
    """Each camera's pose relative to ``reference`` as x-y-z Euler angles + translation.

    Angles come from ``R = Rz(yaw) Ry(roll) Rx(pitch)``.  At roll = +-90 deg
    (e.g. neighbors of a ring rig) pitch and yaw are not unique; the angles
    returned still reconstruct the rotation exactly.
    """
    extrinsics = list(extrinsics)
    if len(extrinsics) < 2:
        raise ValueError("need at least two cameras")
    out = []
    for c, E in enumerate(extrinsics):
        T = relative_extrinsic(E, extrinsics[reference])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # gimbal lock notice
            pitch, roll, yaw = Rotation.from_matrix(T.matrix).as_euler("xyz", degrees=True)
        out.append(RelativePose(c, float(pitch), float(roll), float(yaw), T.translation.copy()))
    return out


def reconstruct_extrinsics(report: list[RelativePose], reference_extrinsic: RigidTransform) -> list[RigidTransform]:
    """Inverse of :func:`extrinsic_report` given the reference camera's extrinsic."""
    out = []
    for row in report:
        R = Rotation.from_euler("xyz", [row.pitch_deg, row.roll_deg, row.yaw_deg], degrees=True).as_matrix()
        out.append(RigidTransform.from_matrix(R, row.translation) * reference_extrinsic)
    return out


def extrinsic_errors(estimated, truth) -> list[tuple[float, float]]:
    """Per-camera (rotation error in radians, translation error in meters)."""
    out = []
    for E, G in zip(estimated, truth):
        dR = E.matrix @ G.matrix.T
        ang = float(np.linalg.norm(Rotation.from_matrix(dR).as_rotvec()))
        out.append((ang, float(np.linalg.norm(E.center - G.center))))
    return out


__all__ = [
    "BundleProblem",
    "BundleReport",
    "FrameState",
    "ProblemOptions",
    "WindowState",
    "build_problem",
    "extrinsic_errors",
    "extrinsic_report",
    "reconstruct_extrinsics",
    "solve_window",
    "update_window",
]
