"""Rig pose estimation from 2D-3D correspondences in several cameras.

``multiview_p3p_ransac`` hypothesizes camera poses from a minimal sample in
one view (chosen with probability proportional to its number of matches),
lifts them to rig poses through the extrinsics and scores them against the
correspondences of *all* views with a truncated inlier score.
``refine_pose`` then polishes the winner under a Cauchy loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError, RansacFailure, UnderdeterminedError
from .geometry import RigidTransform, rotation_matrix, skew_batch
from .lm import DenseSystem, LmReport, LmSettings, LOSSES, levenberg_marquardt
from .rig import RigConfig

Correspondences = list  # per camera: (bearings (n, 3), world points (n, 3))


# --------------------------------------------------------------------------- P3P


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _triangle_frame(p1, p2, p3) -> np.ndarray:
    e1 = p2 - p1
    e1 = e1 / math.sqrt(e1 @ e1)
    e3 = _cross(p2 - p1, p3 - p1)
    e3 = e3 / math.sqrt(e3 @ e3)
    return np.column_stack([e1, _cross(e3, e1), e3])


def _psub(a, b):
    n = max(len(a), len(b))
    out = np.zeros(n)
    out[: len(a)] += a
    out[: len(b)] -= b
    return out


def _pval(c, x: float) -> float:
    acc = 0.0
    for coef in reversed(c):
        acc = acc * x + float(coef)
    return acc


def _polish_depths(s, ca, cb, cg, a2, b2, c2, iters=4):
    for _ in range(iters):
        s1, s2, s3 = s
        F = np.array([
            s2 * s2 + s3 * s3 - 2 * s2 * s3 * ca - a2,
            s1 * s1 + s3 * s3 - 2 * s1 * s3 * cb - b2,
            s1 * s1 + s2 * s2 - 2 * s1 * s2 * cg - c2,
        ])
        J = np.array([
            [0.0, 2 * s2 - 2 * s3 * ca, 2 * s3 - 2 * s2 * ca],
            [2 * s1 - 2 * s3 * cb, 0.0, 2 * s3 - 2 * s1 * cb],
            [2 * s1 - 2 * s2 * cg, 2 * s2 - 2 * s1 * cg, 0.0],
        ])
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
        s = s - step
        if np.max(np.abs(step)) < 1e-15 * np.max(np.abs(s)):
            break
    return s


def p3p(bearings: np.ndarray, points: np.ndarray) -> list[RigidTransform]:
    """Camera poses ``T_c_w`` consistent with three bearing/point pairs.

    Solves for the three depths along the rays (law of cosines system),
    reduced to a quartic through the resultant of two quadratics, then aligns
    the recovered camera-frame triangle with the world triangle.  Each root
    is polished by Newton iterations on the depth equations.

    Raises:
        DegenerateInputError: collinear points or coincident bearings.
    """
    f = np.asarray(bearings, dtype=float).reshape(3, 3)
    f = f / np.linalg.norm(f, axis=1, keepdims=True)
    X = np.asarray(points, dtype=float).reshape(3, 3)
    d01, d02, d12 = X[1] - X[0], X[2] - X[0], X[2] - X[1]
    scale = math.sqrt(max(d01 @ d01, d02 @ d02, d12 @ d12))
    if scale == 0.0:
        raise DegenerateInputError("coincident points")
    cr = _cross(d01, d02)
    if math.sqrt(cr @ cr) / (scale * scale) < 1e-10:
        raise DegenerateInputError("collinear points")
    for i, j in ((0, 1), (0, 2), (1, 2)):
        cr = _cross(f[i], f[j])
        if math.sqrt(cr @ cr) < 1e-12:
            raise DegenerateInputError("bearings are not pairwise distinct")

    Xn = (X - X[0]) / scale
    a2 = float(np.sum((Xn[1] - Xn[2]) ** 2))
    b2 = float(np.sum((Xn[0] - Xn[2]) ** 2))
    c2 = float(np.sum((Xn[0] - Xn[1]) ** 2))
    ca, cb, cg = float(f[1] @ f[2]), float(f[0] @ f[2]), float(f[0] @ f[1])

    # with u = s2/s1, v = s3/s1 (coefficients in increasing powers of v):
    #   I : b2 u^2 + B1 u + C1 = 0   (from sides a and b)
    #   II: b2 u^2 + B2 u + C2 = 0   (from sides c and b)
    q = np.array([1.0, -2.0 * cb, 1.0])  # 1 + v^2 - 2 v cb
    A = np.array([b2])
    B1 = np.array([0.0, -2.0 * b2 * ca])
    C1 = _psub(np.array([0.0, 0.0, b2]), a2 * q)
    B2 = np.array([-2.0 * b2 * cg])
    C2 = _psub(np.array([b2]), c2 * q)
    conv = np.convolve
    AC = _psub(conv(A, C2), conv(A, C1))
    AB = _psub(conv(A, B2), conv(A, B1))
    BC = _psub(conv(B1, C2), conv(B2, C1))
    quartic = np.trim_zeros(_psub(conv(AC, AC), conv(AB, BC)), "b")
    if len(quartic) < 2:
        return []
    roots = np.roots(quartic[::-1])
    dquartic = quartic[1:] * np.arange(1, len(quartic))

    Fw = _triangle_frame(*Xn)
    poses: list[RigidTransform] = []
    seen = []
    for root in roots:
        if abs(root.imag) > 1e-4 * (1.0 + abs(root.real)):
            continue
        v = float(root.real)
        for _ in range(3):
            d = _pval(dquartic, v)
            if d == 0.0:
                break
            v -= _pval(quartic, v) / d
        den_q = 1.0 + v * v - 2.0 * v * cb
        if v <= 0.0 or den_q <= 0.0:
            continue
        s1 = math.sqrt(b2 / den_q)
        # I - II is linear in u
        lin = _pval(B1, v) - B2[0]
        us = []
        if abs(lin) > 1e-10:
            us.append((_pval(C2, v) - _pval(C1, v)) / lin)
        if abs(lin) <= 1e-5 * b2:
            # near a repeated root the linear solve is 0/0; take u from side c directly
            disc = (2 * cg) ** 2 - 4 * (1 - c2 / (s1 * s1))
            if disc >= 0:
                us += [(2 * cg + math.sqrt(disc)) / 2, (2 * cg - math.sqrt(disc)) / 2]
        for u in us:
            if u <= 0.0:
                continue
            s = _polish_depths(np.array([s1, u * s1, v * s1]), ca, cb, cg, a2, b2, c2)
            if np.any(s <= 0.0):
                continue
            res = max(
                abs(s[1] ** 2 + s[2] ** 2 - 2 * s[1] * s[2] * ca - a2),
                abs(s[0] ** 2 + s[2] ** 2 - 2 * s[0] * s[2] * cb - b2),
                abs(s[0] ** 2 + s[1] ** 2 - 2 * s[0] * s[1] * cg - c2),
            )
            if res > 1e-6:
                continue
            if any(np.max(np.abs(s - o)) < 1e-9 for o in seen):
                continue
            seen.append(s)
            Pc = f * s[:, None]
            R = _triangle_frame(*Pc) @ Fw.T
            # depths were solved in the normalized world scale
            t = scale * Pc[0] - R @ X[0]
            poses.append(RigidTransform.from_matrix(R, t))
    return poses


# --------------------------------------------------------------------------- PPS


def pps_probabilities(match_counts) -> np.ndarray:
    counts = np.asarray(match_counts, dtype=float)
    eligible = np.where(counts >= 3, counts, 0.0)
    total = eligible.sum()
    if total <= 0:
        raise InsufficientDataError("no camera has at least three matches")
    return eligible / total


def pps_sample(match_counts, rng: np.random.Generator) -> int:
    """Pick a camera with probability proportional to its match count.

    Cameras with fewer than three matches cannot seed a minimal sample and
    are excluded.
    """
    p = pps_probabilities(match_counts)
    cdf = np.cumsum(p)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, len(p) - 1)


# --------------------------------------------------------------------------- RANSAC


@dataclass(frozen=True)
class RansacParams:
    """``tau_r`` is the chordal distance between unit rays (not an angle)."""

    tau_r: float = 2.0 * math.sin(math.radians(0.5) / 2.0)
    confidence: float = 0.999
    iter_max_init: int = 1000
    iter_cap: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.tau_r <= 0:
            raise ValueError("tau_r must be positive")

    @classmethod
    def from_angle(cls, angle_rad: float, **kw) -> "RansacParams":
        return cls(tau_r=2.0 * math.sin(0.5 * angle_rad), **kw)


@dataclass
class RansacResult:
    pose: RigidTransform  # T_b_w
    inlier_mask: list[np.ndarray]  # per camera
    score: float
    iterations: int
    inliers_per_camera: list[int]

    @property
    def num_inliers(self) -> int:
        return int(sum(self.inliers_per_camera))


def _stack(correspondences, n_cam):
    bear, pts, cam = [], [], []
    for c in range(n_cam):
        b, X = correspondences[c] if c < len(correspondences) else (np.zeros((0, 3)), np.zeros((0, 3)))
        b = np.asarray(b, dtype=float).reshape(-1, 3)
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        bear.append(b)
        pts.append(X)
        cam.append(np.full(len(b), c, dtype=np.int64))
    return np.vstack(bear), np.vstack(pts), np.concatenate(cam)


def ray_residuals(R_b_w, t_b_w, ext_R, ext_t, bearings, points, cams) -> np.ndarray:
    """Chordal residuals ``|| x - pi0(T_c_b * T_b_w * X) ||`` for stacked data."""
    Xb = points @ R_b_w.T + t_b_w
    Xc = np.einsum("nij,nj->ni", ext_R[cams], Xb) + ext_t[cams]
    n = np.linalg.norm(Xc, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = Xc / n[:, None]
    r = np.linalg.norm(bearings - u, axis=1)
    return np.where(np.isfinite(r), r, 2.0)


def truncated_score(residuals: np.ndarray, tau_r: float) -> float:
    return float(np.sum(np.maximum(0.0, tau_r - residuals)))


def score_pose(pose: RigidTransform, correspondences, rig: RigConfig, tau_r: float) -> tuple[float, np.ndarray]:
    """Truncated inlier score of ``pose`` (T_b_w) and the stacked residuals."""
    bear, pts, cams = _stack(correspondences, rig.num_cameras)
    ext_R = np.array([E.matrix for E in rig.extrinsics])
    ext_t = np.array([E.translation for E in rig.extrinsics])
    r = ray_residuals(pose.matrix, pose.translation, ext_R, ext_t, bear, pts, cams)
    return truncated_score(r, tau_r), r


def multiview_p3p_ransac(correspondences: Correspondences, rig: RigConfig, params: RansacParams = RansacParams()) -> RansacResult:
    """Rig pose ``T_b_w`` from per-camera 2D-3D correspondences.

    Raises:
        InsufficientDataError: no camera has three correspondences.
        RansacFailure: every sample was degenerate.
    """
    n_cam = rig.num_cameras
    bear, pts, cams = _stack(correspondences, n_cam)
    counts = np.bincount(cams, minlength=n_cam)
    pps_probabilities(counts)  # raises when nothing can be sampled
    offsets = np.concatenate([[0], np.cumsum(counts)])
    ext_R = np.array([E.matrix for E in rig.extrinsics])
    ext_t = np.array([E.translation for E in rig.extrinsics])
    N = len(bear)
    rng = np.random.default_rng(params.seed)
    log_fail = math.log(1.0 - params.confidence)

    best = None
    best_score = -math.inf
    best_resid = None
    iter_max = min(params.iter_max_init, params.iter_cap)
    it = 0
    while it < iter_max:
        it += 1
        j = pps_sample(counts, rng)
        sample = offsets[j] + rng.choice(counts[j], size=3, replace=False)
        try:
            candidates = p3p(bear[sample], pts[sample])
        except DegenerateInputError:
            continue
        Rj_T = ext_R[j].T
        for T_c_w in candidates:
            R_cw = T_c_w.matrix
            R_bw = Rj_T @ R_cw
            t_bw = Rj_T @ (T_c_w.translation - ext_t[j])
            resid = ray_residuals(R_bw, t_bw, ext_R, ext_t, bear, pts, cams)
            score = truncated_score(resid, params.tau_r)
            if score > best_score:
                best_score = score
                best = (R_bw, t_bw)
                best_resid = resid
                w = float(np.count_nonzero(resid < params.tau_r)) / N
                if w >= 1.0:
                    iter_max = 1
                elif w > 0.0:
                    need = log_fail / math.log(1.0 - w**3)
                    iter_max = int(min(params.iter_cap, max(1, math.ceil(need))))
    if best is None:
        raise RansacFailure(f"no valid hypothesis after {it} iterations")
    pose = RigidTransform.from_matrix(*best)
    # report the score of the stored (canonicalized) pose so it can be recomputed exactly
    resid = ray_residuals(pose.matrix, pose.translation, ext_R, ext_t, bear, pts, cams)
    mask = resid < params.tau_r
    masks = [mask[offsets[c] : offsets[c + 1]] for c in range(n_cam)]
    return RansacResult(pose, masks, truncated_score(resid, params.tau_r), it, [int(m.sum()) for m in masks])


# --------------------------------------------------------------------------- refinement


def _left_update(T: RigidTransform, delta: np.ndarray) -> RigidTransform:
    R = rotation_matrix(delta[:3]) @ T.matrix
    return RigidTransform.from_matrix(R, T.translation + delta[3:])


@dataclass
class _PoseProblem:
    bearings: np.ndarray
    points: np.ndarray
    cams: np.ndarray
    ext_R: np.ndarray
    ext_t: np.ndarray
    loss: str
    scale: float

    def _residuals(self, T: RigidTransform):
        R = T.matrix
        Xr = self.points @ R.T
        Xb = Xr + T.translation
        Xc = np.einsum("nij,nj->ni", self.ext_R[self.cams], Xb) + self.ext_t[self.cams]
        n = np.linalg.norm(Xc, axis=1)
        u = Xc / n[:, None]
        return self.bearings - u, u, n, Xr

    def cost(self, T: RigidTransform) -> float:
        r, *_ = self._residuals(T)
        rho, _ = LOSSES[self.loss](np.einsum("ij,ij->i", r, r), self.scale)
        return 0.5 * float(rho.sum())

    def linearize(self, T: RigidTransform) -> DenseSystem:
        r, u, n, Xr = self._residuals(T)
        Rc = self.ext_R[self.cams]
        # d r / d Xc = -(I - u u^T) / |Xc|
        dU = -(np.eye(3)[None] - u[:, :, None] * u[:, None, :]) / n[:, None, None]
        A = dU @ Rc  # d r / d Xb
        J = np.concatenate([A @ -skew_batch(Xr), A], axis=2)  # (N, 3, 6)
        _, w = LOSSES[self.loss](np.einsum("ij,ij->i", r, r), self.scale)
        Jw = J * w[:, None, None]
        H = np.einsum("nki,nkj->ij", Jw, J)
        g = np.einsum("nki,nk->i", Jw, r)
        return DenseSystem(H, g)

    def retract(self, T: RigidTransform, delta: np.ndarray) -> RigidTransform:
        return _left_update(T, delta)


def refine_pose(
    initial: RigidTransform,
    correspondences: Correspondences,
    rig: RigConfig,
    loss: str = "cauchy",
    scale: float = RansacParams.tau_r,
    settings: LmSettings = LmSettings(max_iterations=30),
    return_report: bool = False,
):
    """Minimize the robust ray error over the rig pose only.

    Landmarks and extrinsics stay fixed.  The returned pose never has a
    higher cost than ``initial``.

    Raises:
        UnderdeterminedError: fewer than three correspondences in total.
    """
    bear, pts, cams = _stack(correspondences, rig.num_cameras)
    if len(bear) < 3:
        raise UnderdeterminedError(f"pose refinement needs >= 3 inliers, got {len(bear)}")
    problem = _PoseProblem(
        bear,
        pts,
        cams,
        np.array([E.matrix for E in rig.extrinsics]),
        np.array([E.translation for E in rig.extrinsics]),
        loss,
        scale,
    )
    pose, report = levenberg_marquardt(problem, initial, settings)
    return (pose, report) if return_report else pose


def pose_cost(pose: RigidTransform, correspondences, rig: RigConfig, loss: str = "cauchy", scale: float = RansacParams.tau_r) -> float:
    bear, pts, cams = _stack(correspondences, rig.num_cameras)
    problem = _PoseProblem(bear, pts, cams, np.array([E.matrix for E in rig.extrinsics]), np.array([E.translation for E in rig.extrinsics]), loss, scale)
    return problem.cost(pose)


__all__ = [
    "LmReport",
    "RansacParams",
    "RansacResult",
    "multiview_p3p_ransac",
    "p3p",
    "pose_cost",
    "pps_probabilities",
    "pps_sample",
    "refine_pose",
    "score_pose",
]
