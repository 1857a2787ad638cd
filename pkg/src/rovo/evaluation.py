"""Trajectory accuracy and run summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backend import extrinsic_errors
from .errors import InsufficientDataError
from .geometry import RigidTransform

ALIGNMENTS = ("none", "se3")


@dataclass(frozen=True)
class AteStats:
    rmse: float
    mean: float
    max: float
    num_frames: int


@dataclass(frozen=True)
class EvalSummary:
    rmse: float
    mean_ate: float
    max_ate: float
    num_frames: int
    inlier_ratio_pct: float | None = None
    reproj_err_deg: float | None = None
    extrinsic_errors: list[tuple[float, float]] = field(default_factory=list)  # (deg, m) per camera

    def lines(self) -> list[str]:
        out = [
            f"frames = {self.num_frames}",
            f"rmse_m = {self.rmse:.9f}",
            f"mean_ate_m = {self.mean_ate:.9f}",
            f"max_ate_m = {self.max_ate:.9f}",
        ]
        if self.inlier_ratio_pct is not None:
            out.append(f"inlier_ratio_pct = {self.inlier_ratio_pct:.9f}")
        if self.reproj_err_deg is not None:
            out.append(f"reproj_err_deg = {self.reproj_err_deg:.9f}")
        for c, (deg, m) in enumerate(self.extrinsic_errors):
            out.append(f"cam{c}.extrinsic_err = {deg:.9f} deg {m:.9f} m")
        return out


def positions(poses: dict[int, RigidTransform] | list[RigidTransform]) -> dict[int, np.ndarray]:
    """Body positions in the world frame keyed by frame index."""
    items = poses.items() if isinstance(poses, dict) else enumerate(poses)
    return {int(k): T.center for k, T in items}


def kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation ``R`` and translation ``t`` minimizing ``sum ||R src + t - dst||^2``."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return R, mu_d - R @ mu_s


def ate(estimated, ground_truth, align: str = "none") -> AteStats:
    """Absolute trajectory error over frames present in both inputs.

    Raises:
        InsufficientDataError: if the frame sets do not overlap.
        ValueError: for an unknown alignment.
    """
    if align not in ALIGNMENTS:
        raise ValueError(f"align must be one of {ALIGNMENTS}")
    pe, pg = positions(estimated), positions(ground_truth)
    common = sorted(set(pe) & set(pg))
    if not common:
        raise InsufficientDataError("estimated and ground-truth trajectories share no frames")
    E = np.array([pe[k] for k in common])
    G = np.array([pg[k] for k in common])
    if align == "se3" and len(common) >= 2:
        R, t = kabsch(E, G)
        E = E @ R.T + t
    err = np.linalg.norm(E - G, axis=1)
    return AteStats(float(math.sqrt(np.mean(err**2))), float(err.mean()), float(err.max()), len(common))


def summarize(estimated, ground_truth, align: str = "none", records=None, extrinsics=None, true_extrinsics=None) -> EvalSummary:
    stats = ate(estimated, ground_truth, align)
    inl = rep = None
    if records:
        later = [r for r in records if r.frame > 0] or list(records)
        inl = 100.0 * float(np.mean([r.inlier_ratio for r in later]))
        rep = float(np.mean([r.reproj_err_deg for r in later]))
    ext = []
    if extrinsics is not None and true_extrinsics is not None:
        ext = [(math.degrees(a), m) for a, m in extrinsic_errors(extrinsics, true_extrinsics)]
    return EvalSummary(stats.rmse, stats.mean, stats.max, stats.num_frames, inl, rep, ext)
