"""Text formats for rigs, trajectories, observations and whole datasets.

Layout of a dataset directory::

    rig.cfg               key = value lines (intrinsics + extrinsics per camera)
    scene.cfg             key = value lines describing how it was generated
    frames/NNNNNN.obs     "cam track bx by bz" per observation
    gt_trajectory.txt     "frame tx ty tz rx ry rz" (body-in-world, axis-angle)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError
from .fisheye import FisheyeIntrinsics
from .geometry import RigidTransform
from .rig import RigConfig
from .world import Dataset, FrameObservations

FLOAT = "{:.9f}"


def format_float(v) -> str:
    s = FLOAT.format(float(v))
    # values that round to zero are written unsigned so files diff cleanly
    return s[1:] if s.startswith("-") and not s.strip("-0.") else s


def _fmt(values) -> str:
    return " ".join(format_float(v) for v in values)


def _read_kv(path: Path) -> dict[str, str]:
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _floats(kv: dict, key: str, n: int, path: Path) -> np.ndarray:
    try:
        vals = np.array(kv[key].split(), dtype=float)
    except KeyError:
        raise ParseError(f"{path}: missing key {key!r}") from None
    except ValueError:
        raise ParseError(f"{path}: bad number in {key!r}") from None
    if len(vals) != n:
        raise ParseError(f"{path}: {key!r} needs {n} values")
    return vals


def write_rig(path, rig: RigConfig) -> None:
    lines = ["# rovo rig", f"cameras = {rig.num_cameras}"]
    for k, (E, phi) in enumerate(zip(rig.extrinsics, rig.intrinsics)):
        lines += [
            f"cam{k}.focal = {format_float(phi.focal)}",
            f"cam{k}.principal_point = {_fmt(phi.principal_point)}",
            f"cam{k}.resolution = {phi.resolution[0]} {phi.resolution[1]}",
            f"cam{k}.fov_max = {format_float(phi.fov_max)}",
            f"cam{k}.rotation = {_fmt(E.rotation)}",
            f"cam{k}.translation = {_fmt(E.translation)}",
        ]
    lines.append("pairs = " + " ".join(f"{i}-{j}" for i, j in rig.pairs))
    lines.append("baselines = " + _fmt(rig.baseline_lengths))
    Path(path).write_text("\n".join(lines) + "\n")


def read_rig(path) -> RigConfig:
    path = Path(path)
    kv = _read_kv(path)
    try:
        n = int(kv["cameras"])
    except (KeyError, ValueError):
        raise ParseError(f"{path}: missing or bad 'cameras'") from None
    extr, intr = [], []
    for k in range(n):
        focal = _floats(kv, f"cam{k}.focal", 1, path)[0]
        pp = _floats(kv, f"cam{k}.principal_point", 2, path)
        res = _floats(kv, f"cam{k}.resolution", 2, path).astype(int)
        fov = _floats(kv, f"cam{k}.fov_max", 1, path)[0]
        intr.append(FisheyeIntrinsics(focal, tuple(pp), tuple(res), fov))
        extr.append(RigidTransform(_floats(kv, f"cam{k}.rotation", 3, path), _floats(kv, f"cam{k}.translation", 3, path)))
    pairs: tuple = ()
    baselines: tuple = ()
    if kv.get("pairs"):
        try:
            pairs = tuple(tuple(int(x) for x in p.split("-")) for p in kv["pairs"].split())
        except ValueError:
            raise ParseError(f"{path}: bad 'pairs'") from None
        if "baselines" in kv:
            baselines = tuple(_floats(kv, "baselines", len(pairs), path))
    return RigConfig(tuple(extr), tuple(intr), pairs, baselines)


def write_trajectory(path, poses_b_w) -> None:
    """One line per frame: body-in-world translation and axis-angle rotation."""
    lines = []
    for k, T_b_w in enumerate(poses_b_w):
        T_w_b = T_b_w.inverse()
        lines.append(f"{k} {_fmt(T_w_b.translation)} {_fmt(T_w_b.rotation)}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_trajectory(path) -> dict[int, RigidTransform]:
    """Map frame index to ``T_b_w``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ParseError(f"{path}:{lineno}: expected 'frame tx ty tz rx ry rz'")
        try:
            frame = int(parts[0])
            v = np.array(parts[1:], dtype=float)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad number") from None
        out[frame] = RigidTransform(v[3:], v[:3]).inverse()
    return out


def write_observations(path, obs: FrameObservations) -> None:
    lines = [f"{int(c)} {int(t)} {_fmt(b)}" for c, t, b in zip(obs.camera, obs.track, obs.bearing)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_observations(path, frame: int) -> FrameObservations:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    text = path.read_text().strip()
    if not text:
        return FrameObservations(frame, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3)))
    try:
        data = np.array([line.split() for line in text.splitlines()], dtype=float)
    except ValueError:
        raise ParseError(f"{path}: malformed observation line") from None
    if data.ndim != 2 or data.shape[1] != 5:
        raise ParseError(f"{path}: expected 'cam track bx by bz' per line")
    return FrameObservations(frame, data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2:].copy())


def write_scene_cfg(path, cfg: dict) -> None:
    lines = ["# rovo scene"]
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, float):
            v = format_float(v)
        elif isinstance(v, (list, tuple, np.ndarray)):
            v = _fmt(v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_dataset(directory, dataset: Dataset) -> list[Path]:
    """Write ``dataset``; returns the paths written."""
    d = Path(directory)
    (d / "frames").mkdir(parents=True, exist_ok=True)
    written = [d / "rig.cfg", d / "scene.cfg", d / "gt_trajectory.txt"]
    write_rig(written[0], dataset.rig)
    write_scene_cfg(written[1], dataset.scene_config)
    write_trajectory(written[2], dataset.ground_truth)
    for obs in dataset.frames:
        p = d / "frames" / f"{obs.frame:06d}.obs"
        write_observations(p, obs)
        written.append(p)
    return written


def load_dataset(directory) -> Dataset:
    """Read a dataset directory.

    Raises:
        FileNotFoundError: naming the first missing file.
        ParseError: for malformed content.
    """
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"missing dataset directory: {d}")
    rig = read_rig(d / "rig.cfg")
    gt = read_trajectory(d / "gt_trajectory.txt")
    scene_cfg = _read_kv(d / "scene.cfg") if (d / "scene.cfg").exists() else {}
    frames_dir = d / "frames"
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"missing directory: {frames_dir}")
    n = len(gt)
    frames = [read_observations(frames_dir / f"{k:06d}.obs", k) for k in range(n)]
    return Dataset(rig, frames, [gt[k] for k in range(n)], scene_cfg)
