"""Command-line entry point: ``rovo <command> [options]``.

Commands:

    simulate           write a synthetic dataset directory
    run                run the odometry pipeline on a dataset
    eval               compare an estimated trajectory with ground truth
    warp               warp a fisheye image onto the plane/cylinder surface
    extrinsic-report   relative camera poses of a rig or a run's history

Every command accepts ``--config FILE`` with ``key = value`` lines; flags
given on the command line win.  Outputs are removed again if a command
fails part way.  ``ROVO_THREADS`` caps the BLAS thread pools.
"""

from __future__ import annotations

import argparse
import math
import os
import shutil
import sys
from pathlib import Path

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_cap() -> None:
    value = os.environ.get("ROVO_THREADS")
    if not value:
        return
    if not value.isdigit() or int(value) < 1:
        raise SystemExit(f"rovo: ROVO_THREADS must be a positive integer, got {value!r}")
    for var in _THREAD_VARS:
        os.environ.setdefault(var, value)


class _Outputs:
    """Tracks files and directories a command creates so failures can clean up."""

    def __init__(self):
        self.paths: list[Path] = []

    def file(self, path) -> Path:
        p = Path(path)
        self.dir(p.parent)
        if not p.exists():
            self.paths.append(p)
        return p

    def dir(self, path) -> Path:
        p = Path(path)
        missing = []
        q = p
        while not q.exists():
            missing.append(q)
            q = q.parent
        for m in reversed(missing):
            m.mkdir()
            self.paths.append(m)
        return p

    def remove(self) -> None:
        for p in reversed(self.paths):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


def _read_config(path: str) -> dict[str, str]:
    from .files import _read_kv

    return {k.replace("-", "_"): v for k, v in _read_kv(Path(path)).items()}


# --------------------------------------------------------------------------- commands


def cmd_simulate(args, out: _Outputs) -> None:
    from .files import save_dataset
    from .rig import default_rig
    from .world import SceneSpec, simulate

    spec = SceneSpec(
        trajectory=args.traj,
        frames=args.frames,
        length=args.length,
        density=args.density,
        dynamic=args.dynamic,
        seed=args.seed,
    )
    spec.validate()
    dataset = simulate(spec, default_rig(), math.radians(args.noise_deg), args.outlier_rate)
    target = Path(args.out)
    if target.exists() and any(target.iterdir()):
        raise FileExistsError(f"output directory is not empty: {target}")
    out.dir(target)
    for p in save_dataset(target, dataset):
        out.file(p)
    n_obs = sum(len(f) for f in dataset.frames)
    print(f"frames = {len(dataset.frames)}")
    print(f"observations = {n_obs}")
    print(f"mean_observations_per_frame = {n_obs / len(dataset.frames):.1f}")


def cmd_run(args, out: _Outputs) -> None:
    import numpy as np

    from .files import load_dataset
    from .pipeline import Mode, PipelineConfig, run
    from .world import perturb_extrinsics

    dataset = load_dataset(args.dataset)
    if args.frames is not None:
        if args.frames < 2:
            raise ValueError("--frames must be at least 2")
        dataset.frames = dataset.frames[: args.frames]
        dataset.ground_truth = dataset.ground_truth[: args.frames]
    mode = Mode(args.mode)
    rig = dataset.rig
    sigma = 0.0
    if args.perturb_extrinsics and mode is not Mode.GT_EXT:
        sigma = args.perturb_extrinsics
        rig = perturb_extrinsics(rig, sigma, np.random.default_rng([args.seed, 3]))
    config = PipelineConfig(mode=mode, seed=args.seed, window=args.window, extrinsic_sigma_deg=sigma)
    result = run(dataset, config, rig)
    target = out.dir(args.out)
    result.write_trajectory(out.file(target / "trajectory.txt"))
    result.write_metrics(out.file(target / "metrics.csv"))
    result.write_extrinsic_history(out.file(target / "extrinsics.csv"))
    print(f"frames = {len(result.poses)}")
    print(f"ransac_failures = {len(result.failed_frames)}")


def cmd_eval(args, out: _Outputs) -> None:
    from .evaluation import ate
    from .files import read_trajectory

    est = read_trajectory(args.estimate)
    gt = read_trajectory(args.ground_truth)
    stats = ate(est, gt, args.align)
    lines = [
        f"frames = {stats.num_frames}",
        f"rmse_m = {stats.rmse:.9f}",
        f"mean_ate_m = {stats.mean:.9f}",
        f"max_ate_m = {stats.max:.9f}",
    ]
    if args.metrics:
        lines += _metric_averages(Path(args.metrics))
    text = "\n".join(lines) + "\n"
    if args.out:
        out.file(args.out).write_text(text)
    sys.stdout.write(text)


def _metric_averages(path: Path) -> list[str]:
    import csv

    from .errors import ParseError

    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    try:
        later = [r for r in rows if int(r["frame"]) > 0] or rows
        inl = 100.0 * sum(float(r["inlier_ratio"]) for r in later) / max(1, len(later))
        rep = sum(float(r["reproj_err_deg"]) for r in later) / max(1, len(later))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: malformed metrics ({exc})") from None
    return [f"inlier_ratio_pct = {inl:.9f}", f"reproj_err_deg = {rep:.9f}"]


def cmd_warp(args, out: _Outputs) -> None:
    from .files import read_rig
    from .hybrid import build_config, build_remap_table, read_pnm, warp_image, write_pnm

    rig = read_rig(args.rig)
    if not 0 <= args.cam < rig.num_cameras:
        raise ValueError(f"--cam must lie in [0, {rig.num_cameras - 1}]")
    img = read_pnm(args.image)
    cfg = build_config(rig, args.cam, (args.width, args.height), math.radians(args.fov_span))
    table = build_remap_table(cfg, rig.intrinsics[args.cam])
    warped = warp_image(img, table)
    write_pnm(out.file(args.out), warped)
    if args.remap:
        table.save(out.file(args.remap))
    print(f"valid_pixels = {int(table.valid.sum())}")


def cmd_extrinsic_report(args, out: _Outputs) -> None:
    import csv

    from .backend import extrinsic_report
    from .errors import ParseError
    from .files import format_float, read_rig

    if args.history:
        path = Path(args.history)
        if not path.exists():
            raise FileNotFoundError(f"missing file: {path}")
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ParseError(f"{path}: empty history")
        truth = None
        if args.truth:
            truth = {r.camera: r for r in extrinsic_report(read_rig(args.truth).extrinsics, args.reference)}
        lines = ["frame,cam,pitch_deg,roll_deg,yaw_deg,tx,ty,tz" + (",rot_err_deg,trans_err_m" if truth else "")]
        converged: dict[int, int | None] = {}
        for r in rows:
            try:
                frame, cam = int(r["frame"]), int(r["cam"])
                ang = [float(r[k]) for k in ("pitch_deg", "roll_deg", "yaw_deg")]
                t = [float(r[k]) for k in ("tx", "ty", "tz")]
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{path}: malformed row ({exc})") from None
            line = f"{frame},{cam}," + ",".join(format_float(v) for v in ang + t)
            if truth:
                rot, dt = _relative_error(ang, t, truth[cam])
                line += f",{format_float(rot)},{format_float(dt)}"
                ok = rot < args.tolerance_deg
                if not ok:
                    converged[cam] = None
                elif converged.get(cam) is None:
                    converged[cam] = frame
            lines.append(line)
        for cam in sorted(converged):
            f = converged[cam]
            lines.append(f"# cam {cam} converged_frame = {f if f is not None else 'never'}")
    else:
        rig = read_rig(args.rig)
        lines = ["cam,pitch_deg,roll_deg,yaw_deg,tx,ty,tz"]
        for row in extrinsic_report(rig.extrinsics, args.reference):
            vals = [row.pitch_deg, row.roll_deg, row.yaw_deg, *row.translation]
            lines.append(f"{row.camera}," + ",".join(format_float(v) for v in vals))
    text = "\n".join(lines) + "\n"
    if args.out:
        out.file(args.out).write_text(text)
    sys.stdout.write(text)


def _relative_error(angles_deg, translation, truth_row) -> tuple[float, float]:
    import numpy as np
    from scipy.spatial.transform import Rotation

    R = Rotation.from_euler("xyz", angles_deg, degrees=True)
    G = Rotation.from_euler("xyz", [truth_row.pitch_deg, truth_row.roll_deg, truth_row.yaw_deg], degrees=True)
    rot = float(np.degrees((R * G.inv()).magnitude()))
    return rot, float(np.linalg.norm(np.asarray(translation) - truth_row.translation))


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rovo", description="Multi-camera fisheye visual odometry tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--config", help="key = value defaults")
    p.add_argument("--traj", default="circle", choices=("circle", "straight", "lawnmower"))
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--length", type=float, default=350.0, help="path length in meters")
    p.add_argument("--density", type=float, default=3.0, help="landmarks per meter of path")
    p.add_argument("--dynamic", type=int, default=0, help="number of moving objects")
    p.add_argument("--noise-deg", type=float, default=0.05, help="bearing noise (degrees)")
    p.add_argument("--outlier-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the pipeline on a dataset")
    p.add_argument("--config", help="key = value defaults")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", default="GTExt", choices=("GTExt", "NoisyExt", "OnlineExt"))
    p.add_argument("--perturb-extrinsics", type=float, default=0.0, metavar="SIGMA_DEG")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--frames", type=int, default=None, help="process only the first N frames")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="trajectory error against ground truth")
    p.add_argument("--config", help="key = value defaults")
    p.add_argument("--estimate", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--align", default="none", choices=("none", "se3"))
    p.add_argument("--metrics", help="metrics.csv from a run, for inlier/reprojection averages")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("warp", help="warp a fisheye image")
    p.add_argument("--config", help="key = value defaults")
    p.add_argument("--image", required=True)
    p.add_argument("--rig", required=True)
    p.add_argument("--cam", type=int, default=0)
    p.add_argument("--width", type=int, default=1200)
    p.add_argument("--height", type=int, default=400)
    p.add_argument("--fov-span", type=float, default=200.0, help="horizontal span in degrees")
    p.add_argument("--out", required=True)
    p.add_argument("--remap", help="also write the remap table here")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("extrinsic-report", help="relative camera poses")
    p.add_argument("--config", help="key = value defaults")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--rig", help="rig.cfg to report")
    src.add_argument("--history", help="extrinsics.csv written by 'run'")
    p.add_argument("--truth", help="rig.cfg with reference extrinsics (with --history)")
    p.add_argument("--reference", type=int, default=0)
    p.add_argument("--tolerance-deg", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extrinsic_report)
    return parser


def _parse(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    head = argparse.ArgumentParser(add_help=False)
    head.add_argument("command", nargs="?")
    head.add_argument("--config")
    pre, _ = head.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    if pre.config and pre.command in subparsers:
        sub = subparsers[pre.command]
        try:
            config = _read_config(pre.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        known = {a.dest for a in sub._actions}  # noqa: SLF001
        unknown = sorted(set(config) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        for action in sub._actions:  # noqa: SLF001
            if action.dest in config:
                raw = config[action.dest]
                try:
                    action.default = action.type(raw) if action.type not in (None, str) else raw
                except ValueError:
                    parser.error(f"config key {action.dest}: invalid value {raw!r}")
                action.required = False
        # a config entry satisfies a required either/or group
        for group in sub._mutually_exclusive_groups:  # noqa: SLF001
            if any(a.dest in config for a in group._group_actions):  # noqa: SLF001
                group.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = _parse(parser, argv)
    from .errors import RovoError

    out = _Outputs()
    try:
        args.func(args, out)
    except KeyboardInterrupt:
        out.remove()
        return 130
    except (RovoError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        out.remove()
        print(f"rovo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
