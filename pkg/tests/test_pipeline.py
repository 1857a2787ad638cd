import math

import numpy as np
import pytest

from rovo.errors import InsufficientDataError
from rovo.evaluation import ate
from rovo.pipeline import Mode, PipelineAborted, PipelineConfig, run
from rovo.world import Dataset, FrameObservations, SceneSpec, perturb_extrinsics, simulate

STEP = 350.0 / 300.0


def dataset(rig, frames, noise=0.0, seed=0, outliers=0.0, trajectory="circle"):
    spec = SceneSpec(trajectory=trajectory, frames=frames, length=frames * STEP, seed=seed)
    return simulate(spec, rig, noise_sigma=noise, outlier_rate=outliers)


@pytest.fixture(scope="module")
def clean_run(rig):
    ds = dataset(rig, 200)
    return ds, run(ds, PipelineConfig(mode=Mode.GT_EXT))


def test_zero_noise_fixpoint(clean_run):
    ds, out = clean_run
    assert len(out.poses) == 200 and len(out.records) == 200
    assert out.failed_frames == []
    assert ate(out.poses, ds.ground_truth).rmse < 1e-4
    assert out.poses[0].allclose(ds.ground_truth[0], atol=1e-12)


def test_metric_scale_preserved(clean_run):
    ds, out = clean_run
    est = np.array([T.center for T in out.poses])
    gt = np.array([T.center for T in ds.ground_truth])
    v_est = np.median(np.linalg.norm(np.diff(est, axis=0), axis=1))
    v_gt = np.median(np.linalg.norm(np.diff(gt, axis=0), axis=1))
    assert v_est == pytest.approx(v_gt, rel=0.02)


def test_records_and_outputs(clean_run, tmp_path):
    _, out = clean_run
    assert [r.frame for r in out.records] == list(range(200))
    assert all(r.inlier_ratio > 0.99 for r in out.records[1:])
    out.write_metrics(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "frame,inlier_ratio,reproj_err_deg,num_landmarks" and len(lines) == 201
    out.write_trajectory(tmp_path / "t.txt")
    assert len((tmp_path / "t.txt").read_text().splitlines()) == 200


def test_deterministic_under_noise_and_outliers(rig, tmp_path):
    ds = dataset(rig, 25, noise=math.radians(0.05), outliers=0.1, seed=3)
    cfg = PipelineConfig(mode=Mode.GT_EXT, seed=4)
    a, b = run(ds, cfg), run(ds, cfg)
    for name, o in (("a", a), ("b", b)):
        o.write_trajectory(tmp_path / f"{name}.txt")
        o.write_metrics(tmp_path / f"{name}.csv")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_online_mode_records_extrinsic_history(rig, tmp_path):
    perturbed = perturb_extrinsics(rig, 5.0, np.random.default_rng(0))
    ds = dataset(rig, 20, noise=math.radians(0.05))
    out = run(ds, PipelineConfig(mode=Mode.ONLINE_EXT, extrinsic_sigma_deg=5.0), rig=perturbed)
    assert [f for f, _ in out.extrinsic_history] == list(range(20))
    for b in out.baseline_history:
        np.testing.assert_allclose(b, rig.baseline_lengths, rtol=1e-4)
    out.write_extrinsic_history(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "frame,cam,pitch_deg,roll_deg,yaw_deg,tx,ty,tz"
    assert len(lines) == 1 + 20 * 4


def test_frozen_modes_keep_extrinsics(rig):
    perturbed = perturb_extrinsics(rig, 5.0, np.random.default_rng(0))
    ds = dataset(rig, 8)
    out = run(ds, PipelineConfig(mode=Mode.NOISY_EXT, extrinsic_sigma_deg=5.0), rig=perturbed)
    assert all(a == b for a, b in zip(out.final_extrinsics, perturbed.extrinsics))


def blank_frames(ds, frames):
    out = []
    for f in ds.frames:
        if f.frame in frames:
            f = FrameObservations(f.frame, f.camera[:0], f.track[:0], f.bearing[:0])
        out.append(f)
    return Dataset(ds.rig, out, ds.ground_truth, ds.scene_config)


def test_failed_frame_uses_constant_velocity(rig):
    ds = dataset(rig, 20, trajectory="straight")
    out = run(blank_frames(ds, {10}), PipelineConfig())
    assert out.failed_frames == [10]
    assert out.records[10].ransac_failed
    assert ate(out.poses, ds.ground_truth).max < 0.05


def test_abort_after_too_many_consecutive_failures(rig):
    ds = dataset(rig, 20, trajectory="straight")
    with pytest.raises(PipelineAborted, match="consecutive"):
        run(blank_frames(ds, set(range(5, 20))), PipelineConfig())


def test_needs_two_frames(rig):
    ds = dataset(rig, 1)
    with pytest.raises(InsufficientDataError):
        run(ds, PipelineConfig())


def test_config_validation():
    assert PipelineConfig(mode="OnlineExt").optimize_extrinsics
    assert not PipelineConfig(mode="NoisyExt").optimize_extrinsics
    with pytest.raises(ValueError):
        PipelineConfig(mode="Bogus")
    with pytest.raises(ValueError):
        PipelineConfig(window=1)
