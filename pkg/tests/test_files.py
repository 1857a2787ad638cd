import numpy as np
import pytest

from rovo.errors import ParseError
from rovo.files import load_dataset, read_rig, read_trajectory, save_dataset, write_rig, write_trajectory
from rovo.geometry import RigidTransform
from rovo.world import SceneSpec, perturb_extrinsics, simulate


def test_rig_round_trip(tmp_path, rig):
    p = perturb_extrinsics(rig, 2.0, np.random.default_rng(0))
    write_rig(tmp_path / "rig.cfg", p)
    back = read_rig(tmp_path / "rig.cfg")
    assert back.pairs == p.pairs
    np.testing.assert_allclose(back.baseline_lengths, p.baseline_lengths, atol=1e-9)
    for a, b in zip(back.extrinsics, p.extrinsics):
        assert a.allclose(b, atol=1e-8)
    assert back.intrinsics[0].resolution == (1600, 1532)


def test_trajectory_format(tmp_path):
    poses = [RigidTransform.identity(), RigidTransform([0, 0, 0.5], [1, 2, 3])]
    write_trajectory(tmp_path / "t.txt", poses)
    lines = (tmp_path / "t.txt").read_text().splitlines()
    assert lines[0] == "0 " + " ".join(["0.000000000"] * 6)
    assert len(lines[1].split()) == 7
    back = read_trajectory(tmp_path / "t.txt")
    assert back[1].allclose(poses[1], atol=1e-8)


def test_trajectory_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.txt"):
        read_trajectory(tmp_path / "nope.txt")
    (tmp_path / "bad.txt").write_text("0 1 2 3\n")
    with pytest.raises(ParseError):
        read_trajectory(tmp_path / "bad.txt")
    (tmp_path / "rig.cfg").write_text("cameras = 1\ncam0.focal = x\n")
    with pytest.raises(ParseError):
        read_rig(tmp_path / "rig.cfg")


def test_dataset_round_trip(tmp_path, rig):
    ds = simulate(SceneSpec(trajectory="straight", frames=5, length=5.0), rig, noise_sigma=1e-3)
    written = save_dataset(tmp_path / "d", ds)
    assert (tmp_path / "d" / "frames" / "000004.obs") in written
    back = load_dataset(tmp_path / "d")
    assert len(back) == 5
    for a, b in zip(ds.frames, back.frames):
        assert np.array_equal(a.track, b.track) and np.array_equal(a.camera, b.camera)
        np.testing.assert_allclose(a.bearing, b.bearing, atol=1e-9)
    for a, b in zip(ds.ground_truth, back.ground_truth):
        assert a.allclose(b, atol=1e-8)


def test_missing_frame_file_is_named(tmp_path, rig):
    ds = simulate(SceneSpec(trajectory="straight", frames=3, length=3.0), rig)
    save_dataset(tmp_path, ds)
    (tmp_path / "frames" / "000001.obs").unlink()
    with pytest.raises(FileNotFoundError, match="000001.obs"):
        load_dataset(tmp_path)
