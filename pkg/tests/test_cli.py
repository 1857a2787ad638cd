import numpy as np
import pytest

from rovo.cli import main
from rovo.files import read_rig, read_trajectory
from rovo.hybrid import RemapTable, read_pnm, write_pnm


def _sim(path, *extra):
    argv = ["simulate", "--frames", "12", "--length", "24", "--seed", "5", "--out", str(path), *extra]
    assert main(argv) == 0
    return path


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return _sim(tmp_path_factory.mktemp("data") / "ds")


def test_simulate_is_deterministic(tmp_path, dataset):
    other = _sim(tmp_path / "again")
    names = sorted(p.name for p in dataset.iterdir())
    assert names == sorted(p.name for p in other.iterdir())
    for name in names:
        a, b = dataset / name, other / name
        if a.is_file():
            assert a.read_bytes() == b.read_bytes(), name


def test_simulate_rejects_bad_arguments(tmp_path, capsys):
    assert main(["simulate", "--frames", "0", "--out", str(tmp_path / "x")]) != 0
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_simulate_refuses_non_empty_directory(tmp_path, capsys):
    (tmp_path / "keep.txt").write_text("x")
    assert main(["simulate", "--frames", "3", "--out", str(tmp_path)]) == 1
    assert (tmp_path / "keep.txt").exists()


def test_run_and_eval(tmp_path, dataset, capsys):
    out = tmp_path / "gt"
    assert main(["run", "--dataset", str(dataset), "--mode", "GTExt", "--out", str(out)]) == 0
    lines = (out / "trajectory.txt").read_text().splitlines()
    assert [int(l.split()[0]) for l in lines] == list(range(12))
    assert all(len(l.split()) == 7 for l in lines)
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header.split(",")[:3] == ["frame", "inlier_ratio", "reproj_err_deg"]
    capsys.readouterr()

    report = tmp_path / "eval.txt"
    argv = ["eval", "--estimate", str(out / "trajectory.txt"), "--ground-truth", str(dataset / "gt_trajectory.txt"),
            "--metrics", str(out / "metrics.csv"), "--out", str(report)]
    assert main(argv) == 0
    text = report.read_text()
    assert text == capsys.readouterr().out
    kv = dict(line.split(" = ") for line in text.splitlines())
    assert kv["frames"] == "12"
    assert float(kv["rmse_m"]) < 0.5
    assert 0 < float(kv["inlier_ratio_pct"]) <= 100


def test_online_mode_writes_extrinsics(tmp_path, dataset, capsys):
    out = tmp_path / "online"
    argv = ["run", "--dataset", str(dataset), "--mode", "OnlineExt", "--perturb-extrinsics", "2",
            "--seed", "1", "--out", str(out)]
    assert main(argv) == 0
    rows = (out / "extrinsics.csv").read_text().splitlines()
    assert rows[0] == "frame,cam,pitch_deg,roll_deg,yaw_deg,tx,ty,tz"
    assert len(rows) == 1 + 12 * 4
    capsys.readouterr()
    argv = ["extrinsic-report", "--history", str(out / "extrinsics.csv"), "--truth", str(dataset / "rig.cfg")]
    assert main(argv) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].endswith(",rot_err_deg,trans_err_m")
    assert "# cam 0 converged_frame = 0" in text


def test_missing_dataset(tmp_path, capsys):
    code = main(["run", "--dataset", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("rovo run: error:")
    assert "nowhere" in err
    assert not (tmp_path / "o").exists()


def test_rig_report(dataset, capsys):
    assert main(["extrinsic-report", "--rig", str(dataset / "rig.cfg")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "cam,pitch_deg,roll_deg,yaw_deg,tx,ty,tz"
    assert lines[1] == "0," + ",".join(["0.000000000"] * 6)
    assert len(lines) == 1 + read_rig(dataset / "rig.cfg").num_cameras


def test_config_file_supplies_defaults(tmp_path, dataset, capsys):
    cfg = tmp_path / "report.cfg"
    cfg.write_text(f"rig = {dataset / 'rig.cfg'}\nreference = 1\n")
    assert main(["extrinsic-report", "--config", str(cfg)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[2] == "1," + ",".join(["0.000000000"] * 6)
    cfg.write_text("colour = red\n")
    with pytest.raises(SystemExit):
        main(["extrinsic-report", "--config", str(cfg), "--rig", "x"])


def _warp(tmp_path, image, name, *extra):
    argv = ["warp", "--image", str(image), "--rig", str(tmp_path / "ds" / "rig.cfg"), "--cam", "1",
            "--width", "160", "--height", "60", "--out", str(tmp_path / name), *extra]
    return main(argv)


def test_warp(tmp_path, dataset, capsys):
    (tmp_path / "ds").mkdir()
    (tmp_path / "ds" / "rig.cfg").write_bytes((dataset / "rig.cfg").read_bytes())
    src = tmp_path / "grey.pgm"
    write_pnm(src, np.full((1532, 1600), 77, dtype=np.uint8))
    assert _warp(tmp_path, src, "a.pgm", "--remap", str(tmp_path / "a.remap")) == 0
    assert _warp(tmp_path, src, "b.pgm") == 0
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()

    out = read_pnm(tmp_path / "a.pgm")
    table = RemapTable.load(tmp_path / "a.remap")
    assert out.shape == (60, 160)
    assert table.out_resolution == (160, 60)
    assert table.valid.any()
    assert np.all(out[table.valid] == 77)
    assert np.all(out[~table.valid] == 0)
    assert f"valid_pixels = {int(table.valid.sum())}" in capsys.readouterr().out


def test_warp_rejects_bad_input(tmp_path, dataset, capsys):
    (tmp_path / "ds").mkdir()
    (tmp_path / "ds" / "rig.cfg").write_bytes((dataset / "rig.cfg").read_bytes())
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    assert _warp(tmp_path, bad, "c.pgm") == 1
    assert not (tmp_path / "c.pgm").exists()
    small = tmp_path / "small.pgm"
    write_pnm(small, np.zeros((10, 10), dtype=np.uint8))
    assert _warp(tmp_path, small, "d.pgm") == 1
    assert "10x10" in capsys.readouterr().err


def test_eval_rejects_disjoint_trajectories(tmp_path, capsys):
    (tmp_path / "a.txt").write_text("0 0 0 0 0 0 0\n")
    (tmp_path / "b.txt").write_text("5 0 0 0 0 0 0\n")
    assert main(["eval", "--estimate", str(tmp_path / "a.txt"), "--ground-truth", str(tmp_path / "b.txt")]) == 1
    assert "share no frames" in capsys.readouterr().err
