import csv
import json

import pytest

from p2ptrack.cli import build_train_config, load_settings, run, UsageError

SMALL = ["--set", "synthetic.n_frames=4", "--set", "synthetic.clutter_points_per_frame=100"]
TINY = ["--set", "model.preset='tiny'", "--set", "train.epochs=1", "--set", "train.batch_size=4",
        "--set", "synthetic.n_train=2", "--set", "synthetic.n_test=2"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run(["gen-synthetic", "--n", "3", "--out", str(out), *SMALL]) == 0
    return out / "data"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert run(["train", "--out", str(out), *SMALL, *TINY]) == 0
    return out


def test_gen_synthetic_layout(data_dir):
    assert sorted(p.name for p in (data_dir / "label_02").iterdir()) == ["0000.txt", "0001.txt", "0002.txt"]
    assert len(list((data_dir / "velodyne" / "0001").glob("*.bin"))) == 4
    manifest = json.loads((data_dir.parent / "manifest.json").read_text())
    assert manifest["command"] == "gen-synthetic" and len(manifest["input_hash"]) == 64


def test_train_outputs(trained):
    for name in ("metrics.csv", "epochs.csv", "best.ckpt", "last.ckpt", "manifest.json"):
        assert (trained / name).exists()
    cfg = json.loads((trained / "manifest.json").read_text())["config"]
    assert cfg["model"]["n_points"] == 64 and cfg["epochs"] == 1


def test_track_then_eval(tmp_path, trained, data_dir):
    ckpt = str(trained / "last.ckpt")
    assert run(["track", "--checkpoint", ckpt, "--data", str(data_dir), "--out", str(tmp_path / "t")]) == 0
    tracks = json.loads((tmp_path / "t" / "tracks.json").read_text())
    assert len(tracks) == 3 and all(len(v) == 4 for v in tracks.values())
    rc = run(["eval", "--data", str(data_dir), "--pred", str(tmp_path / "t" / "tracks.json"),
              "--baseline", "oracle", "--baseline", "cv", "--out", str(tmp_path / "e")])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "e" / "summary.csv")))
    assert [r["method"] for r in rows] == ["pred", "oracle", "cv"]
    assert float(rows[1]["success"]) >= 99.0


def test_eval_checkpoint_directly(tmp_path, trained, data_dir):
    rc = run(["eval", "--data", str(data_dir), "--checkpoint", str(trained / "best.ckpt"), "--out", str(tmp_path)])
    assert rc == 0 and (tmp_path / "sparsity.csv").exists()


def test_params_and_gradcheck(tmp_path, capsys):
    assert run(["params", "--preset", "tiny", "--out", str(tmp_path / "p")]) == 0
    assert "p2p_point" in capsys.readouterr().out
    assert run(["gradcheck", "--variant", "p2p_point", "--coords", "2", "--out", str(tmp_path / "g")]) == 0
    assert "ok" in (tmp_path / "g" / "gradcheck.txt").read_text()


def test_ini_config_and_overrides(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[train]\nepochs = 7\nlr = 3e-4\n[loss]\nkind = l1\n[augment]\nenabled = False\n")
    settings = load_settings(ini, ["train.epochs=9"])
    cfg = build_train_config(settings, seed=4)
    assert (cfg.epochs, cfg.lr, cfg.seed, cfg.loss.kind, cfg.augment) == (9, 3e-4, 4, "l1", None)
    assert cfg.model.probabilistic is False


@pytest.mark.parametrize("argv", [
    ["train", "--set", "nonsense"],
    ["train", "--set", "train.bogus=1"],
    ["train", "--set", "model.preset='huge'"],
    ["eval", "--data", "/nonexistent"],
    ["train", "--config", "/nonexistent.ini"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    assert run([*argv, "--out", str(tmp_path)] if argv[0] != "frobnicate" else argv) == 2


def test_runtime_error_exits_1(tmp_path):
    bad = tmp_path / "broken.ckpt"
    bad.write_bytes(b"garbage")
    (tmp_path / "d" / "label_02").mkdir(parents=True)
    (tmp_path / "d" / "label_02" / "0000.txt").write_text("")
    (tmp_path / "d" / "calib").mkdir()
    (tmp_path / "d" / "calib" / "0000.txt").write_text("Tr_velo_cam 1 0 0 0 0 1 0 0 0 0 1 0\n")
    assert run(["track", "--checkpoint", str(bad), "--data", str(tmp_path / "d"), "--out", str(tmp_path / "o")]) == 1


def test_env_out_default(tmp_path, monkeypatch):
    monkeypatch.setenv("P2PTRACK_OUT", str(tmp_path / "envout"))
    assert run(["params", "--preset", "tiny"]) == 0
    assert (tmp_path / "envout" / "params.csv").exists()


def test_usage_error_type():
    with pytest.raises(UsageError):
        load_settings(None, ["bogus.key=1"])


def test_train_with_synthetic_validation(tmp_path):
    argv = ["train", "--out", str(tmp_path), *SMALL, *TINY, "--set", "synthetic.n_val=1", "--set", "train.epochs=2"]
    assert run(argv) == 0
    rows = (tmp_path / "epochs.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[1].split(",")[3] != ""
