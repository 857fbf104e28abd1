import json

import numpy as np
import pytest

from sufernobwa.cli import build_parser, run
from sufernobwa.imaging import ImageBuffer, load_image, save_image
from sufernobwa.synthetic import synthetic_pair, write_rice_tree

TINY = ["--resize", "16", "--window", "1", "--base-channels", "4", "--deterministic"]


def last_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = write_rice_tree(tmp_path_factory.mktemp("rice"), 6, size=20)
    out = tmp_path_factory.mktemp("run")
    code = run(["train", "--dataset-root", str(root), *TINY, "--epochs", "2", "--batch", "2",
                "--lr", "1e-4", "--out", str(out)])
    assert code == 0
    return root, out


def test_train_outputs(trained):
    _, out = trained
    assert (out / "train_log.jsonl").read_text().count("\n") == 2
    assert (out / "checkpoint_00002.npz").is_file() and (out / "checkpoint_00002.json").is_file()
    assert (out / "cache" / "index.json").is_file()


def test_prepare_twice_is_noop(tmp_path, capsys):
    root = write_rice_tree(tmp_path / "r", 4, size=12)
    args = ["prepare", "--dataset-root", str(root), "--resize", "8", "--out", str(tmp_path / "o")]
    assert run(args) == 0
    assert last_json(capsys)["written"] == 8
    assert run(args) == 0
    res = last_json(capsys)
    assert res["written"] == 0 and res["skipped"] == 8
    assert res["counts"] == {"train": 3, "test": 1}
    assert (tmp_path / "o" / "manifest.json").is_file()


def test_eval(trained, tmp_path, capsys):
    root, out = trained
    code = run(["eval", "--dataset-root", str(root), "--checkpoint", str(out / "checkpoint_00002.npz"),
                "--out", str(tmp_path)])
    assert code == 0
    assert set(last_json(capsys)["mean"]) == {"psnr", "ssim", "uqi"}
    assert (tmp_path / "metrics.csv").read_text().startswith("pair,psnr,ssim,uqi")
    code = run(["eval", "--dataset-root", str(root), "--checkpoint", str(out / "checkpoint_00002"),
                "--resize", "32", "--out", str(tmp_path)])
    assert code == 1
    assert "error: ConfigError:" in capsys.readouterr().err


def test_dehaze_keeps_dimensions(trained, tmp_path):
    _, out = trained
    hazy, _ = synthetic_pair(20, 0)
    save_image(ImageBuffer(hazy.data[:, :13]), tmp_path / "h.png")
    code = run(["dehaze", "--checkpoint", str(out / "checkpoint_00002"), "--in", str(tmp_path / "h.png"),
                "--out", str(tmp_path / "c.png")])
    assert code == 0
    assert load_image(tmp_path / "c.png").shape == (20, 13, 3)


def test_loss_report_identical_is_zero(tmp_path, capsys):
    _, clear = synthetic_pair(16, 0)
    save_image(clear, tmp_path / "g.png")
    assert run(["loss-report", "--pred", str(tmp_path / "g.png"), "--gt", str(tmp_path / "g.png")]) == 0
    rep = last_json(capsys)
    assert (rep["l2"], rep["guided"], rep["water"], rep["total"]) == (0.0, 0.0, 0.0, 0.0)
    assert rep["weights"] == [5.0, 1.0, 0.5]


def test_watershed_map(tmp_path, capsys):
    _, clear = synthetic_pair(16, 1)
    save_image(clear, tmp_path / "x.png")
    assert run(["watershed-map", "--in", str(tmp_path / "x.png"), "--out", str(tmp_path / "m.png")]) == 0
    grid = np.loadtxt(tmp_path / "m.txt")
    assert grid.shape == (16, 16) and grid.min() == 0.0 and grid.max() < 1.0
    assert load_image(tmp_path / "m.png").shape == (16, 16, 1)


def test_edge_compare(tmp_path, capsys):
    step = np.tile((np.arange(16) >= 8).astype(float), (16, 1))
    save_image(ImageBuffer(step), tmp_path / "a.png")
    save_image(ImageBuffer(np.full((16, 16), 0.5)), tmp_path / "b.png")
    assert run(["edge-compare", "--a", str(tmp_path / "a.png"), "--b", str(tmp_path / "b.png"),
                "--out", str(tmp_path / "e")]) == 0
    res = last_json(capsys)
    assert res["edges_a"] == 16 and res["edges_b"] == 0 and res["disagreement"] == 16
    assert (res["lo"], res["hi"]) == (100.0, 200.0)
    assert set(np.unique(load_image(tmp_path / "e" / "edges_a.png").data)) == {0.0, 1.0}


def test_ablate(trained, tmp_path, capsys):
    root, _ = trained
    assert run(["ablate", "--dataset-root", str(root), *TINY, "--epochs", "1", "--batch", "2",
                "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "full-scale, not a target" in printed
    assert len(json.loads((tmp_path / "ablation.json").read_text())["rows"]) == 6


def test_bad_flags_exit_2(capsys):
    assert run(["train", "--bogus"]) == 2
    assert run(["nope"]) == 2
    assert run(["edge-compare", "--a", "x", "--b", "y", "--out", "o", "--lo", "low"]) == 2


def test_runtime_error_is_one_line(tmp_path, capsys):
    code = run(["loss-report", "--pred", str(tmp_path / "missing.png"), "--gt", "also-missing.png"])
    assert code == 1
    err = [s for s in capsys.readouterr().err.splitlines() if s.startswith("error:")]
    assert len(err) == 1 and err[0].startswith("error: NotFound:")


def test_config_overlay_precedence(tmp_path, capsys):
    from sufernobwa.cli import parse

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda-l2": 2.0, "lambda_water": 0.25, "pred": "p.png", "gt": "g.png"}))
    args = parse(["loss-report", "--config", str(cfg), "--lambda-water", "0.75"])
    assert (args.lambda_l2, args.lambda_guided, args.lambda_water) == (2.0, 1.0, 0.75)
    assert args.pred == "p.png"
    cfg.write_text(json.dumps({"lambda_typo": 1}))
    assert run(["loss-report", "--config", str(cfg), "--pred", "a", "--gt", "b"]) == 1
    assert "error: ConfigError:" in capsys.readouterr().err


def test_desk_preset_flags_still_win():
    from sufernobwa.cli import parse

    args = parse(["train", "--dataset-root", "r", "--out", "o", "--desk", "--epochs", "7"])
    assert (args.resize, args.base_channels, args.window, args.lr, args.batch, args.epochs) == (
        64, 8, 4, 1e-4, 2, 7)


def test_help_lists_defaults(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    text = sub.choices["train"].format_help()
    for needle in ("--lr", "1e-05", "--lambda-l2", "5.0", "--lambda-guided", "--lambda-water", "0.5",
                   "--water-grad", "--guided-eps", "--no-swinrrdb", "--deterministic", "--seed"):
        assert needle in text, needle
    edge = sub.choices["edge-compare"].format_help()
    assert "100.0" in edge and "200.0" in edge
    assert run(["--help"]) == 0
