import json
import subprocess
import sys

import numpy as np
import pytest

from smoothadv import (
    GraphConfig,
    laplacian_for_image,
    load_image,
    load_raw,
    predict,
    read_report_csv,
    sample_photo,
    save_image,
    smoothness_energy,
)
from smoothadv.cli import RunConfig, build_parser, main, parse_config_text, resolve_config

FAST_TRAIN = ["--set", "train_count=1200", "--set", "test_count=300", "--set", "epochs=8"]
FAST_OPT = [
    "--set", "max_adam_iters=150",
    "--set", "stall_patience=40",
    "--set", "line_search_steps=2",
]


def test_parse_config_text():
    parsed = parse_config_text("# comment\n\n  alpha = 0.9 \nkernel= gaussian\n")
    assert parsed == {"alpha": "0.9", "kernel": "gaussian"}
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("alpha = 0.9\nnot-an-assignment\n")


def test_runconfig_accessors():
    cfg = RunConfig({"n": "4", "x": "0.5", "flag": "yes", "items": "a, b,,c", "bad": "maybe"})
    assert cfg.get_int("n") == 4
    assert cfg.get_float("x") == 0.5
    assert cfg.get_bool("flag") is True
    assert cfg.get_list("items") == ["a", "b", "c"]
    with pytest.raises(ValueError):
        cfg.get_bool("bad")


def test_config_precedence(tmp_path):
    config = tmp_path / "run.txt"
    config.write_text("seed = 5\nlimit = 3\n")
    args = build_parser().parse_args(["attack", "--config", str(config), "--seed", "7"])
    cfg = resolve_config(args)
    assert cfg["seed"] == "7"  # flag beats file
    assert cfg["limit"] == "3"  # file beats default
    assert cfg["attack"] == "cw"  # default survives


def test_repeatable_attack_flag_joins_for_evaluate():
    args = build_parser().parse_args(["evaluate", "--attack", "cw", "--attack", "scw"])
    assert resolve_config(args)["attacks"] == "cw,scw"
    args = build_parser().parse_args(["attack", "--attack", "fgsm", "--attack", "pgd2"])
    assert resolve_config(args)["attack"] == "pgd2"
    args = build_parser().parse_args(["evaluate", "--epsilon", "2", "--epsilon", "5"])
    assert resolve_config(args)["epsilons"] == "2.0,5.0"


def test_unknown_config_key_fails_fast(tmp_path, capsys):
    assert main(["attack", "--out", str(tmp_path / "o"), "--set", "bogus=1"]) == 1
    assert "bogus" in capsys.readouterr().err
    config = tmp_path / "bad.txt"
    config.write_text("bogus = 1\n")
    assert main(["attack", "--out", str(tmp_path / "o2"), "--config", str(config)]) == 1


def test_flag_that_does_not_apply_fails(tmp_path, capsys):
    assert main(["magnify", "--out", str(tmp_path / "o"), "--alpha", "0.5"]) == 1
    assert "--alpha" in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_train_command(tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--out", str(out), *FAST_TRAIN]) == 0
    assert (out / "weights.bin").exists()
    assert (out / "run-config.txt").exists()
    report = json.loads((out / "train-report.json").read_text())
    assert report["test_accuracy"] >= 0.95
    assert report["widths"] == [16, 32, 32]


def test_missing_dataset_path(tmp_path, capsys):
    code = main(["train", "--out", str(tmp_path / "o"), "--dataset", str(tmp_path / "nowhere")])
    assert code == 1
    assert "does not exist" in capsys.readouterr().err


def _write_test_image(tmp_path, dataset, model):
    _, _, test_x, _ = dataset
    path = tmp_path / "sample.png"
    save_image(test_x[0], path)
    return path, predict(model, load_image(path))


def test_attack_single_image_cw(tmp_path, dataset, model, weights_file):
    img_path, _ = _write_test_image(tmp_path, dataset, model)
    out = tmp_path / "attack"
    code = main(
        ["attack", "--out", str(out), "--weights", str(weights_file), "--input", str(img_path), *FAST_OPT]
    )
    assert code == 0
    record = json.loads((out / "sample.json").read_text())
    assert record["skipped"] is False
    assert set(record) >= {"success", "distortion", "iterations_used", "final_loss"}
    assert (out / "sample.adv.png").exists()
    perturbation = load_raw(out / "sample.pert.sadv")
    assert perturbation.shape == (28, 28, 1)


def test_attack_single_image_scw_writes_latent(tmp_path, dataset, model, weights_file):
    img_path, _ = _write_test_image(tmp_path, dataset, model)
    out = tmp_path / "scw"
    code = main(
        [
            "attack", "--out", str(out), "--weights", str(weights_file),
            "--input", str(img_path), "--attack", "scw",
            "--set", "max_adam_iters=300", "--set", "line_search_steps=2", "--set", "stall_patience=80",
        ]
    )
    assert code == 0
    record = json.loads((out / "sample.json").read_text())
    if record["success"]:
        assert (out / "sample.latent.sadv").exists()


def test_attack_wrong_label_is_skipped_not_an_error(tmp_path, dataset, model, weights_file, capsys):
    img_path, predicted = _write_test_image(tmp_path, dataset, model)
    out = tmp_path / "skip"
    code = main(
        [
            "attack", "--out", str(out), "--weights", str(weights_file),
            "--input", str(img_path), "--set", f"label={(predicted + 1) % 10}",
        ]
    )
    assert code == 0
    assert "skipped" in capsys.readouterr().out
    record = json.loads((out / "sample.json").read_text())
    assert record["skipped"] is True
    assert record["predicted"] == predicted
    assert not (out / "sample.adv.png").exists()


def test_attack_dataset_slice(tmp_path, weights_file):
    out = tmp_path / "slice"
    code = main(
        [
            "attack", "--out", str(out), "--weights", str(weights_file),
            "--attack", "fgsm", "--epsilon", "0.25", "--limit", "3",
            "--set", "train_count=50", "--set", "test_count=12",
        ]
    )
    assert code == 0
    summary = json.loads((out / "attack-summary.json").read_text())
    assert summary["images"] == 3
    assert summary["attacked"] + summary["skipped"] == 3


def test_evaluate_command(tmp_path, weights_file):
    out = tmp_path / "eval"
    code = main(
        [
            "evaluate", "--out", str(out), "--weights", str(weights_file),
            "--attack", "pgd2", "--attack", "cw",
            "--epsilon", "2", "--epsilon", "5",
            "--limit", "6", "--set", "train_count=50", "--set", "test_count=40",
            "--set", "iterations=60", *FAST_OPT,
        ]
    )
    assert code == 0
    for name in ("pgd2-eps2", "pgd2-eps5", "pgd2", "cw"):
        assert (out / f"{name}.csv").exists()
        assert (out / f"{name}.json").exists()

    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == 1
    by_attack = {row["attack"]: row for row in summary["rows"]}
    assert set(by_attack) == {"pgd2+merged", "cw"}

    # the emitted per-image rows must reproduce the summary statistics
    rows = read_report_csv(out / "pgd2.csv")
    n = by_attack["pgd2+merged"]["correctly_classified"]
    assert len(rows) == n
    assert sum(r.success for r in rows) / n == pytest.approx(by_attack["pgd2+merged"]["p_suc"])

    # merging can only improve on any single budget
    single = json.loads((out / "pgd2-eps2.json").read_text())
    assert by_attack["pgd2+merged"]["p_suc"] >= single["p_suc"]


def test_evaluate_with_defense(tmp_path, weights_file):
    out = tmp_path / "defense"
    code = main(
        [
            "evaluate", "--out", str(out), "--weights", str(weights_file),
            "--attack", "fgsm", "--epsilon", "0.3", "--limit", "3",
            "--defense", "bilateral", "--set", "train_count=50", "--set", "test_count=30",
        ]
    )
    assert code == 0
    assert (out / "fgsm.json").exists()


def test_evaluate_requires_weights(tmp_path, capsys):
    assert main(["evaluate", "--out", str(tmp_path / "o"), "--limit", "2"]) == 1
    assert "weights" in capsys.readouterr().err


def _noisy_gradient(tmp_path, name="scene.png"):
    rng = np.random.default_rng(70)
    yy = np.linspace(0.2, 0.8, 20)[:, None, None]
    img = np.clip(yy + 0.05 * rng.standard_normal((20, 20, 3)), 0, 1)
    path = tmp_path / name
    save_image(img, path)
    return path


def test_magnify_command(tmp_path):
    img_path = _noisy_gradient(tmp_path)
    out = tmp_path / "mag"
    code = main(["magnify", "--out", str(out), "--input", str(img_path), "--set", "sigma_domain=1.5"])
    assert code == 0
    mag_path = img_path.with_suffix(".mag.png")
    assert mag_path.exists()
    first = mag_path.read_bytes()

    # a different mixing weight must actually change the output
    code = main(
        ["magnify", "--out", str(out), "--input", str(img_path), "--set", "sigma_domain=1.5", "--set", "beta=0.0"]
    )
    assert code == 0
    assert mag_path.read_bytes() != first


def test_magnify_constant_image_goes_mid_gray(tmp_path):
    path = tmp_path / "flat.png"
    save_image(np.full((8, 8, 1), 0.3), path)
    assert main(["magnify", "--out", str(tmp_path / "m"), "--input", str(path)]) == 0
    mag = load_image(path.with_suffix(".mag.png"))
    np.testing.assert_allclose(mag, 128 / 255.0, atol=1e-12)


def test_magnify_compare_reports_amplification(tmp_path):
    base_path = _noisy_gradient(tmp_path, "base.png")
    base = load_image(base_path)
    yy, xx = np.mgrid[0:20, 0:20]
    bump = 0.01 * np.exp(-((yy - 10) ** 2 + (xx - 10) ** 2) / 12.0)[:, :, None]
    tweaked_path = tmp_path / "tweaked.png"
    save_image(np.clip(base + bump, 0, 1), tweaked_path)

    out = tmp_path / "cmp"
    code = main(
        [
            "magnify", "--out", str(out), "--input", str(base_path),
            "--set", f"compare={tweaked_path}", "--set", "sigma_domain=1.5",
        ]
    )
    assert code == 0
    report = json.loads((out / "magnify-report.json").read_text())
    assert report["amplification"] is not None and report["amplification"] > 1.0


def test_magnify_requires_input(tmp_path, capsys):
    assert main(["magnify", "--out", str(tmp_path / "o")]) == 1
    assert "input" in capsys.readouterr().err


def test_smooth_demo_command(tmp_path, capsys):
    photo_path = tmp_path / "photo.png"
    save_image(sample_photo(24, 32, seed=1), photo_path)
    out = tmp_path / "demo"
    code = main(["smooth-demo", "--out", str(out), "--set", f"photo={photo_path}"])
    assert code == 0
    for name in ("noise.png", "smoothed.png", "smoothed.sadv"):
        assert (out / name).exists()

    smoothed = load_raw(out / "smoothed.sadv")
    noise = load_image(out / "noise.png")
    photo = load_image(photo_path)
    adj, deg, _ = laplacian_for_image(photo, 0.95, GraphConfig())
    assert smoothness_energy(adj, deg, smoothed) < smoothness_energy(adj, deg, noise)


def test_run_config_reproduces_a_run_exactly(tmp_path, dataset, model, weights_file):
    img_path, _ = _write_test_image(tmp_path, dataset, model)
    out1 = tmp_path / "first"
    out2 = tmp_path / "second"
    args = ["attack", "--weights", str(weights_file), "--input", str(img_path), "--attack", "ifgsm",
            "--epsilon", "0.3", "--set", "iterations=10"]
    assert main([*args, "--out", str(out1)]) == 0
    assert main(["attack", "--config", str(out1 / "run-config.txt"), "--out", str(out2)]) == 0
    assert (out1 / "sample.pert.sadv").read_bytes() == (out2 / "sample.pert.sadv").read_bytes()
    assert (out1 / "run-config.txt").read_text() == (out2 / "run-config.txt").read_text()


def test_installed_entry_point_runs(tmp_path):
    img_path = _noisy_gradient(tmp_path)
    proc = subprocess.run(
        [
            sys.executable, "-m", "smoothadv.cli",
            "magnify", "--out", str(tmp_path / "o"), "--input", str(img_path),
            "--set", "sigma_domain=1.0",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "magnified" in proc.stdout
