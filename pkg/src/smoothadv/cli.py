"""Command-line front end.

Subcommands: train, attack, evaluate, magnify, smooth-demo.  Every run
resolves its settings from built-in defaults, then an optional flat
key = value config file, then command-line flags, and writes the resolved
configuration into the output directory so the run can be reproduced
exactly from that file.  Attack failure is data, not an error: the exit
status is zero whenever the command itself completed.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, make_attack
from .data import load_idx_dataset, load_png_dataset, sample_photo, synthetic_digits
from .evaluation import bilateral_defense, emit_report, evaluate_attack, merge_multi_epsilon
from .graph import GraphConfig, smoothness_energy
from .image import load_image, save_image, save_raw
from .magnify import BilateralConfig, magnify
from .nn import TrainConfig, load_weights, predict, save_weights, train_reference_cnn
from .smoothing import build_smoothing_operator, smooth_normalized

EPSILON_BUDGET_KINDS = ("fgsm", "ifgsm", "pgd2", "spgd2")

_COMMON_DEFAULTS = {
    "seed": "0",
    "workers": "1",
    "dataset": "builtin",
    "train_count": "2000",
    "test_count": "500",
}

_DEFAULTS = {
    "train": {
        **_COMMON_DEFAULTS,
        "epochs": "10",
        "batch_size": "64",
        "learning_rate": "0.05",
        "momentum": "0.9",
        "min_accuracy": "0.95",
        "widths": "16,32,32",
    },
    "attack": {
        **_COMMON_DEFAULTS,
        "weights": "",
        "input": "",
        "label": "",
        "limit": "8",
        "attack": "cw",
        "epsilons": "0.3",
        "step": "0.08",
        "iterations": "10",
        "margin": "1",
        "learning_rate": "0.1",
        "initial_c": "15",
        "line_search_steps": "5",
        "max_adam_iters": "1000",
        "stall_patience": "200",
        "alpha": "0.95",
        "neighborhood": "8",
        "kernel": "laplacian",
        "sigma_f": "0.1",
        "log_trajectory": "false",
    },
    "evaluate": {
        **_COMMON_DEFAULTS,
        "weights": "",
        "limit": "100",
        "attacks": "cw,scw",
        "epsilons": "2,5,8",
        "step": "0.08",
        "iterations": "100",
        "margin": "1",
        "learning_rate": "0.1",
        "initial_c": "15",
        "line_search_steps": "5",
        "max_adam_iters": "1000",
        "stall_patience": "200",
        "alpha": "0.95",
        "neighborhood": "8",
        "kernel": "laplacian",
        "sigma_f": "0.1",
        "defense": "none",
        "step_fraction": "0.6",
    },
    "magnify": {
        "seed": "0",
        "input": "",
        "compare": "",
        "beta": "0.8",
        "sigma_domain": "5",
        "sigma_range": str(5.0 / 255.0),
        "radius": "",
    },
    "smooth-demo": {
        "seed": "0",
        "photo": "",
        "noise": "",
        "alpha": "0.95",
        "neighborhood": "8",
        "kernel": "laplacian",
        "sigma_f": "0.1",
    },
}


class RunConfig(dict):
    """String-valued settings with typed accessors."""

    def get_int(self, key):
        return int(self[key])

    def get_float(self, key):
        return float(self[key])

    def get_bool(self, key):
        value = self[key].strip().lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {key} must be boolean, got {self[key]!r}")

    def get_list(self, key):
        return [item.strip() for item in self[key].split(",") if item.strip()]

    def get_floats(self, key):
        return [float(item) for item in self.get_list(key)]


def parse_config_text(text):
    """Flat `key = value` lines; blank lines and # comments ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not `key = value`: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_config(cfg, command, path):
    lines = [f"command = {command}"] + [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def resolve_config(args):
    """defaults < config file < explicit flags; returns a RunConfig."""
    cfg = RunConfig(_DEFAULTS[args.command])
    if args.config:
        for key, value in parse_config_text(Path(args.config).read_text()).items():
            if key == "command":
                continue
            if key not in cfg:
                raise ValueError(f"unknown config key {key!r} for command {args.command}")
            cfg[key] = value
    flag_map = {
        "seed": args.seed,
        "alpha": getattr(args, "alpha", None),
        "workers": getattr(args, "workers", None),
        "input": getattr(args, "input", None),
        "weights": getattr(args, "weights", None),
        "dataset": getattr(args, "dataset", None),
        "limit": getattr(args, "limit", None),
        "defense": getattr(args, "defense", None),
    }
    if getattr(args, "attack", None) is not None:
        if args.command == "evaluate":
            flag_map["attacks"] = ",".join(args.attack)
        else:
            flag_map["attack"] = args.attack[-1]
    if getattr(args, "epsilon", None):
        flag_map["epsilons"] = ",".join(str(e) for e in args.epsilon)
    for key, value in flag_map.items():
        if value is not None:
            if key not in cfg:
                raise ValueError(f"flag --{key} does not apply to command {args.command}")
            cfg[key] = str(value)
    for item in args.set or ():
        if "=" not in item:
            raise ValueError(f"--set needs key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key.strip() not in cfg:
            raise ValueError(f"unknown config key {key.strip()!r} for command {args.command}")
        cfg[key.strip()] = value.strip()
    return cfg


def _prepare_out(cfg, args):
    out = Path(args.out) if args.out else Path("runs") / args.command
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, args.command, out / "run-config.txt")
    return out


def _load_dataset(cfg):
    src = cfg["dataset"]
    if src == "builtin":
        return synthetic_digits(cfg.get_int("train_count"), cfg.get_int("test_count"), seed=cfg.get_int("seed"))
    path = Path(src)
    if not path.exists():
        raise OSError(f"dataset path {src} does not exist")
    if (path / "labels.csv").exists():
        return load_png_dataset(path)
    if (path / "train-images.idx").exists():
        return load_idx_dataset(path)
    raise OSError(f"{src} has neither labels.csv nor train-images.idx")


def _load_classifier(cfg):
    if not cfg["weights"]:
        raise ValueError("a weights path is required (key `weights` or flag --weights)")
    return load_weights(cfg["weights"])


def _graph_config(cfg):
    return GraphConfig(
        neighborhood=cfg.get_int("neighborhood"),
        kernel=cfg["kernel"],
        sigma_f=cfg.get_float("sigma_f"),
    )


def _attack_config(cfg, kind, epsilon, step=None):
    return AttackConfig(
        kind=kind,
        epsilon=epsilon,
        step=step if step is not None else cfg.get_float("step"),
        iterations=cfg.get_int("iterations"),
        margin=cfg.get_float("margin"),
        learning_rate=cfg.get_float("learning_rate"),
        initial_c=cfg.get_float("initial_c"),
        line_search_steps=cfg.get_int("line_search_steps"),
        max_adam_iters=cfg.get_int("max_adam_iters"),
        stall_patience=cfg.get_int("stall_patience"),
        alpha=cfg.get_float("alpha"),
        graph=_graph_config(cfg),
        seed=cfg.get_int("seed"),
        log_trajectory=cfg.get_bool("log_trajectory") if "log_trajectory" in cfg else False,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(cfg, out):
    dataset = _load_dataset(cfg)
    widths = tuple(int(w) for w in cfg.get_list("widths"))
    train_cfg = TrainConfig(
        epochs=cfg.get_int("epochs"),
        batch_size=cfg.get_int("batch_size"),
        lr=cfg.get_float("learning_rate"),
        momentum=cfg.get_float("momentum"),
        seed=cfg.get_int("seed"),
        min_accuracy=cfg.get_float("min_accuracy"),
        widths=widths,
        log=True,
    )
    model = train_reference_cnn(dataset, train_cfg)
    weights_path = out / "weights.bin"
    save_weights(model, weights_path)
    report = {
        "test_accuracy": model.test_accuracy,
        "epochs": train_cfg.epochs,
        "seed": train_cfg.seed,
        "widths": list(widths),
        "weights": str(weights_path),
    }
    (out / "train-report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"test accuracy {model.test_accuracy:.4f}; weights -> {weights_path}")
    return 0


def _attack_one_image(classifier, cfg, out, x, label, stem, kind):
    record = {"image": stem, "attack": kind, "label": int(label)}
    predicted = predict(classifier, x)
    if predicted != label:
        record.update({"skipped": True, "predicted": predicted})
        (out / f"{stem}.json").write_text(json.dumps(record, indent=2) + "\n")
        return None
    atk_cfg = _attack_config(cfg, kind, cfg.get_floats("epsilons")[0])
    result = make_attack(classifier, atk_cfg)(x, label)

    save_image(result.adversarial, out / f"{stem}.adv.png")
    save_raw(result.adversarial - x, out / f"{stem}.pert.sadv")
    if result.latent is not None:
        save_raw(result.latent, out / f"{stem}.latent.sadv")
    record.update(
        {
            "skipped": False,
            "success": bool(result.success),
            "distortion": result.distortion,
            "iterations_used": result.iterations_used,
            "final_loss": result.final_loss,
        }
    )
    (out / f"{stem}.json").write_text(json.dumps(record, indent=2) + "\n")
    return result


def cmd_attack(cfg, out):
    classifier = _load_classifier(cfg)
    kind = cfg["attack"]
    if cfg["input"]:
        x = load_image(cfg["input"])
        label = cfg.get_int("label") if cfg["label"] else predict(classifier, x)
        stem = Path(cfg["input"]).stem
        result = _attack_one_image(classifier, cfg, out, x, label, stem, kind)
        if result is None:
            print(f"{stem}: original already misclassified; skipped")
        else:
            print(f"{stem}: success={result.success} distortion={result.distortion}")
        return 0

    _, _, test_x, test_y = _load_dataset(cfg)
    limit = min(cfg.get_int("limit"), len(test_x))
    attacked = skipped = succeeded = 0
    for i in range(limit):
        result = _attack_one_image(classifier, cfg, out, test_x[i], int(test_y[i]), f"img{i:04d}", kind)
        if result is None:
            skipped += 1
        else:
            attacked += 1
            succeeded += int(result.success)
    summary = {"attack": kind, "images": limit, "skipped": skipped, "attacked": attacked, "successes": succeeded}
    (out / "attack-summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"attacked {attacked}/{limit} (skipped {skipped}); successes {succeeded}")
    return 0


def cmd_evaluate(cfg, out):
    classifier = _load_classifier(cfg)
    _, _, test_x, test_y = _load_dataset(cfg)
    limit = min(cfg.get_int("limit"), len(test_x))
    images, labels = test_x[:limit], test_y[:limit]
    defense = bilateral_defense if cfg["defense"] == "bilateral" else None
    workers = cfg.get_int("workers")

    rows = []
    for kind in cfg.get_list("attacks"):
        if kind in EPSILON_BUDGET_KINDS:
            runs = []
            for eps in cfg.get_floats("epsilons"):
                step = cfg.get_float("step_fraction") * eps if kind in ("pgd2", "spgd2") else cfg.get_float("step")
                attack = make_attack(classifier, _attack_config(cfg, kind, eps, step=step))
                runs.append(
                    evaluate_attack(
                        classifier, attack, images, labels,
                        defense=defense, workers=workers, name=f"{kind}[eps={eps:g}]",
                    )
                )
                emit_report(runs[-1], out / f"{kind}-eps{eps:g}")
            report = merge_multi_epsilon(runs) if len(runs) > 1 else runs[0]
            if len(runs) > 1:
                report.attack = kind + "+merged"
        else:
            attack = make_attack(classifier, _attack_config(cfg, kind, cfg.get_floats("epsilons")[0]))
            report = evaluate_attack(classifier, attack, images, labels, defense=defense, workers=workers, name=kind)
        emit_report(report, out / kind)
        rows.append(
            {
                "attack": report.attack,
                "correctly_classified": report.correctly_classified,
                "p_suc": report.p_suc,
                "mean_distortion": report.mean_distortion,
            }
        )

    (out / "summary.json").write_text(json.dumps({"schema": 1, "rows": rows}, indent=2) + "\n")
    print(f"{'attack':<20} {'N':>4} {'P_suc':>6} {'mean dist':>10}")
    for row in rows:
        dist = "-" if row["mean_distortion"] is None else f"{row['mean_distortion']:.3f}"
        print(f"{row['attack']:<20} {row['correctly_classified']:>4} {row['p_suc']:>6.2f} {dist:>10}")
    return 0


def cmd_magnify(cfg, out):
    if not cfg["input"]:
        raise ValueError("an input image is required (key `input` or flag --input)")
    bf_cfg = BilateralConfig(
        sigma_domain=cfg.get_float("sigma_domain"),
        sigma_range=cfg.get_float("sigma_range"),
        radius=cfg.get_int("radius") if cfg["radius"] else None,
        beta=cfg.get_float("beta"),
    )

    def run_one(path):
        img = load_image(path)
        mag = magnify(img, bf_cfg)
        mag_path = Path(path).with_suffix(".mag.png")
        save_image(mag, mag_path)
        return img, mag, mag_path

    img, mag, mag_path = run_one(cfg["input"])
    print(f"magnified -> {mag_path}")
    if cfg["compare"]:
        img2, mag2, mag2_path = run_one(cfg["compare"])
        raw_diff = float(np.mean(np.abs(img - img2)))
        mag_diff = float(np.mean(np.abs(mag - mag2)))
        stats = {
            "input": cfg["input"],
            "compare": cfg["compare"],
            "mean_abs_diff_raw": raw_diff,
            "mean_abs_diff_magnified": mag_diff,
            "amplification": mag_diff / raw_diff if raw_diff > 0 else None,
        }
        (out / "magnify-report.json").write_text(json.dumps(stats, indent=2) + "\n")
        print(
            f"magnified -> {mag2_path}\n"
            f"mean |diff| raw {raw_diff:.6f}, magnified {mag_diff:.6f}"
            + (f" ({mag_diff / raw_diff:.1f}x)" if raw_diff > 0 else "")
        )
    return 0


def cmd_smooth_demo(cfg, out):
    rng = np.random.default_rng(cfg.get_int("seed"))
    if cfg["photo"]:
        photo = load_image(cfg["photo"])
    else:
        photo = sample_photo(seed=cfg.get_int("seed"))
        save_image(photo, out / "photo.png")
    noise = load_image(cfg["noise"]) if cfg["noise"] else rng.uniform(size=photo.shape)

    op = build_smoothing_operator(photo, cfg.get_float("alpha"), _graph_config(cfg))
    smoothed = smooth_normalized(op, noise)
    save_image(noise, out / "noise.png")
    save_image(np.clip(smoothed, 0.0, 1.0), out / "smoothed.png")
    save_raw(smoothed, out / "smoothed.sadv")

    deg = op.laplacian.degrees
    e_before = smoothness_energy(op.adjacency, deg, noise)
    e_after = smoothness_energy(op.adjacency, deg, smoothed)
    print(f"smoothness energy: noise {e_before:.4f} -> smoothed {e_after:.4f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="smoothadv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "train the reference classifier"),
        ("attack", "attack one image or a dataset slice"),
        ("evaluate", "run the evaluation protocol over attacks"),
        ("magnify", "reveal low-amplitude structure in an image"),
        ("smooth-demo", "smooth a noise image guided by a photo"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--alpha", type=float, help="smoothing strength in [0, 1)")
        p.add_argument("--attack", action="append", help="attack kind (repeatable for evaluate)")
        p.add_argument("--epsilon", action="append", type=float, help="distortion budget (repeatable)")
        p.add_argument("--defense", choices=("none", "bilateral"), help="input filter applied before prediction")
        p.add_argument("--workers", type=int, help="parallel attack workers")
        p.add_argument("--out", help="output directory (default runs/<command>)")
        p.add_argument("--input", help="input image path")
        p.add_argument("--weights", help="classifier weight file")
        p.add_argument("--dataset", help="dataset directory or `builtin`")
        p.add_argument("--limit", type=int, help="number of test images to use")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    return parser


_COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "evaluate": cmd_evaluate,
    "magnify": cmd_magnify,
    "smooth-demo": cmd_smooth_demo,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = _prepare_out(cfg, args)
        return _COMMANDS[args.command](cfg, out)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
