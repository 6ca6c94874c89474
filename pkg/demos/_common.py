"""Shared helpers for the demo scripts: output folders and a cached model."""

from pathlib import Path

from smoothadv import TrainConfig, load_weights, save_weights, synthetic_digits, train_reference_cnn

OUTPUT = Path(__file__).resolve().parent / "output"


def out_dir(name):
    path = OUTPUT / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def demo_dataset():
    """A small, fast split of the built-in digit set (seed-stable)."""
    return synthetic_digits(1200, 300, seed=0)


def demo_model(dataset):
    """Train once, cache the weights, and reuse them across demo runs."""
    weights = OUTPUT / "weights.bin"
    if weights.exists():
        model = load_weights(weights)
        print(f"loaded cached classifier from {weights}")
        return model
    print("training the reference classifier (a few seconds)...")
    model = train_reference_cnn(dataset, TrainConfig(epochs=8, seed=0))
    OUTPUT.mkdir(parents=True, exist_ok=True)
    save_weights(model, weights)
    print(f"test accuracy {model.test_accuracy:.4f}; cached weights at {weights}")
    return model
