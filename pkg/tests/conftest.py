import numpy as np
import pytest

from smoothadv import TrainConfig, save_weights, synthetic_digits, train_reference_cnn


@pytest.fixture(scope="session")
def dataset():
    return synthetic_digits(2000, 500, seed=0)


@pytest.fixture(scope="session")
def model(dataset):
    return train_reference_cnn(dataset, TrainConfig(epochs=10, seed=0))


@pytest.fixture(scope="session")
def weights_file(model, tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "reference.bin"
    save_weights(model, path)
    return path


@pytest.fixture(scope="session")
def correct_subset(model, dataset):
    """Test images the model classifies correctly: (indices, images, labels)."""
    _, _, test_x, test_y = dataset
    preds = np.argmax(model.batch_logits(test_x), axis=1)
    idx = np.flatnonzero(preds == test_y)
    return idx, test_x[idx], test_y[idx]
