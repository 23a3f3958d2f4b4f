import os
from pathlib import Path

import pytest

from tightbox.datasets import MNIST_FILES, load_mnist_split
from tightbox.synthdata import ensure_digit_data


@pytest.fixture(scope="session")
def digit_root(tmp_path_factory) -> Path:
    """Directory with MNIST-format IDX files.

    Uses $TIGHTBOX_DATA_DIR when it already holds the four files (e.g. real
    MNIST); otherwise synthesizes the offline digit stand-in into a session
    temp dir.
    """
    env = os.environ.get("TIGHTBOX_DATA_DIR")
    if env and all((Path(env) / name).exists() for name in MNIST_FILES.values()):
        return Path(env)
    return ensure_digit_data(tmp_path_factory.mktemp("digits"))


@pytest.fixture(scope="session")
def digit_train(digit_root):
    return load_mnist_split("train", digit_root, limit=4000)


@pytest.fixture(scope="session")
def digit_test(digit_root):
    return load_mnist_split("test", digit_root, limit=1000)
