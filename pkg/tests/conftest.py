import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dartsrenet import autograd as ag
from dartsrenet.data import save_cifar10_batch, synthetic_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def clean_tape():
    """Every test starts with an empty tape and default switches."""
    ag.reset_tape()
    ag.set_finite_checks(True)
    yield
    ag.reset_tape()
    ag.set_finite_checks(True)


@pytest.fixture(scope="session")
def cifar_dir(tmp_path_factory):
    """A byte-exact CIFAR-10-format directory (synthetic learnable content).

    Five train files and one test file, 10,000 records each, so the loader
    contracts (counts, file sizes) can be exercised without the real corpus.
    """
    root = tmp_path_factory.mktemp("cifar10")
    train = synthetic_corpus(50_000, seed=11, split="train")
    test = synthetic_corpus(10_000, seed=12, split="test")
    for i in range(5):
        sl = slice(i * 10_000, (i + 1) * 10_000)
        save_cifar10_batch(root / f"data_batch_{i + 1}.bin",
                           train.images[sl], train.labels[sl])
    save_cifar10_batch(root / "test_batch.bin", test.images, test.labels)
    return root
