"""Shared fixtures. The session-scoped ones are expensive (corpus
encodes, model training) and are reused across the acceptance criteria;
unit tests build their own small inputs instead.
"""

import numpy as np
import pytest

from cadlab.data import generate_class_dataset, generate_natural_corpus
from cadlab.model import Dataset, TrainConfig, train
from cadlab import wavelet_codec

CORPUS_SEED = 1234
TRAIN_SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def corpus50():
    return generate_natural_corpus(50, seed=CORPUS_SEED, size=64)


@pytest.fixture(scope="session")
def corpus_streams(corpus50):
    """One embedded encode per corpus image, shared by several criteria."""
    return [wavelet_codec.encode_embedded(img) for img in corpus50]


@pytest.fixture(scope="session")
def train_set():
    return generate_class_dataset(100, seed=0, split="train")


@pytest.fixture(scope="session")
def test_set():
    return generate_class_dataset(100, seed=7000, split="test")


@pytest.fixture(scope="session")
def eval_set(test_set):
    """Balanced 50-image slice of the test set for the slow grid runs."""
    picks = []
    for label in range(10):
        idx = [i for i, l in enumerate(test_set.labels) if l == label][:5]
        picks.extend(idx)
    return Dataset(
        images=[test_set.images[i] for i in picks],
        labels=[test_set.labels[i] for i in picks],
        num_classes=test_set.num_classes,
        split="eval",
    )


@pytest.fixture(scope="session")
def models(train_set):
    """The frozen desk model (seed 0) plus two re-trainings."""
    return {
        seed: train(train_set, TrainConfig(seed=seed)) for seed in TRAIN_SEEDS
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
