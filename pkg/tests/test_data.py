import numpy as np
import pytest

from cadlab.data import (
    IMAGE_SIZE,
    NUM_CLASSES,
    generate_class_dataset,
    generate_natural_corpus,
    load_dataset,
    make_class_image,
    save_dataset,
)
from cadlab.errors import FormatError, ParameterError


def test_class_dataset_shape_and_labels():
    ds = generate_class_dataset(2, seed=0)
    assert len(ds) == 2 * NUM_CLASSES
    assert ds.num_classes == NUM_CLASSES
    for img in ds.images:
        assert img.planes.shape == (1, IMAGE_SIZE, IMAGE_SIZE)
        assert np.array_equal(img.planes, np.round(img.planes))
    assert sorted(set(ds.labels)) == list(range(NUM_CLASSES))


def test_class_dataset_deterministic():
    a = generate_class_dataset(3, seed=11)
    b = generate_class_dataset(3, seed=11)
    for x, y in zip(a.images, b.images):
        assert np.array_equal(x.planes, y.planes)
    c = generate_class_dataset(3, seed=12)
    assert any(
        not np.array_equal(x.planes, y.planes)
        for x, y in zip(a.images, c.images)
    )


def test_classes_are_distinguishable():
    # blobs sit at class-specific positions: per-class mean images differ
    rng = np.random.default_rng(0)
    means = []
    for label in range(NUM_CLASSES):
        imgs = [make_class_image(label, rng).planes for _ in range(10)]
        means.append(np.mean(imgs, axis=0))
    for i in range(NUM_CLASSES):
        for j in range(i + 1, NUM_CLASSES):
            assert np.abs(means[i] - means[j]).max() > 20.0


def test_label_out_of_range():
    rng = np.random.default_rng(0)
    with pytest.raises(ParameterError):
        make_class_image(10, rng)


def test_natural_corpus_properties():
    corpus = generate_natural_corpus(5, seed=3, size=32)
    assert len(corpus) == 5
    for img in corpus:
        assert img.planes.shape == (1, 32, 32)
        assert img.planes.min() == 0.0
        assert img.planes.max() == 255.0
        assert np.array_equal(img.planes, np.round(img.planes))


def test_natural_corpus_deterministic():
    a = generate_natural_corpus(3, seed=9)
    b = generate_natural_corpus(3, seed=9)
    for x, y in zip(a, b):
        assert np.array_equal(x.planes, y.planes)


def test_natural_corpus_lowpass_spectrum():
    # energy must concentrate at low frequencies, unlike white noise
    img = generate_natural_corpus(1, seed=4, size=64)[0].planes[0]
    spec = np.abs(np.fft.fft2(img - img.mean())) ** 2
    low = spec[:4, :4].sum()
    high = spec[28:36, 28:36].sum()
    assert low > 10.0 * high


def test_save_load_roundtrip(tmp_path):
    ds = generate_class_dataset(2, seed=1, split="test")
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert len(back) == len(ds)
    assert back.labels == ds.labels
    for x, y in zip(back.images, ds.images):
        assert np.array_equal(x.planes, y.planes)


def test_load_missing_labels(tmp_path):
    with pytest.raises(FormatError):
        load_dataset(tmp_path)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        generate_class_dataset(0, seed=0)
    with pytest.raises(ParameterError):
        generate_natural_corpus(0, seed=0)
