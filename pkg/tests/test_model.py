import numpy as np
import pytest

from cadlab.data import generate_class_dataset
from cadlab.errors import FormatError, ParameterError, ShapeError
from cadlab.imagecore import Image
from cadlab.model import (
    Dataset,
    Model,
    TrainConfig,
    accuracy,
    forward,
    load_model,
    loss_and_input_grad,
    predict_batch,
    quantize_for_classifier,
    save_model,
    train,
)


def tiny_dataset(per_class=3, seed=0):
    return generate_class_dataset(per_class, seed=seed)


def tiny_model(seed=0):
    return train(tiny_dataset(), TrainConfig(epochs=3, seed=seed))


def test_forward_is_probability_vector():
    m = tiny_model()
    p = forward(m, tiny_dataset().images[0])
    assert p.shape == (10,)
    assert np.all(p >= 0.0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_training_reduces_loss_and_fits():
    data = tiny_dataset(per_class=10)
    m = train(data, TrainConfig(epochs=20))
    assert accuracy(m, data) > 0.8


def test_training_deterministic():
    a = save_model(train(tiny_dataset(), TrainConfig(epochs=2, seed=3)))
    b = save_model(train(tiny_dataset(), TrainConfig(epochs=2, seed=3)))
    assert a == b
    c = save_model(train(tiny_dataset(), TrainConfig(epochs=2, seed=4)))
    assert a != c


def test_predict_ties_to_lowest_index():
    # zero weights make every logit identical
    m = Model(
        input_shape=(1, 4, 4),
        num_classes=3,
        weights=[np.zeros((3, 16))],
        biases=[np.zeros(3)],
    )
    img = Image(np.full((1, 4, 4), 100.0))
    assert predict_batch(m, [img])[0] == 0


def test_input_gradient_matches_finite_differences():
    m = tiny_model()
    img = tiny_dataset().images[0]
    label = 0
    _, grad = loss_and_input_grad(m, img, label)
    rng = np.random.default_rng(9)
    h = 1e-3
    for _ in range(20):
        c = rng.integers(0, img.planes.size)
        idx = np.unravel_index(c, img.planes.shape)
        up = img.planes.copy()
        dn = img.planes.copy()
        up[idx] = min(up[idx] + h, 255.0)
        dn[idx] = max(dn[idx] - h, 0.0)
        lu, _ = loss_and_input_grad(m, Image(up), label)
        ld, _ = loss_and_input_grad(m, Image(dn), label)
        fd = (lu - ld) / (up[idx] - dn[idx])
        denom = max(abs(fd), abs(grad[idx]), 1e-8)
        assert abs(fd - grad[idx]) / denom < 1e-4


def test_gradient_rejects_bad_label():
    m = tiny_model()
    with pytest.raises(ParameterError):
        loss_and_input_grad(m, tiny_dataset().images[0], 10)


def test_shape_mismatch_rejected():
    m = tiny_model()
    with pytest.raises(ShapeError):
        forward(m, Image(np.zeros((1, 5, 5))))


def test_save_load_roundtrip():
    m = tiny_model()
    raw = save_model(m)
    back = load_model(raw)
    assert back.input_shape == m.input_shape
    assert back.num_classes == m.num_classes
    for w1, w2 in zip(m.weights, back.weights):
        assert np.array_equal(w1, w2)
    for b1, b2 in zip(m.biases, back.biases):
        assert np.array_equal(b1, b2)
    assert save_model(back) == raw


def test_load_rejects_truncation_and_trailing():
    raw = save_model(tiny_model())
    with pytest.raises(FormatError):
        load_model(raw[:-5])
    with pytest.raises(FormatError):
        load_model(raw + b"\x00")
    with pytest.raises(FormatError):
        load_model(b"WXYZ" + raw[4:])


def test_quantize_for_classifier():
    img = Image(np.array([[[1.4, 2.5], [3.6, 250.5]]]))
    q = quantize_for_classifier(img)
    assert np.array_equal(q.planes, [[[1.0, 3.0], [4.0, 251.0]]])


def test_dataset_validation():
    img = Image(np.zeros((1, 4, 4)))
    with pytest.raises(ParameterError):
        Dataset(images=[img], labels=[0, 1], num_classes=2)
    with pytest.raises(ParameterError):
        Dataset(images=[img], labels=[5], num_classes=2)
