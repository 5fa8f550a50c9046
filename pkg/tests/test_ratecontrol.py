import numpy as np
import pytest

from cadlab.data import generate_natural_corpus
from cadlab.errors import InfeasibleTargetError, ParameterError
from cadlab.imagecore import Image, psnr
from cadlab.ratecontrol import (
    CODEC_DCT,
    CODEC_WAVELET,
    RateTarget,
    WAVELET_TOLERANCE_DB,
    compress_max,
    compress_to_psnr_dct,
    compress_to_psnr_wavelet,
)
from cadlab import wavelet_codec


@pytest.fixture(scope="module")
def img():
    return generate_natural_corpus(1, seed=55, size=64)[0]


@pytest.fixture(scope="module")
def stream(img):
    return wavelet_codec.encode_embedded(img)


def test_dct_hits_target(img):
    res = compress_to_psnr_dct(img, RateTarget(28.0))
    assert res.exact_hit
    assert abs(res.achieved_db - 28.0) <= 0.01
    # achieved_db must be reproducible from the stream alone
    assert psnr(img, res.decoded()) == res.achieved_db


def test_dct_infeasible_high_target(img):
    with pytest.raises(InfeasibleTargetError) as e:
        compress_to_psnr_dct(img, RateTarget(90.0))
    assert e.value.low_db < e.value.high_db < 90.0


def test_dct_infeasible_low_target(img):
    with pytest.raises(InfeasibleTargetError):
        compress_to_psnr_dct(img, RateTarget(3.0))


def test_wavelet_overshoots_within_tolerance(img, stream):
    for tgt in (23.0, 28.0):
        res = compress_to_psnr_wavelet(img, RateTarget(tgt), stream=stream)
        assert res.achieved_db >= tgt
        assert res.exact_hit
        assert res.achieved_db - tgt <= WAVELET_TOLERANCE_DB
        assert psnr(img, res.decoded()) == res.achieved_db


def test_wavelet_infeasible(img, stream):
    with pytest.raises(InfeasibleTargetError):
        compress_to_psnr_wavelet(img, RateTarget(200.0), stream=stream)


def test_reference_changes_the_measurement(img, stream):
    # with a different reference the reported PSNR is against it
    other = Image(np.clip(img.planes + 4.0, 0, 255))
    res = compress_to_psnr_wavelet(
        img, RateTarget(25.0, reference=other), stream=stream
    )
    assert psnr(other, res.decoded()) == res.achieved_db


def test_byte_size_monotone_in_target(img, stream):
    sizes = []
    for tgt in (23.0, 25.0, 28.0, 31.0):
        sizes.append(compress_to_psnr_dct(img, RateTarget(tgt)).byte_size)
    assert all(a <= b for a, b in zip(sizes, sizes[1:]))
    wsizes = [
        compress_to_psnr_wavelet(img, RateTarget(t), stream=stream).byte_size
        for t in (23.0, 25.0, 28.0, 31.0)
    ]
    assert all(a <= b for a, b in zip(wsizes, wsizes[1:]))


def test_compress_max_smaller_than_any_target(img, stream):
    for codec in (CODEC_DCT, CODEC_WAVELET):
        mx = compress_max(img, codec, stream=stream)
        at23 = (
            compress_to_psnr_dct(img, RateTarget(23.0))
            if codec == CODEC_DCT
            else compress_to_psnr_wavelet(img, RateTarget(23.0), stream=stream)
        )
        assert mx.byte_size <= at23.byte_size


def test_compress_max_unknown_codec(img):
    with pytest.raises(ParameterError):
        compress_max(img, "png")


def test_rate_target_validation():
    with pytest.raises(ParameterError):
        RateTarget(float("inf"))
    with pytest.raises(ParameterError):
        RateTarget(25.0, tolerance_db=0.0)
