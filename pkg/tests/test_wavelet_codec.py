import numpy as np
import pytest

from cadlab.errors import FormatError, ParameterError
from cadlab.imagecore import Image, psnr, round_half_away
from cadlab.wavelet_codec import (
    DEFAULT_BASE_STEP,
    EmbeddedStream,
    FILTER_53,
    FILTER_97,
    decode_embedded,
    decompose,
    dwt53_1d,
    dwt97_1d,
    encode_embedded,
    idwt53_1d,
    idwt97_1d,
    max_levels,
    reconstruct,
    subband_weight,
    trace_decode_mse,
    wavelet_quantize_only,
)


def gray(arr):
    return Image(np.asarray(arr, dtype=np.float64)[None, :, :])


def random_image(rng, h=40, w=56, channels=1):
    return Image(round_half_away(rng.uniform(0, 255, (channels, h, w))))


def test_53_integer_reversible(rng):
    for _ in range(500):
        n = int(rng.integers(2, 65))
        x = rng.integers(-512, 512, size=n)
        s, d = dwt53_1d(x)
        back = idwt53_1d(s, d)
        assert np.array_equal(back, x), f"length {n}"


def test_53_odd_and_even_lengths():
    for n in (2, 3, 4, 5, 7, 16, 17):
        x = np.arange(n) * 3 - 7
        s, d = dwt53_1d(x)
        assert s.size == (n + 1) // 2 and d.size == n // 2
        assert np.array_equal(idwt53_1d(s, d), x)


def test_97_roundtrip(rng):
    for _ in range(100):
        n = int(rng.integers(2, 80))
        x = rng.uniform(-300, 300, size=n)
        s, d = dwt97_1d(x)
        assert np.abs(idwt97_1d(s, d) - x).max() < 1e-9


def test_97_kills_linear_detail():
    # the 9/7 highpass annihilates polynomials; away from the boundary
    # only the truncated lifting constants leave a tiny residual
    x = np.linspace(0, 100, 64)
    _, d = dwt97_1d(x)
    assert np.abs(d[2:-2]).max() < 1e-5


def test_multilevel_roundtrip(rng):
    for h, w in [(40, 56), (33, 47), (16, 16)]:
        levels = min(3, max_levels(w, h))
        # 5/3 lifting floors its updates: exact on integer input only
        ints = rng.integers(0, 256, size=(h, w)).astype(np.float64)
        back = reconstruct(decompose(ints, levels, FILTER_53), FILTER_53)
        assert np.array_equal(back, ints)
        plane = rng.uniform(0, 255, (h, w))
        back = reconstruct(decompose(plane, levels, FILTER_97), FILTER_97)
        assert np.abs(back - plane).max() < 1e-5


def test_subband_weights_orthonormal_limit():
    # 5/3 weights are moderate; deeper levels carry more synthesis energy
    w1 = subband_weight(FILTER_97, 1, "LL")
    w2 = subband_weight(FILTER_97, 2, "LL")
    assert w2 > w1 > 0.5


def test_stream_determinism(rng):
    img = random_image(rng)
    a = encode_embedded(img).to_bytes()
    b = encode_embedded(img).to_bytes()
    assert a == b


def test_container_roundtrip(rng):
    img = random_image(rng)
    st = encode_embedded(img)
    back = EmbeddedStream.from_bytes(st.to_bytes())
    assert back.truncation == st.truncation
    assert back.payload == st.payload
    assert np.array_equal(
        decode_embedded(back).planes, decode_embedded(st).planes
    )


def test_container_rejects_bad_magic(rng):
    raw = bytearray(encode_embedded(random_image(rng)).to_bytes())
    raw[:4] = b"ZZZZ"
    with pytest.raises(FormatError):
        EmbeddedStream.from_bytes(bytes(raw))


def test_truncation_table_monotone(rng):
    st = encode_embedded(random_image(rng))
    offs = [t[0] for t in st.truncation]
    mses = [t[1] for t in st.truncation]
    assert offs == sorted(offs) and len(set(offs)) == len(offs)
    assert all(b <= a for a, b in zip(mses, mses[1:]))


def test_truncated_stream_decodes_to_table_mse(rng):
    img = random_image(rng, 32, 32)
    st = encode_embedded(img)
    for off, err in st.truncation[:: max(1, len(st.truncation) // 7)]:
        cut = st.truncated(at_offset=off)
        dec = decode_embedded(cut)
        measured = float(np.mean((dec.planes - img.planes) ** 2))
        assert measured == pytest.approx(err, abs=1e-12)


def test_decode_at_unrecorded_offset_rejected(rng):
    st = encode_embedded(random_image(rng, 16, 16))
    bad = st.truncation[0][0] + 1
    if bad in {t[0] for t in st.truncation}:
        bad = st.truncation[-1][0] + 1
    with pytest.raises(ParameterError):
        decode_embedded(st, at_offset=bad)


def test_trace_decode_matches_table(rng):
    img = random_image(rng, 32, 32)
    st = encode_embedded(img)
    trace = trace_decode_mse(st, img)
    assert [t[0] for t in trace] == [t[0] for t in st.truncation]
    for (_, got), (_, want) in zip(trace, st.truncation):
        assert got == pytest.approx(want, abs=1e-12)


def test_full_decode_matches_quantize_only(rng):
    img = random_image(rng, 24, 40)
    full = decode_embedded(encode_embedded(img))
    direct = wavelet_quantize_only(img)
    assert np.abs(full.planes - direct.planes).max() < 1e-5


def test_53_codec_lossless_at_unit_step(rng):
    img = random_image(rng, 24, 24)
    st = encode_embedded(img, filter_id=FILTER_53, base_step=1.0)
    dec = decode_embedded(st)
    assert np.array_equal(dec.planes, img.planes)


def test_constant_image_near_exact():
    img = gray(np.full((32, 32), 77.0))
    dec = decode_embedded(encode_embedded(img))
    assert np.abs(dec.planes - 77.0).max() <= 0.5 * DEFAULT_BASE_STEP + 1e-9


def test_psnr_nondecreasing_along_table(rng):
    img = random_image(rng, 32, 32)
    st = encode_embedded(img)
    db = [psnr(img, decode_embedded(st.truncated(at_offset=o)))
          for o, _ in st.truncation[::40]]
    assert all(b >= a for a, b in zip(db, db[1:]))


def test_color_roundtrip(rng):
    img = random_image(rng, 24, 24, channels=3)
    dec = decode_embedded(encode_embedded(img))
    assert dec.planes.shape == img.planes.shape
    assert psnr(img, dec) > 40.0


def test_levels_validation(rng):
    img = random_image(rng, 16, 16)
    with pytest.raises(ParameterError):
        encode_embedded(img, levels=20)
    with pytest.raises(ParameterError):
        encode_embedded(img, base_step=0.0)
