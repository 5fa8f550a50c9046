import numpy as np
import pytest

from cadlab.bitio import BitReader, BitWriter
from cadlab.errors import DecodeError


def test_single_bits_roundtrip():
    bw = BitWriter()
    pattern = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1]
    for b in pattern:
        bw.write(b, 1)
    br = BitReader(bw.getvalue())
    assert [br.read_bit() for _ in pattern] == pattern


def test_msb_first_packing():
    bw = BitWriter()
    bw.write(0b101, 3)
    bw.write(0b00001, 5)
    assert bw.getvalue() == bytes([0b10100001])


def test_multibit_values_roundtrip(rng):
    widths = rng.integers(1, 25, size=200)
    values = [int(rng.integers(0, 1 << w)) for w in widths]
    bw = BitWriter()
    for v, w in zip(values, widths):
        bw.write(v, int(w))
    br = BitReader(bw.getvalue())
    assert [br.read(int(w)) for w in widths] == values


def test_bit_array_roundtrip(rng):
    bits = rng.integers(0, 2, size=1000).astype(np.uint8)
    bw = BitWriter()
    bw.write_bit_array(bits)
    br = BitReader(bw.getvalue())
    assert np.array_equal(br.read_bit_array(1000), bits)


def test_align_to_byte():
    bw = BitWriter()
    bw.write(1, 1)
    bw.align_to_byte()
    bw.write(0xAB, 8)
    raw = bw.getvalue()
    assert len(raw) == 2
    assert raw[1] == 0xAB
    br = BitReader(raw)
    assert br.read_bit() == 1
    br.align_to_byte()
    assert br.read(8) == 0xAB


def test_tell_bytes_counts_flushed_bytes():
    bw = BitWriter()
    assert bw.tell_bytes() == 0
    bw.write(0, 8)
    assert bw.tell_bytes() == 1
    bw.write(1, 1)
    bw.align_to_byte()
    assert bw.tell_bytes() == 2


def test_read_past_end_raises():
    br = BitReader(b"\x00")
    br.read(8)
    with pytest.raises(DecodeError):
        br.read_bit()
