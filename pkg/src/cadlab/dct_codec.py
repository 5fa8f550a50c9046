"""JPEG-style block codec with a continuous quantization multiplier.

Pipeline: 8x8 blockwise DCT, scaled ITU-T T.81 Annex K quantization tables,
zigzag scan, DC-differential + AC run-length symbols, Huffman coding with
the Annex K "typical" tables, all wrapped in a self-describing DCX1
container. The entropy stage is lossless; ``dct_quantize_only`` is the same
chain without entropy coding and is sample-identical to encode+decode.

The quality knob is a positive real multiplier m applied to the base
tables: step(u,v) = clamp(round(base(u,v)*m), 1, 32767). A continuous knob
(instead of JPEG's integer quality 1..100) is what makes PSNR bisection
converge to tight tolerances.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bitio import BitReader, BitWriter
from .errors import DecodeError, FormatError, ParameterError
from .imagecore import (
    Image,
    clamp255,
    crop,
    pad_to_multiple,
    round_half_away,
    rgb_to_ycbcr,
    ycbcr_to_rgb,
)

MAGIC = b"DCX1"
_HEADER = struct.Struct("<4sIIBBdQ")

MULTIPLIER_MIN = 0.05
MULTIPLIER_MAX = 256.0

# ITU-T T.81 Annex K.1: luminance and chrominance quantization tables.
BASE_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)
BASE_CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)

# Zigzag scan: _ZIGZAG_POS[k] is the flat (row*8+col) position of the k-th
# coefficient in scan order.
_SCAN_OF_POS = np.array(
    [
        0, 1, 5, 6, 14, 15, 27, 28,
        2, 4, 7, 13, 16, 26, 29, 42,
        3, 8, 12, 17, 25, 30, 41, 43,
        9, 11, 18, 24, 31, 40, 44, 53,
        10, 19, 23, 32, 39, 45, 52, 54,
        20, 22, 33, 38, 46, 51, 55, 60,
        21, 34, 37, 47, 50, 56, 59, 61,
        35, 36, 48, 49, 57, 58, 62, 63,
    ],
    dtype=np.int64,
)
_ZIGZAG_POS = np.argsort(_SCAN_OF_POS)

# T.81 Annex K.3 "typical" Huffman tables: (counts per code length 1..16,
# symbol values in code order).
_DC_LUMA_SPEC = (
    (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0),
    tuple(range(12)),
)
_DC_CHROMA_SPEC = (
    (0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0),
    tuple(range(12)),
)
_AC_LUMA_SPEC = (
    (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D),
    (
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41,
        0x06, 0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91,
        0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24,
        0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A,
        0x25, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38,
        0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53,
        0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66,
        0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
        0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92, 0x93,
        0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
        0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7,
        0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
        0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1,
        0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2,
        0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ),
)
_AC_CHROMA_SPEC = (
    (0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77),
    (
        0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12,
        0x41, 0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14,
        0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0, 0x15,
        0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17,
        0x18, 0x19, 0x1A, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37,
        0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A,
        0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65,
        0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78,
        0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A,
        0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3,
        0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5,
        0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7,
        0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9,
        0xDA, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2,
        0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ),
)


def _build_huffman(spec):
    """Canonical code assignment from (counts-per-length, values)."""
    counts, values = spec
    encode = {}
    decode = {}
    code = 0
    vi = 0
    for length in range(1, 17):
        for _ in range(counts[length - 1]):
            sym = values[vi]
            encode[sym] = (code, length)
            decode[(length, code)] = sym
            vi += 1
            code += 1
        code <<= 1
    return encode, decode


_DC_LUMA_ENC, _DC_LUMA_DEC = _build_huffman(_DC_LUMA_SPEC)
_DC_CHROMA_ENC, _DC_CHROMA_DEC = _build_huffman(_DC_CHROMA_SPEC)
_AC_LUMA_ENC, _AC_LUMA_DEC = _build_huffman(_AC_LUMA_SPEC)
_AC_CHROMA_ENC, _AC_CHROMA_DEC = _build_huffman(_AC_CHROMA_SPEC)

_EOB = 0x00
_ZRL = 0xF0

# Orthonormal 8-point DCT-II matrix; 2-D application matches the T.81
# convention S(v,u) = 1/4 C(u) C(v) sum sum s(y,x) cos(...) cos(...).
_DCT_N = 8


def _dct_matrix():
    u = np.arange(_DCT_N)[:, None]
    x = np.arange(_DCT_N)[None, :]
    d = 0.5 * np.cos((2 * x + 1) * u * np.pi / 16.0)
    d[0, :] *= 1.0 / np.sqrt(2.0)
    return d


_D = _dct_matrix()


@dataclass(frozen=True)
class QuantTable:
    """Base 8x8 integer table scaled by a continuous positive multiplier."""

    base: np.ndarray
    multiplier: float

    def __post_init__(self):
        if self.multiplier <= 0.0:
            raise ParameterError(f"multiplier must be > 0, got {self.multiplier}")

    @property
    def steps(self) -> np.ndarray:
        s = np.floor(self.base * self.multiplier + 0.5)
        return np.clip(s, 1, 32767).astype(np.int64)


def fdct8x8(block: np.ndarray) -> np.ndarray:
    """Forward 8x8 DCT with the -128 level shift applied internally."""
    b = np.asarray(block, dtype=np.float64) - 128.0
    return _D @ b @ _D.T


def idct8x8(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of fdct8x8; re-applies the +128 level shift, no clamping."""
    c = np.asarray(coeffs, dtype=np.float64)
    return _D.T @ c @ _D + 128.0


def quantize_block(coeffs: np.ndarray, table: QuantTable) -> np.ndarray:
    """Round-half-away-from-zero quantization to integer multiples of step."""
    s = table.steps
    c = np.asarray(coeffs, dtype=np.float64)
    return (np.sign(c) * np.floor(np.abs(c) / s + 0.5)).astype(np.int64)


def dequantize_block(q: np.ndarray, table: QuantTable) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * table.steps


def zigzag(coeffs: np.ndarray) -> np.ndarray:
    return np.asarray(coeffs).reshape(64)[_ZIGZAG_POS]


def inverse_zigzag(seq: np.ndarray) -> np.ndarray:
    out = np.empty(64, dtype=np.asarray(seq).dtype)
    out[_ZIGZAG_POS] = np.asarray(seq).reshape(64)
    return out.reshape(8, 8)


@dataclass(frozen=True)
class DctStream:
    """Self-describing DCX1 bitstream (own container, not JFIF)."""

    width: int
    height: int
    channels: int
    subsample: bool
    multiplier: float
    payload: bytes

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            MAGIC,
            self.width,
            self.height,
            self.channels,
            1 if self.subsample else 0,
            self.multiplier,
            len(self.payload),
        )
        return header + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "DctStream":
        if len(data) < _HEADER.size:
            raise FormatError(f"stream too short for DCX1 header: {len(data)} bytes")
        magic, w, h, ch, sub, mult, plen = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if ch not in (1, 3):
            raise FormatError(f"bad channel count {ch}")
        if mult <= 0.0 or not np.isfinite(mult):
            raise FormatError(f"bad multiplier {mult}")
        payload = data[_HEADER.size :]
        if len(payload) != plen:
            raise FormatError(
                f"payload length mismatch: header says {plen}, have {len(payload)}"
            )
        return cls(w, h, ch, bool(sub), mult, payload)


def _read_symbol(br: BitReader, table) -> int:
    code = 0
    for length in range(1, 17):
        code = (code << 1) | br.read_bit()
        sym = table.get((length, code))
        if sym is not None:
            return sym
    raise DecodeError("invalid Huffman code", byte_offset=br.byte_offset)


def _magnitude_category(v: int) -> int:
    return int(abs(v)).bit_length()


def _value_bits(v: int, size: int) -> int:
    # JPEG "additional bits": ones-complement style for negatives.
    return v if v >= 0 else v + (1 << size) - 1


def _decode_value(bits: int, size: int) -> int:
    if size == 0:
        return 0
    if bits < (1 << (size - 1)):
        return bits - (1 << size) + 1
    return bits


def _blocks_of(plane: np.ndarray) -> np.ndarray:
    """(H, W) -> (n_blocks, 8, 8) in raster block order; dims must be /8."""
    h, w = plane.shape
    return (
        plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    )


def _unblocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return (
        blocks.reshape(h // 8, w // 8, 8, 8).transpose(0, 2, 1, 3).reshape(h, w)
    )


def _fdct_blocks(blocks: np.ndarray) -> np.ndarray:
    return np.einsum("ux,nxy,vy->nuv", _D, blocks - 128.0, _D, optimize=True)


def _idct_blocks(coeffs: np.ndarray) -> np.ndarray:
    return np.einsum("xu,nuv,yv->nxy", _D.T, coeffs, _D.T, optimize=True) + 128.0


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    p = np.pad(plane, ((0, h % 2), (0, w % 2)), mode="edge")
    return 0.25 * (p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2])


def _upsample2(plane: np.ndarray, h: int, w: int) -> np.ndarray:
    up = np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)
    return up[:h, :w]


def _codec_planes(img: Image, subsample: bool):
    """Per-channel (plane, is_chroma, pre-pad shape) after color transform."""
    if img.channels == 3:
        ycc = rgb_to_ycbcr(img)
        planes = [(ycc.planes[0], False)]
        for ci in (1, 2):
            c = ycc.planes[ci]
            if subsample:
                c = _downsample2(c)
            planes.append((c, True))
    else:
        planes = [(img.planes[0], False)]
    return [(p, chroma, p.shape) for p, chroma, in planes]


def _quantized_channel(plane: np.ndarray, table: QuantTable) -> np.ndarray:
    """Pad to 8, DCT, quantize; returns (n_blocks, 8, 8) int64."""
    padded = pad_to_multiple(Image(plane[np.newaxis]), 8).planes[0]
    coeffs = _fdct_blocks(_blocks_of(padded))
    s = table.steps
    return (np.sign(coeffs) * np.floor(np.abs(coeffs) / s + 0.5)).astype(np.int64)


def _analyze(img: Image, multiplier: float, subsample: bool):
    """Quantized blocks for every channel (shared by encode and quantize-only)."""
    if multiplier <= 0.0:
        raise ParameterError(f"multiplier must be > 0, got {multiplier}")
    out = []
    for plane, chroma, shape in _codec_planes(img, subsample):
        base = BASE_CHROMA_TABLE if chroma else BASE_LUMA_TABLE
        table = QuantTable(base, multiplier)
        out.append((_quantized_channel(plane, table), table, shape))
    return out


def _synthesize(channels, width: int, height: int, subsample: bool,
                n_channels: int) -> Image:
    """Inverse of _analyze from quantized blocks back to a clamped Image."""
    planes = []
    for qblocks, table, (ph, pw) in channels:
        deq = qblocks.astype(np.float64) * table.steps
        rec = _unblocks(_idct_blocks(deq), (ph + 7) // 8 * 8, (pw + 7) // 8 * 8)
        planes.append(rec[:ph, :pw])
    if n_channels == 3:
        y = planes[0]
        cb, cr = planes[1], planes[2]
        if subsample:
            cb = _upsample2(cb, height, width)
            cr = _upsample2(cr, height, width)
        ycc = Image(clamp255(np.stack([y, cb, cr])))
        out = ycbcr_to_rgb(crop(ycc, width, height))
    else:
        out = Image(clamp255(planes[0][np.newaxis, :height, :width]))
    return out


def _encode_channel(bw: BitWriter, qblocks: np.ndarray, chroma: bool):
    dc_enc = _DC_CHROMA_ENC if chroma else _DC_LUMA_ENC
    ac_enc = _AC_CHROMA_ENC if chroma else _AC_LUMA_ENC
    pred = 0
    flat = qblocks.reshape(-1, 64)[:, _ZIGZAG_POS]
    for zz in flat:
        dc = int(zz[0])
        diff = dc - pred
        pred = dc
        size = _magnitude_category(diff)
        if size > 11:
            raise ParameterError(f"DC differential {diff} out of coding range")
        code, length = dc_enc[size]
        bw.write(code, length)
        if size:
            bw.write(_value_bits(diff, size), size)
        ac = zz[1:]
        nz = np.nonzero(ac)[0]
        prev = -1
        for idx in nz:
            run = int(idx) - prev - 1
            prev = int(idx)
            while run >= 16:
                code, length = ac_enc[_ZRL]
                bw.write(code, length)
                run -= 16
            v = int(ac[idx])
            size = _magnitude_category(v)
            if size > 10:
                raise ParameterError(f"AC coefficient {v} out of coding range")
            code, length = ac_enc[(run << 4) | size]
            bw.write(code, length)
            bw.write(_value_bits(v, size), size)
        if prev != 62:  # trailing zeros remain
            code, length = ac_enc[_EOB]
            bw.write(code, length)


def _decode_channel(br: BitReader, n_blocks: int, chroma: bool) -> np.ndarray:
    dc_dec = _DC_CHROMA_DEC if chroma else _DC_LUMA_DEC
    ac_dec = _AC_CHROMA_DEC if chroma else _AC_LUMA_DEC
    out = np.zeros((n_blocks, 64), dtype=np.int64)
    pred = 0
    for bi in range(n_blocks):
        size = _read_symbol(br, dc_dec)
        pred += _decode_value(br.read(size), size)
        out[bi, 0] = pred
        k = 1
        while k < 64:
            sym = _read_symbol(br, ac_dec)
            if sym == _EOB:
                break
            if sym == _ZRL:
                k += 16
                continue
            run = sym >> 4
            size = sym & 0x0F
            k += run
            if k >= 64:
                raise DecodeError(
                    "AC run past end of block", byte_offset=br.byte_offset
                )
            out[bi, k] = _decode_value(br.read(size), size)
            k += 1
    blocks = np.zeros((n_blocks, 64), dtype=np.int64)
    blocks[:, _ZIGZAG_POS] = out
    return blocks.reshape(n_blocks, 8, 8)


def encode_dct(img: Image, multiplier: float, subsample: bool = False) -> DctStream:
    channels = _analyze(img, multiplier, subsample)
    bw = BitWriter()
    for (qblocks, _table, _shape), chroma in zip(
        channels, [False, True, True][: len(channels)]
    ):
        _encode_channel(bw, qblocks, chroma)
    return DctStream(
        width=img.width,
        height=img.height,
        channels=img.channels,
        subsample=subsample and img.channels == 3,
        multiplier=float(multiplier),
        payload=bw.getvalue(),
    )


def decode_dct(stream: DctStream) -> Image:
    shapes = []
    if stream.channels == 3:
        shapes.append((stream.height, stream.width))
        if stream.subsample:
            ch = (stream.height + 1) // 2
            cw = (stream.width + 1) // 2
        else:
            ch, cw = stream.height, stream.width
        shapes += [(ch, cw), (ch, cw)]
    else:
        shapes.append((stream.height, stream.width))
    br = BitReader(stream.payload)
    channels = []
    for (ph, pw), chroma in zip(shapes, [False, True, True][: len(shapes)]):
        n_blocks = ((ph + 7) // 8) * ((pw + 7) // 8)
        qblocks = _decode_channel(br, n_blocks, chroma)
        base = BASE_CHROMA_TABLE if chroma else BASE_LUMA_TABLE
        channels.append((qblocks, QuantTable(base, stream.multiplier), (ph, pw)))
    return _synthesize(
        channels, stream.width, stream.height, stream.subsample, stream.channels
    )


def dct_quantize_only(img: Image, multiplier: float, subsample: bool = False) -> Image:
    """Transform-quantize-dequantize-inverse with no entropy coding.

    Bit-identical to decode_dct(encode_dct(img, multiplier)): both run the
    same analysis and synthesis paths, and the entropy stage in between is
    lossless on the quantized integers.
    """
    channels = _analyze(img, multiplier, subsample)
    return _synthesize(
        channels, img.width, img.height, subsample and img.channels == 3, img.channels
    )
