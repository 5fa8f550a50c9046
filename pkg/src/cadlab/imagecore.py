"""Image representation, color transform, padding, PSNR and blockiness.

Images are stored as float64 planes in [0, 255] with 8-bit semantics:
values are only quantized to integers at file I/O boundaries and right
before classification, never inside codec chains.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import ChannelError, FormatError, ShapeError, SizeError

#: PSNR of a lossless reconstruction (zero MSE). Compares greater than
#: every finite PSNR value.
LOSSLESS = math.inf

_PEAK = 255.0


@dataclass(frozen=True)
class Image:
    """A planar raster: ``planes`` has shape (channels, height, width).

    channels is 1 (gray) or 3 (RGB or YCbCr); all samples lie in [0, 255].
    """

    planes: np.ndarray

    def __post_init__(self):
        p = np.array(self.planes, dtype=np.float64)  # defensive copy
        if p.ndim == 2:
            p = p[np.newaxis, :, :]
        if p.ndim != 3:
            raise ShapeError(f"planes must be 2-D or 3-D, got ndim={p.ndim}")
        if p.shape[0] not in (1, 3):
            raise ChannelError(f"channels must be 1 or 3, got {p.shape[0]}")
        if p.size == 0:
            raise SizeError("empty image")
        if not np.isfinite(p).all():
            raise ShapeError("non-finite sample values")
        if p.min() < 0.0 or p.max() > 255.0:
            raise ShapeError(
                f"sample values outside [0, 255]: min={p.min()}, max={p.max()}"
            )
        p.setflags(write=False)
        object.__setattr__(self, "planes", p)

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def quantized(self) -> "Image":
        """Round samples to integers (banker-free round half away from zero)."""
        return Image(round_half_away(self.planes))


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round half away from zero, elementwise (bit-reproducible, unlike rint)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def clamp255(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 255.0)


def mse(reference: Image, test: Image) -> float:
    if reference.planes.shape != test.planes.shape:
        raise ShapeError(
            f"shape mismatch: {reference.planes.shape} vs {test.planes.shape}"
        )
    diff = reference.planes - test.planes
    return float(np.mean(diff * diff))


def psnr(reference: Image, test: Image) -> float:
    """10*log10(255^2 / MSE) over all samples of all channels.

    Returns LOSSLESS (inf) when the MSE is exactly zero.
    """
    err = mse(reference, test)
    if err == 0.0:
        return LOSSLESS
    return 10.0 * math.log10(_PEAK * _PEAK / err)


def psnr_from_mse(err: float) -> float:
    if err <= 0.0:
        return LOSSLESS
    return 10.0 * math.log10(_PEAK * _PEAK / err)


# Full-range BT.601 conversion matrices.
_RGB2YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCC2RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136286, -0.714136286],
        [1.0, 1.772, 0.0],
    ]
)


def rgb_to_ycbcr(img: Image) -> Image:
    if img.channels != 3:
        raise ChannelError("rgb_to_ycbcr needs a 3-channel image")
    out = np.tensordot(_RGB2YCC, img.planes, axes=(1, 0))
    out[1] += 128.0
    out[2] += 128.0
    return Image(clamp255(out))


def ycbcr_to_rgb(img: Image) -> Image:
    if img.channels != 3:
        raise ChannelError("ycbcr_to_rgb needs a 3-channel image")
    ycc = img.planes.copy()
    ycc[1] -= 128.0
    ycc[2] -= 128.0
    out = np.tensordot(_YCC2RGB, ycc, axes=(1, 0))
    return Image(clamp255(out))


def pad_to_multiple(img: Image, n: int) -> Image:
    """Pad right/bottom by edge replication so both dims are multiples of n."""
    if n < 1:
        raise SizeError(f"pad multiple must be >= 1, got {n}")
    h, w = img.height, img.width
    ph = (-h) % n
    pw = (-w) % n
    if ph == 0 and pw == 0:
        return img
    padded = np.pad(img.planes, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return Image(padded)


def crop(img: Image, width: int, height: int) -> Image:
    if width > img.width or height > img.height:
        raise SizeError(
            f"cannot crop {img.width}x{img.height} to {width}x{height}"
        )
    return Image(img.planes[:, :height, :width])


def luma(img: Image) -> np.ndarray:
    """Luma plane: channel 0 after BT.601 conversion for color input."""
    if img.channels == 3:
        return rgb_to_ycbcr(img).planes[0]
    return img.planes[0]


def blockiness(img: Image) -> float:
    """Mean absolute neighbor difference at 8-aligned block boundaries minus
    the same statistic away from boundaries, clamped below at 0.

    Zero in expectation for images free of an 8-grid structure; positive when
    discontinuities concentrate on the 8x8 block grid.
    """
    if img.width < 9 or img.height < 9:
        raise SizeError("blockiness needs at least a 9x9 image")
    y = luma(img)
    h_diff = np.abs(np.diff(y, axis=1))  # difference between columns x and x+1
    v_diff = np.abs(np.diff(y, axis=0))
    h_boundary = (np.arange(h_diff.shape[1]) % 8) == 7
    v_boundary = (np.arange(v_diff.shape[0]) % 8) == 7
    boundary = np.concatenate(
        [h_diff[:, h_boundary].ravel(), v_diff[v_boundary, :].ravel()]
    )
    interior = np.concatenate(
        [h_diff[:, ~h_boundary].ravel(), v_diff[~v_boundary, :].ravel()]
    )
    score = float(np.mean(boundary) - np.mean(interior))
    return max(score, 0.0)


# ---------------------------------------------------------------------------
# Netpbm I/O: binary PGM (P5) for gray, binary PPM (P6) for RGB, maxval 255.

def write_netpbm(img: Image, path: str | os.PathLike) -> None:
    q = round_half_away(img.planes).astype(np.uint8)
    if img.channels == 1:
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        body = q[0].tobytes()
    else:
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        body = np.moveaxis(q, 0, -1).tobytes()  # interleave to RGB RGB ...
    with open(path, "wb") as f:
        f.write(header + body)


def _read_pnm_header(data: bytes):
    # Header tokens may be separated by whitespace and '#' comments.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        m = re.match(rb"\d+", data[pos:])
        if not m:
            raise FormatError("malformed netpbm header")
        tokens.append(int(m.group(0)))
        pos += m.end()
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("malformed netpbm header")
    return tokens[0], tokens[1], tokens[2], pos + 1


def read_netpbm(path: str | os.PathLike) -> Image:
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported netpbm magic {magic!r}")
    width, height, maxval, pos = _read_pnm_header(data)
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = np.frombuffer(data, dtype=np.uint8, count=-1, offset=pos)
    if body.size < need:
        raise FormatError(
            f"truncated netpbm body: need {need} bytes, have {body.size}"
        )
    body = body[:need].astype(np.float64)
    if channels == 1:
        planes = body.reshape(1, height, width)
    else:
        planes = np.moveaxis(body.reshape(height, width, 3), -1, 0)
    return Image(planes)
