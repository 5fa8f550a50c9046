"""JPEG2000-style wavelet codec with an embedded, truncatable bitstream.

Multi-level lifting DWT (reversible 5/3 on integers, irreversible CDF 9/7),
dead-zone scalar quantization with per-subband steps derived from synthesis
energy weights, and a global embedded bitplane coder: bitplanes are emitted
from the most significant weighted plane downward, subbands ordered by
weight within each plane. Every coding pass ends byte-aligned and is a
valid truncation point; the stream records (offset, measured MSE) for each,
so quality targeting reduces to a table lookup.

The per-subband quantizer step folds the synthesis weight in
(step_b = base_step / sqrt(w_b)), which makes bit p of every subband carry
the same reconstruction-energy significance (base_step * 2**p)^2 and lets a
single global plane counter drive the schedule.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bitio import BitReader, BitWriter
from .errors import (
    DecodeError,
    FormatError,
    ParameterError,
    SizeError,
)
from .imagecore import (
    Image,
    clamp255,
    mse as image_mse,
    pad_to_multiple,
    rgb_to_ycbcr,
    round_half_away,
    ycbcr_to_rgb,
)

MAGIC = b"WVX1"
_HEADER = struct.Struct("<4sIIIIBBBdI")
_TRUNC_ENTRY = struct.Struct("<Qd")
_PAYLOAD_LEN = struct.Struct("<Q")

FILTER_53 = 0
FILTER_97 = 1

DEFAULT_LEVELS = 5
DEFAULT_BASE_STEP = 1.0 / 64.0

_RUN_K_MAX = 16

# Large subbands are swept in fixed-size segments, each ending byte-aligned
# with its own truncation point; keeps successive points close in PSNR so
# rate control can hit targets tightly.
_SCHED_TAU = 0.015  # per-pass share of the remaining distortion estimate

# CDF 9/7 lifting constants (JPEG2000 Part 1 irreversible filter).
_ALPHA = -1.586134342
_BETA = -0.052980118
_GAMMA = 0.882911076
_DELTA = 0.443506852
_KSCALE = 1.230174105


def _split(x: np.ndarray):
    return x[..., 0::2], x[..., 1::2]


def _interleave(even: np.ndarray, odd: np.ndarray) -> np.ndarray:
    n = even.shape[-1] + odd.shape[-1]
    out = np.empty(even.shape[:-1] + (n,), dtype=np.result_type(even, odd))
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def _predict_neighbors(even: np.ndarray, n_detail: int, n_total: int):
    """(left, right) even neighbors of each odd sample, symmetric extension."""
    left = even[..., :n_detail]
    if n_total % 2 == 0:
        right = np.concatenate([even[..., 1:], even[..., -1:]], axis=-1)
    else:
        right = even[..., 1:]
    return left, right


def _update_neighbors(detail: np.ndarray, n_approx: int, n_total: int):
    """(left, right) detail neighbors of each even sample, symmetric extension."""
    if n_total % 2 == 1:
        right = np.concatenate([detail, detail[..., -1:]], axis=-1)
    else:
        right = detail
    left = np.concatenate([detail[..., :1], right[..., :-1]], axis=-1)
    return left, right


def _check_length(n: int):
    if n < 2:
        raise SizeError(f"signal length must be >= 2, got {n}")


def dwt53_1d(signal: np.ndarray):
    """Reversible 5/3 lifting along the last axis; integer in, integer out."""
    x = np.asarray(signal)
    n = x.shape[-1]
    _check_length(n)
    even, odd = _split(x)
    nd = odd.shape[-1]
    pl, pr = _predict_neighbors(even, nd, n)
    d = odd - (pl + pr) // 2
    ul, ur = _update_neighbors(d, even.shape[-1], n)
    s = even + (ul + ur + 2) // 4
    return s, d


def idwt53_1d(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    s = np.asarray(approx)
    d = np.asarray(detail)
    n = s.shape[-1] + d.shape[-1]
    _check_length(n)
    ul, ur = _update_neighbors(d, s.shape[-1], n)
    even = s - (ul + ur + 2) // 4
    pl, pr = _predict_neighbors(even, d.shape[-1], n)
    odd = d + (pl + pr) // 2
    return _interleave(even, odd)


def dwt97_1d(signal: np.ndarray):
    """CDF 9/7 lifting along the last axis; approx scaled so DC gain is 1."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[-1]
    _check_length(n)
    even, odd = _split(x)
    nd = odd.shape[-1]
    ne = even.shape[-1]
    pl, pr = _predict_neighbors(even, nd, n)
    d = odd + _ALPHA * (pl + pr)
    ul, ur = _update_neighbors(d, ne, n)
    s = even + _BETA * (ul + ur)
    pl, pr = _predict_neighbors(s, nd, n)
    d = d + _GAMMA * (pl + pr)
    ul, ur = _update_neighbors(d, ne, n)
    s = s + _DELTA * (ul + ur)
    return s / _KSCALE, d * _KSCALE


def idwt97_1d(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    s = np.asarray(approx, dtype=np.float64) * _KSCALE
    d = np.asarray(detail, dtype=np.float64) / _KSCALE
    n = s.shape[-1] + d.shape[-1]
    _check_length(n)
    ne = s.shape[-1]
    nd = d.shape[-1]
    ul, ur = _update_neighbors(d, ne, n)
    s = s - _DELTA * (ul + ur)
    pl, pr = _predict_neighbors(s, nd, n)
    d = d - _GAMMA * (pl + pr)
    ul, ur = _update_neighbors(d, ne, n)
    even = s - _BETA * (ul + ur)
    pl, pr = _predict_neighbors(even, nd, n)
    odd = d - _ALPHA * (pl + pr)
    return _interleave(even, odd)


def _dwt_1d(x, filter_id):
    return dwt53_1d(x) if filter_id == FILTER_53 else dwt97_1d(x)


def _idwt_1d(s, d, filter_id):
    return idwt53_1d(s, d) if filter_id == FILTER_53 else idwt97_1d(s, d)


def _dwt2_level(plane: np.ndarray, filter_id: int):
    """One 2-D analysis level; returns (LL, HL, LH, HH).

    HL holds horizontal detail (row-transform highpass), LH vertical detail.
    """
    a, h = _dwt_1d(plane, filter_id)
    ll, lh = _dwt_1d(a.T, filter_id)
    hl, hh = _dwt_1d(h.T, filter_id)
    return ll.T, hl.T, lh.T, hh.T


def _idwt2_level(ll, hl, lh, hh, filter_id) -> np.ndarray:
    a = _idwt_1d(ll.T, lh.T, filter_id).T
    h = _idwt_1d(hl.T, hh.T, filter_id).T
    return _idwt_1d(a, h, filter_id)


@dataclass
class SubbandPyramid:
    """Mallat pyramid of one plane: detail triples per level plus final LL.

    ``details[i]`` holds (HL, LH, HH) for level i+1 (level 1 is finest).
    """

    levels: int
    ll: np.ndarray
    details: list

    def subband_count(self) -> int:
        return 3 * self.levels + 1

    def coefficient_count(self) -> int:
        return self.ll.size + sum(b.size for t in self.details for b in t)


def max_levels(width: int, height: int) -> int:
    return int(np.floor(np.log2(min(width, height))))


def decompose(plane: np.ndarray, levels: int, filter_id: int) -> SubbandPyramid:
    """Mallat recursion on a single 2-D plane (rows then columns per level)."""
    p = np.asarray(plane)
    h, w = p.shape
    if not 1 <= levels <= max_levels(w, h):
        raise ParameterError(
            f"levels must be in [1, {max_levels(w, h)}] for {w}x{h}, got {levels}"
        )
    if filter_id == FILTER_53:
        p = p.astype(np.int64)
    details = []
    current = p
    for _ in range(levels):
        ll, hl, lh, hh = _dwt2_level(current, filter_id)
        details.append((hl, lh, hh))
        current = ll
    return SubbandPyramid(levels=levels, ll=current, details=details)


def reconstruct(pyramid: SubbandPyramid, filter_id: int) -> np.ndarray:
    current = pyramid.ll
    for hl, lh, hh in reversed(pyramid.details):
        current = _idwt2_level(current, hl, lh, hh, filter_id)
    return current


# ---------------------------------------------------------------------------
# Synthesis energy weights, measured once per (filter, level, orientation)
# as the squared L2 norm of a synthesis basis function away from boundaries.

_gain_cache: dict = {}


def _gain_1d(filter_id: int, level: int, channel: str) -> float:
    key = (filter_id, level, channel)
    if key not in _gain_cache:
        if filter_id == FILTER_53:
            _gain_cache[key] = 1.0  # unit weights for the reversible path
        else:
            n = 1 << (level + 5)
            m = n >> level
            approx = np.zeros(m)
            details = [np.zeros(n >> lv) for lv in range(level, 0, -1)]
            if channel == "L":
                approx[m // 2] = 1.0
            else:
                details[0][m // 2] = 1.0
            x = approx
            for d in details:
                x = idwt97_1d(x, d)
            _gain_cache[key] = float(np.sum(x * x))
    return _gain_cache[key]


def subband_weight(filter_id: int, level: int, kind: str) -> float:
    """Synthesis energy weight w_b; product of the two 1-D gains."""
    gl = _gain_1d(filter_id, level, "L")
    gh = _gain_1d(filter_id, level, "H")
    return {
        "LL": gl * gl,
        "HL": gh * gl,  # horizontal detail: highpass rows, lowpass columns
        "LH": gl * gh,
        "HH": gh * gh,
    }[kind]


# ---------------------------------------------------------------------------
# Embedded stream container.


@dataclass(frozen=True)
class EmbeddedStream:
    width: int
    height: int
    padded_width: int
    padded_height: int
    channels: int
    filter_id: int
    levels: int
    base_step: float
    truncation: tuple  # ((byte_offset, mse), ...) strictly increasing offsets
    payload: bytes

    def __post_init__(self):
        offs = [t[0] for t in self.truncation]
        if any(b <= a for a, b in zip(offs, offs[1:])):
            raise FormatError("truncation offsets must be strictly increasing")
        mses = [t[1] for t in self.truncation]
        if any(b > a for a, b in zip(mses, mses[1:])):
            raise FormatError("truncation MSEs must be non-increasing")

    @property
    def final_offset(self) -> int:
        return self.truncation[-1][0]

    def to_bytes(self) -> bytes:
        parts = [
            _HEADER.pack(
                MAGIC,
                self.width,
                self.height,
                self.padded_width,
                self.padded_height,
                self.channels,
                self.filter_id,
                self.levels,
                self.base_step,
                len(self.truncation),
            )
        ]
        for off, err in self.truncation:
            parts.append(_TRUNC_ENTRY.pack(off, err))
        parts.append(_PAYLOAD_LEN.pack(len(self.payload)))
        parts.append(self.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddedStream":
        if len(data) < _HEADER.size:
            raise FormatError(f"stream too short for WVX1 header: {len(data)} bytes")
        magic, w, h, pw, ph, ch, filt, levels, step, tcount = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if ch not in (1, 3) or filt not in (FILTER_53, FILTER_97):
            raise FormatError("bad channel count or filter id")
        pos = _HEADER.size
        need = tcount * _TRUNC_ENTRY.size + _PAYLOAD_LEN.size
        if len(data) < pos + need:
            raise FormatError("stream truncated inside truncation table")
        trunc = []
        for _ in range(tcount):
            trunc.append(_TRUNC_ENTRY.unpack_from(data, pos))
            pos += _TRUNC_ENTRY.size
        (plen,) = _PAYLOAD_LEN.unpack_from(data, pos)
        pos += _PAYLOAD_LEN.size
        payload = data[pos:]
        if len(payload) != plen:
            raise FormatError(
                f"payload length mismatch: header says {plen}, have {len(payload)}"
            )
        return cls(w, h, pw, ph, ch, filt, levels, step, tuple(trunc), payload)

    def truncated(self, at_offset: int) -> "EmbeddedStream":
        """A prefix stream ending at one of the recorded truncation points."""
        if at_offset not in {t[0] for t in self.truncation}:
            raise ParameterError(f"{at_offset} is not a recorded truncation offset")
        keep = tuple(t for t in self.truncation if t[0] <= at_offset)
        return EmbeddedStream(
            self.width,
            self.height,
            self.padded_width,
            self.padded_height,
            self.channels,
            self.filter_id,
            self.levels,
            self.base_step,
            keep,
            self.payload[:at_offset],
        )


# ---------------------------------------------------------------------------
# Subband bookkeeping shared by encoder and decoder.


class _Band:
    """Flattened view of one subband plus embedded-coding state."""

    __slots__ = (
        "channel", "level", "kind", "shape", "weight", "delta",
        "mag", "sign", "significant", "partial", "plane_coef", "_deq_cache",
        "newly", "insig_prev",
    )

    def __init__(self, channel, level, kind, shape, weight, delta):
        self.channel = channel
        self.level = level
        self.kind = kind
        self.shape = shape
        self.weight = weight
        self.delta = delta
        n = shape[0] * shape[1]
        self.mag = np.zeros(n, dtype=np.int64)
        self.sign = np.zeros(n, dtype=np.int64)
        self.significant = np.zeros(n, dtype=bool)
        self.partial = np.zeros(n, dtype=np.int64)
        self.plane_coef = np.zeros(n, dtype=np.int64)  # lowest plane coded
        self._deq_cache = None
        self.newly = 0  # coefficients turned significant in the current plane
        self.insig_prev = None  # insignificant count at the plane's start

    def invalidate(self):
        self._deq_cache = None

    def dequantized(self, exact_reversible: bool) -> np.ndarray:
        """Current reconstruction values from the planes coded so far."""
        if self._deq_cache is None:
            scale = self.delta * np.exp2(self.plane_coef)
            mid = self.sign * (self.partial + 0.5) * scale
            if exact_reversible:
                # fully decoded reversible coefficients are exact integers
                mid = np.where(scale == 1.0, self.sign * self.partial, mid)
            self._deq_cache = np.where(self.significant, mid, 0.0).reshape(
                self.shape
            )
        return self._deq_cache


def _band_layout(pw, ph, channels, levels, filter_id, base_step):
    """Deterministic subband list shared by encoder and decoder.

    Coding order: weight descending, ties broken by (channel, coarser level
    first, LL/HL/LH/HH).
    """
    kind_rank = {"LL": 0, "HL": 1, "LH": 2, "HH": 3}
    bands = []
    for ci in range(channels):
        w, h = pw, ph
        shapes = []
        for lv in range(1, levels + 1):
            dw, dh = w // 2, h // 2
            shapes.append((lv, (h - dh, w - dw), (dh, w - dw), (h - dh, dw), (dh, dw)))
            w, h = w - dw, h - dh
        # shapes[-1][1] is the LL shape at the final level
        bands.append(_make_band(ci, levels, "LL", shapes[-1][1], filter_id, base_step))
        for lv, ll_shape, lh_shape, hl_shape, hh_shape in reversed(shapes):
            bands.append(_make_band(ci, lv, "HL", hl_shape, filter_id, base_step))
            bands.append(_make_band(ci, lv, "LH", lh_shape, filter_id, base_step))
            bands.append(_make_band(ci, lv, "HH", hh_shape, filter_id, base_step))
    bands.sort(
        key=lambda b: (-b.weight, b.channel, -b.level, kind_rank[b.kind])
    )
    return bands


def _make_band(channel, level, kind, shape, filter_id, base_step):
    w_b = subband_weight(filter_id, level, kind)
    delta = base_step / np.sqrt(w_b)
    return _Band(channel, level, kind, (shape[0], shape[1]), w_b, delta)


def _reconstruct_raw(bands, width, height, channels, levels, filter_id):
    """Inverse DWT of the bands' current dequantized values -> clamped array."""
    exact = filter_id == FILTER_53
    per_channel = {}
    for b in bands:
        per_channel.setdefault(b.channel, {})[(b.level, b.kind)] = b.dequantized(exact)
    planes = []
    for ci in range(channels):
        sb = per_channel[ci]
        details = [
            (sb[(lv, "HL")], sb[(lv, "LH")], sb[(lv, "HH")])
            for lv in range(1, levels + 1)
        ]
        pyr = SubbandPyramid(levels=levels, ll=sb[(levels, "LL")], details=details)
        planes.append(np.asarray(reconstruct(pyr, filter_id), dtype=np.float64))
    stacked = clamp255(np.stack(planes)[:, :height, :width])
    if channels == 3:
        ycc = stacked.copy()
        ycc[1] -= 128.0
        ycc[2] -= 128.0
        from .imagecore import _YCC2RGB

        stacked = clamp255(np.tensordot(_YCC2RGB, ycc, axes=(1, 0)))
    return stacked


def _reconstruct_image(bands, pw, ph, width, height, channels, levels, filter_id):
    return Image(_reconstruct_raw(bands, width, height, channels, levels, filter_id))


def _prepare_planes(img: Image):
    if img.channels == 3:
        return rgb_to_ycbcr(img).planes
    return img.planes


def _fill_bands_from_image(bands, img: Image, levels, filter_id, pad):
    """Quantize the image's subband coefficients into the bands' mag/sign."""
    planes = _prepare_planes(pad)
    pyramids = {}
    for ci in range(pad.channels):
        p = planes[ci]
        if filter_id == FILTER_53:
            p = round_half_away(p).astype(np.int64)
        pyramids[ci] = decompose(p, levels, filter_id)
    for b in bands:
        pyr = pyramids[b.channel]
        if b.kind == "LL":
            coeffs = pyr.ll
        else:
            hl, lh, hh = pyr.details[b.level - 1]
            coeffs = {"HL": hl, "LH": lh, "HH": hh}[b.kind]
        if coeffs.shape != b.shape:
            raise ParameterError(
                f"internal subband shape mismatch {coeffs.shape} vs {b.shape}"
            )
        c = np.asarray(coeffs, dtype=np.float64).ravel()
        b.mag = np.floor(np.abs(c) / b.delta).astype(np.int64)
        b.sign = np.where(c < 0, -1, 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Adaptive run-length significance coding (MELCODE-style, per pass).


def _plane_passes(bands, plane):
    """Yield (band, lo, hi) pass bounds for one bit plane, one at a time.

    Segments are sized so the expected distortion drop of each pass stays
    near a fixed fraction of the total drop expected over this plane.
    Expected drops come from per-band significance rates: the plane budget
    uses each band's rate observed at the previous plane projected a
    few-fold (rates grow fast as planes descend), while segment sizing
    inside a band blends a conservative prior with the counts observed so
    far in this plane, so a wrong prior only mis-sizes one segment.  Every
    input is state the decoder mirrors, so no side information is coded.

    Costs are in units of (step * 2^plane)^2 per coefficient: a refinement
    halves its cell (expected drop 3/12), a newly significant coefficient
    replaces c^2 with a fresh midpoint cell (expected drop about 2.2).
    """
    size_prior = []
    total = 0.0
    for b in bands:
        n_sig = int(np.count_nonzero(b.significant))
        if n_sig == 0:
            proj = 0.02  # nothing seen yet; most likely still nothing
        elif b.insig_prev:
            proj = min(1.0, 4.0 * max(b.newly / b.insig_prev, 0.02))
        else:
            proj = 1.0
        # a virgin band may light up any plane: size its segments
        # pessimistically, but keep the realistic rate in the budget
        size_prior.append(proj if n_sig else max(proj, 0.3))
        total += 0.25 * n_sig + 2.2 * proj * (b.mag.size - n_sig)
        b.newly = 0
        b.insig_prev = b.mag.size - n_sig
    budget = max(_SCHED_TAU * total, 1e-12)
    for i, b in enumerate(bands):
        lo = 0
        while lo < b.mag.size:
            r = (b.newly + 8.0 * size_prior[i]) / (lo + 8.0)
            cost = np.where(b.significant[lo:], 0.25, 2.2 * r)
            cum = np.cumsum(cost)
            hi = lo + int(np.searchsorted(cum, budget)) + 1
            hi = min(hi, b.mag.size)
            yield b, lo, hi
            lo = hi


def _encode_pass(bw: BitWriter, band: _Band, plane: int, lo: int, hi: int):
    bits = (band.mag[lo:hi] >> plane) & 1
    sig = band.significant[lo:hi]
    # refinement bits for coefficients already significant, raster order
    bw.write_bit_array(bits[sig])
    band.partial[lo:hi][sig] = (band.partial[lo:hi][sig] << 1) | bits[sig]
    # significance sweep over the remaining coefficients
    insig_local = np.nonzero(~sig)[0]
    newly = np.nonzero(bits[insig_local] == 1)[0]  # positions in the sweep
    k = 0
    pos = 0
    for p in newly:
        run = int(p) - pos
        while run >= (1 << k):
            bw.write(1, 1)
            run -= 1 << k
            k = min(k + 1, _RUN_K_MAX)
        bw.write(0, 1)
        bw.write(run, k)
        idx = lo + int(insig_local[p])
        bw.write(1 if band.sign[idx] < 0 else 0, 1)
        band.significant[idx] = True
        band.partial[idx] = 1
        k = max(k - 1, 0)
        pos = int(p) + 1
    run = insig_local.size - pos
    while run > 0:
        bw.write(1, 1)
        run -= 1 << k
        k = min(k + 1, _RUN_K_MAX)
    band.newly += newly.size
    band.plane_coef[lo:hi] = plane
    band.invalidate()
    bw.align_to_byte()


def _decode_pass(br: BitReader, band: _Band, plane: int, lo: int, hi: int):
    sig = band.significant[lo:hi]
    n_sig = int(np.count_nonzero(sig))
    bits = br.read_bit_array(n_sig).astype(np.int64)
    band.partial[lo:hi][sig] = (band.partial[lo:hi][sig] << 1) | bits
    insig_idx = lo + np.nonzero(~sig)[0]
    n = insig_idx.size
    k = 0
    pos = 0
    while pos < n:
        if br.read_bit():
            pos += 1 << k
            k = min(k + 1, _RUN_K_MAX)
        else:
            pos += br.read(k)
            if pos >= n:
                raise DecodeError(
                    "significance run past end of subband",
                    byte_offset=br.byte_offset,
                )
            idx = insig_idx[pos]
            band.sign[idx] = -1 if br.read_bit() else 1
            band.significant[idx] = True
            band.partial[idx] = 1
            pos += 1
            k = max(k - 1, 0)
            band.newly += 1
    band.plane_coef[lo:hi] = plane
    band.invalidate()
    br.align_to_byte()


def encode_embedded(
    img: Image,
    levels: int | None = None,
    filter_id: int = FILTER_97,
    base_step: float = DEFAULT_BASE_STEP,
) -> EmbeddedStream:
    if base_step <= 0.0:
        raise ParameterError(f"base step must be > 0, got {base_step}")
    if levels is None:
        levels = min(DEFAULT_LEVELS, max_levels(img.width, img.height))
    if not 1 <= levels <= max_levels(img.width, img.height):
        raise ParameterError(
            f"levels must be in [1, {max_levels(img.width, img.height)}] "
            f"for {img.width}x{img.height}, got {levels}"
        )
    pad = pad_to_multiple(img, 1 << levels)
    pw, ph = pad.width, pad.height
    bands = _band_layout(pw, ph, img.channels, levels, filter_id, base_step)
    _fill_bands_from_image(bands, img, levels, filter_id, pad)

    pmax = 0
    top = max(int(b.mag.max()) for b in bands)
    if top > 0:
        pmax = top.bit_length() - 1

    bw = BitWriter()
    bw.write(pmax, 8)
    truncation = []
    prev_mse = np.inf
    for plane in range(pmax, -1, -1):
        for band, lo, hi in _plane_passes(bands, plane):
                _encode_pass(bw, band, plane, lo, hi)
                offset = bw.tell_bytes()
                rec = _reconstruct_raw(
                    bands, img.width, img.height, img.channels, levels, filter_id
                )
                diff = rec - img.planes
                err = float(np.mean(diff * diff))
                if err <= prev_mse:
                    truncation.append((offset, err))
                    prev_mse = err
    return EmbeddedStream(
        width=img.width,
        height=img.height,
        padded_width=pw,
        padded_height=ph,
        channels=img.channels,
        filter_id=filter_id,
        levels=levels,
        base_step=float(base_step),
        truncation=tuple(truncation),
        payload=bw.getvalue(),
    )


def decode_embedded(stream: EmbeddedStream, at_offset: int | None = None) -> Image:
    """Decode passes up to ``at_offset`` (default: the whole payload)."""
    if at_offset is None:
        at_offset = len(stream.payload)
    elif at_offset not in {t[0] for t in stream.truncation}:
        raise ParameterError(f"{at_offset} is not a recorded truncation offset")
    if at_offset > len(stream.payload):
        raise DecodeError(
            "truncation offset beyond payload", byte_offset=len(stream.payload)
        )
    bands = _band_layout(
        stream.padded_width,
        stream.padded_height,
        stream.channels,
        stream.levels,
        stream.filter_id,
        stream.base_step,
    )
    br = BitReader(stream.payload)
    pmax = br.read(8)
    done = False
    for plane in range(pmax, -1, -1):
        for band, lo, hi in _plane_passes(bands, plane):
            if br.tell_bytes() >= at_offset:
                done = True
                break
            _decode_pass(br, band, plane, lo, hi)
        if done:
            break
    return _reconstruct_image(
        bands,
        stream.padded_width,
        stream.padded_height,
        stream.width,
        stream.height,
        stream.channels,
        stream.levels,
        stream.filter_id,
    )


def trace_decode_mse(stream: EmbeddedStream, reference: Image) -> list:
    """Re-measure the truncation table in one incremental decode.

    Returns [(offset, mse), ...] for every recorded offset, with the MSE
    computed from the decoder's own state against ``reference``. Decoding
    once and sampling at each offset costs the same as a single full
    decode, where separate per-offset decodes would be quadratic.
    """
    if reference.width != stream.width or reference.height != stream.height:
        raise ParameterError("reference dimensions do not match the stream")
    wanted = {t[0] for t in stream.truncation}
    bands = _band_layout(
        stream.padded_width,
        stream.padded_height,
        stream.channels,
        stream.levels,
        stream.filter_id,
        stream.base_step,
    )
    br = BitReader(stream.payload)
    pmax = br.read(8)
    out = []
    for plane in range(pmax, -1, -1):
        for band, lo, hi in _plane_passes(bands, plane):
            if br.tell_bytes() >= stream.final_offset:
                return out
            _decode_pass(br, band, plane, lo, hi)
            offset = br.tell_bytes()
            if offset in wanted:
                rec = _reconstruct_raw(
                    bands,
                    stream.width,
                    stream.height,
                    stream.channels,
                    stream.levels,
                    stream.filter_id,
                )
                diff = rec - reference.planes
                out.append((offset, float(np.mean(diff * diff))))
    return out


def wavelet_quantize_only(
    img: Image,
    levels: int | None = None,
    filter_id: int = FILTER_97,
    base_step: float = DEFAULT_BASE_STEP,
) -> Image:
    """Decompose, dead-zone quantize, midpoint dequantize, reconstruct.

    Equals the full-offset embedded encode/decode path within float noise:
    a fully decoded band has plane_cur 0, which is exactly the midpoint
    dequantization applied here.
    """
    if base_step <= 0.0:
        raise ParameterError(f"base step must be > 0, got {base_step}")
    if levels is None:
        levels = min(DEFAULT_LEVELS, max_levels(img.width, img.height))
    pad = pad_to_multiple(img, 1 << levels)
    pw, ph = pad.width, pad.height
    bands = _band_layout(pw, ph, img.channels, levels, filter_id, base_step)
    _fill_bands_from_image(bands, img, levels, filter_id, pad)
    for b in bands:
        b.significant = b.mag > 0
        b.partial = b.mag.copy()
        b.invalidate()
    return _reconstruct_image(
        bands, pw, ph, img.width, img.height, img.channels, levels, filter_id
    )
