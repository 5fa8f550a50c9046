"""PSNR-targeted compression and the maximum-compression mode.

The DCT path bisects the continuous quantization multiplier until the
decoded PSNR lands within tolerance of the target. The wavelet path
encodes once and picks a truncation point from the embedded stream's
distortion table, so targeting costs no extra codec evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dct_codec, wavelet_codec
from .errors import InfeasibleTargetError, ParameterError
from .imagecore import Image, psnr, psnr_from_mse

CODEC_DCT = "dct"
CODEC_WAVELET = "wavelet"

#: exact_hit window for the wavelet path; truncation points are discrete,
#: so the DCT path's 0.01 dB contract is unattainable there.
WAVELET_TOLERANCE_DB = 0.25

MAX_BISECTION_STEPS = 60


@dataclass(frozen=True)
class RateTarget:
    target_db: float
    tolerance_db: float = 0.01
    reference: Image | None = None  # PSNR baseline; None = the input image

    def __post_init__(self):
        if not np.isfinite(self.target_db):
            raise ParameterError("target must be finite")
        if self.tolerance_db <= 0:
            raise ParameterError("tolerance must be > 0")


@dataclass(frozen=True)
class CompressionResult:
    codec: str
    stream: bytes
    achieved_db: float
    byte_size: int
    exact_hit: bool
    settings: dict = field(default_factory=dict)

    def decoded(self) -> Image:
        if self.codec == CODEC_DCT:
            return dct_codec.decode_dct(dct_codec.DctStream.from_bytes(self.stream))
        return wavelet_codec.decode_embedded(
            wavelet_codec.EmbeddedStream.from_bytes(self.stream)
        )


def _reference(img: Image, target: RateTarget) -> Image:
    return target.reference if target.reference is not None else img


def compress_to_psnr_dct(
    img: Image, target: RateTarget, subsample: bool = False
) -> CompressionResult:
    """Bisect the quantization multiplier until PSNR hits the target.

    Distortion is monotone in the multiplier, so a bracket between the
    extreme multipliers guarantees convergence. Iterations use the
    quantize-only path, which is sample-identical to decode(encode(...))
    but skips entropy coding; the returned stream is a real encode and
    its PSNR is re-measured from an independent decode.
    """
    ref = _reference(img, target)

    def probe(m):
        return psnr(ref, dct_codec.dct_quantize_only(img, m, subsample))

    lo_m, hi_m = dct_codec.MULTIPLIER_MIN, dct_codec.MULTIPLIER_MAX
    best_db = probe(lo_m)  # highest fidelity the codec can reach
    worst_db = probe(hi_m)
    if not worst_db <= target.target_db <= best_db:
        raise InfeasibleTargetError(target.target_db, worst_db, best_db)
    best = (lo_m, best_db)
    if abs(worst_db - target.target_db) < abs(best_db - target.target_db):
        best = (hi_m, worst_db)
    steps = 2
    while steps < MAX_BISECTION_STEPS and abs(best[1] - target.target_db) > target.tolerance_db:
        mid = 0.5 * (lo_m + hi_m)
        db = probe(mid)
        steps += 1
        if abs(db - target.target_db) < abs(best[1] - target.target_db):
            best = (mid, db)
        if db > target.target_db:
            lo_m = mid  # too faithful: quantize harder
        else:
            hi_m = mid
    stream = dct_codec.encode_dct(img, best[0], subsample)
    achieved = psnr(ref, dct_codec.decode_dct(stream))
    raw = stream.to_bytes()
    return CompressionResult(
        codec=CODEC_DCT,
        stream=raw,
        achieved_db=achieved,
        byte_size=len(raw),
        exact_hit=abs(achieved - target.target_db) <= target.tolerance_db,
        settings={"multiplier": best[0], "subsample": subsample},
    )


def compress_to_psnr_wavelet(
    img: Image,
    target: RateTarget,
    stream: wavelet_codec.EmbeddedStream | None = None,
) -> CompressionResult:
    """Earliest truncation point whose PSNR reaches the target.

    Always overshoots (achieved >= target): a defense is never weaker
    than requested. ``stream`` lets callers reuse one encode of the same
    image across several targets.
    """
    ref = _reference(img, target)
    if stream is None:
        stream = wavelet_codec.encode_embedded(img)
    table_db = [psnr_from_mse(m) for _, m in stream.truncation]
    pick = None
    for (off, _), db in zip(stream.truncation, table_db):
        if db >= target.target_db:
            pick = off
            break
    if pick is None:
        raise InfeasibleTargetError(
            target.target_db, min(table_db), max(table_db)
        )
    cut = stream.truncated(at_offset=pick)
    achieved = psnr(ref, wavelet_codec.decode_embedded(cut))
    raw = cut.to_bytes()
    return CompressionResult(
        codec=CODEC_WAVELET,
        stream=raw,
        achieved_db=achieved,
        byte_size=len(raw),
        exact_hit=achieved - target.target_db <= WAVELET_TOLERANCE_DB,
        settings={"offset": pick, "base_step": stream.base_step},
    )


def compress_max(
    img: Image,
    codec: str,
    reference: Image | None = None,
    stream: wavelet_codec.EmbeddedStream | None = None,
) -> CompressionResult:
    """Smallest stream either codec can produce; PSNR reported untargeted."""
    ref = reference if reference is not None else img
    if codec == CODEC_DCT:
        st = dct_codec.encode_dct(img, dct_codec.MULTIPLIER_MAX)
        achieved = psnr(ref, dct_codec.decode_dct(st))
        raw = st.to_bytes()
        return CompressionResult(
            codec=codec, stream=raw, achieved_db=achieved,
            byte_size=len(raw), exact_hit=False,
            settings={"multiplier": dct_codec.MULTIPLIER_MAX},
        )
    if codec == CODEC_WAVELET:
        if stream is None:
            stream = wavelet_codec.encode_embedded(img)
        first = stream.truncation[0][0]
        cut = stream.truncated(at_offset=first)
        achieved = psnr(ref, wavelet_codec.decode_embedded(cut))
        raw = cut.to_bytes()
        return CompressionResult(
            codec=codec, stream=raw, achieved_db=achieved,
            byte_size=len(raw), exact_hit=False,
            settings={"offset": first, "base_step": stream.base_step},
        )
    raise ParameterError(f"unknown codec {codec!r}")
