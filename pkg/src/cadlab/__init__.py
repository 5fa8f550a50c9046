"""Compression as an adversarial-example defense, at desk scale.

Two lossy codecs (a block-DCT one and an embedded wavelet one), gradient
sign attacks against a small built-in classifier, PSNR-targeted rate
control, and a harness that measures how much classification accuracy
compression restores.
"""

__version__ = "0.1.0"

from .errors import (
    CadlabError,
    ChannelError,
    DecodeError,
    FormatError,
    InfeasibleTargetError,
    ParameterError,
    ShapeError,
    SizeError,
)
from .imagecore import Image, blockiness, mse, psnr, read_netpbm, write_netpbm

__all__ = [
    "CadlabError",
    "ChannelError",
    "DecodeError",
    "FormatError",
    "Image",
    "InfeasibleTargetError",
    "ParameterError",
    "ShapeError",
    "SizeError",
    "blockiness",
    "mse",
    "psnr",
    "read_netpbm",
    "write_netpbm",
]
