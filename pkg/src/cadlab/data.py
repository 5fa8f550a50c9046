"""Desk-scale datasets: a synthetic 10-class image set and a corpus of
natural-statistics images for codec calibration.

The class set is built from smooth, low-frequency shapes on purpose:
gradient-sign noise is broadband, so a codec that keeps the PSNR budget
spends it on exactly the high frequencies the attack lives in. Natural
corpus images are power-law-spectrum noise, the standard stand-in for
photographic second-order statistics.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .errors import FormatError, ParameterError
from .imagecore import Image, clamp255, read_netpbm, round_half_away, write_netpbm
from .model import Dataset

NUM_CLASSES = 10
IMAGE_SIZE = 28


def _bump(size, cy, cx, sigma):
    y = np.arange(size)[:, None]
    x = np.arange(size)[None, :]
    return np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * sigma * sigma))


def _class_layout(label: int, size: int):
    """Two blob centers per class, spread around a circle."""
    angle = 2.0 * np.pi * label / NUM_CLASSES
    c = (size - 1) / 2.0
    r1, r2 = 0.27 * size, 0.16 * size
    p1 = (c + r1 * np.sin(angle), c + r1 * np.cos(angle))
    p2 = (c - r2 * np.sin(angle + 0.9), c - r2 * np.cos(angle + 0.9))
    return p1, p2


def make_class_image(label: int, rng, size: int = IMAGE_SIZE) -> Image:
    if not 0 <= label < NUM_CLASSES:
        raise ParameterError(f"label {label} out of range")
    (y1, x1), (y2, x2) = _class_layout(label, size)
    jit = rng.uniform(-2.2, 2.2, size=4)
    s1 = size * rng.uniform(0.09, 0.15)
    s2 = size * rng.uniform(0.06, 0.11)
    a1 = rng.uniform(110.0, 190.0)
    a2 = rng.uniform(75.0, 145.0)
    base = rng.uniform(10.0, 70.0)
    tilt_y, tilt_x = rng.uniform(-32.0, 32.0, size=2)
    # class-independent distractor blob overlapping the informative ones
    dy, dx = rng.uniform(0.2 * size, 0.8 * size, size=2)
    da = rng.uniform(0.0, 60.0)
    ds = size * rng.uniform(0.08, 0.14)
    y = np.linspace(-0.5, 0.5, size)[:, None]
    x = np.linspace(-0.5, 0.5, size)[None, :]
    img = (
        base
        + tilt_y * y
        + tilt_x * x
        + a1 * _bump(size, y1 + jit[0], x1 + jit[1], s1)
        + a2 * _bump(size, y2 + jit[2], x2 + jit[3], s2)
        + da * _bump(size, dy, dx, ds)
    )
    return Image(round_half_away(clamp255(img)))


def generate_class_dataset(
    per_class: int, seed: int, split: str = "train", size: int = IMAGE_SIZE
) -> Dataset:
    """Deterministic labeled set: ``per_class`` images for each class."""
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label in range(NUM_CLASSES):
        for _ in range(per_class):
            images.append(make_class_image(label, rng, size))
            labels.append(label)
    return Dataset(images=images, labels=labels,
                   num_classes=NUM_CLASSES, split=split)


def generate_natural_corpus(n: int, seed: int, size: int = 64) -> list:
    """Gray images of 1/f^1.4 spectrum noise, stretched to full range.

    The exponent sits at the flatter end of the natural range so the
    mid and high DCT bins stay populated; with steeper spectra those
    bins quantize to zero and the set of reachable PSNR values thins
    out near 31 dB.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    fx = np.fft.fftfreq(size)[:, None]
    fy = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    radius[0, 0] = 1.0
    out = []
    for _ in range(n):
        spec = (
            rng.standard_normal((size, size))
            + 1j * rng.standard_normal((size, size))
        ) / radius ** 1.4
        im = np.fft.ifft2(spec).real
        lo, hi = im.min(), im.max()
        im = (im - lo) / max(hi - lo, 1e-12) * 255.0
        out.append(Image(round_half_away(im)))
    return out


# ---------------------------------------------------------------------------
# On-disk layout: a directory of .pgm/.ppm files plus labels.csv rows
# "filename,label_index".

def save_dataset(data: Dataset, directory: str | os.PathLike) -> None:
    os.makedirs(directory, exist_ok=True)
    rows = []
    for i, (img, label) in enumerate(zip(data.images, data.labels)):
        ext = "pgm" if img.channels == 1 else "ppm"
        name = f"{data.split}_{i:05d}.{ext}"
        write_netpbm(img, os.path.join(directory, name))
        rows.append((name, label))
    with open(os.path.join(directory, "labels.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        for name, label in rows:
            writer.writerow([name, label])


def load_dataset(
    directory: str | os.PathLike,
    num_classes: int | None = None,
    split: str = "test",
) -> Dataset:
    path = os.path.join(directory, "labels.csv")
    if not os.path.exists(path):
        raise FormatError(f"no labels.csv in {directory}")
    images, labels = [], []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"malformed labels.csv row {row!r}")
            name, label = row[0], int(row[1])
            images.append(read_netpbm(os.path.join(directory, name)))
            labels.append(label)
    if num_classes is None:
        num_classes = max(labels) + 1 if labels else 2
    return Dataset(images=images, labels=labels,
                   num_classes=num_classes, split=split)
