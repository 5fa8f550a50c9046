"""Experiment driver: attack, compress, decode, classify over a grid.

One run covers every (attack config) x (codec, rate setting) cell plus
the uncompressed-adversarial and clean baselines. The compression PSNR
reference is the adversarial image, not the clean one: the defense is
judged on how much of the *perturbed* signal it keeps. A flag flips the
reference to the clean image for ablation runs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .attacks import AttackConfig, run_attack
from .errors import InfeasibleTargetError, ParameterError
from .imagecore import psnr, read_netpbm, write_netpbm
from .model import (
    Dataset,
    Model,
    load_model,
    predict_batch,
    quantize_for_classifier,
    save_model,
)
from .ratecontrol import (
    CODEC_DCT,
    CODEC_WAVELET,
    RateTarget,
    compress_max,
    compress_to_psnr_dct,
    compress_to_psnr_wavelet,
)
from . import data as datamod
from . import wavelet_codec

#: rate-setting sentinel for maximum-compression cells
RATE_MAX = "max"

ATTACK_CLEAN = "clean"
CODEC_NONE = "uncompressed"


@dataclass(frozen=True)
class ExperimentGrid:
    dataset_dir: str
    model_path: str
    attacks: tuple  # of AttackConfig
    codecs: tuple = (CODEC_DCT, CODEC_WAVELET)
    psnr_targets: tuple = (23.0, 25.0, 28.0, 31.0)
    include_max_compression: bool = True
    include_uncompressed_baseline: bool = True
    adversarial_reference: bool = True  # False: clean-reference ablation
    seeds: tuple = (0,)
    output_dir: str = "."
    max_images: int | None = None  # truncate the dataset, None = all

    def __post_init__(self):
        if not self.attacks or not self.codecs:
            raise ParameterError("need at least one attack and one codec")
        for c in self.codecs:
            if c not in (CODEC_DCT, CODEC_WAVELET):
                raise ParameterError(f"unknown codec {c!r}")
        if not all(np.isfinite(t) for t in self.psnr_targets):
            raise ParameterError("PSNR targets must be finite")
        if not self.seeds:
            raise ParameterError("need at least one seed")


@dataclass
class AccuracyCell:
    attack: str  # attack kind, or "clean"
    epsilon: float
    codec: str  # codec name, or "uncompressed"
    rate: object  # target dB (float), "max", or None for no compression
    accuracy: float
    mean_psnr: float | None
    mean_bytes: float | None
    exact_hit_rate: float | None
    count: int
    excluded: int = 0

    def key(self):
        return (self.attack, self.epsilon, self.codec, self.rate)


@dataclass
class Report:
    cells: list
    metadata: dict = field(default_factory=dict)

    def cell(self, attack, epsilon, codec, rate):
        want = (attack, epsilon, codec, rate)
        for c in self.cells:
            if c.key() == want:
                return c
        raise KeyError(f"no cell {want}")

    def to_json(self) -> bytes:
        doc = {
            "metadata": self.metadata,
            "cells": [vars(c) for c in self.cells],
        }
        return json.dumps(doc, sort_keys=True, indent=1).encode()

    @classmethod
    def from_json(cls, raw: bytes) -> "Report":
        doc = json.loads(raw)
        cells = [AccuracyCell(**c) for c in doc["cells"]]
        return cls(cells=cells, metadata=doc["metadata"])


def evaluate_accuracy(model: Model, images, labels) -> float:
    """Fraction of argmax-correct predictions (ties to lowest index)."""
    if len(images) == 0:
        raise ParameterError("empty evaluation set")
    if len(images) != len(labels):
        raise ParameterError("images and labels differ in length")
    pred = predict_batch(model, images)
    return float(np.mean(pred == np.asarray(labels)))


def _sha256(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def dataset_hash(data: Dataset) -> str:
    h = hashlib.sha256()
    for img, label in zip(data.images, data.labels):
        h.update(np.int64(label).tobytes())
        h.update(np.ascontiguousarray(img.planes, dtype="<f8").tobytes())
    return h.hexdigest()


class _Tally:
    """Running aggregate behind one accuracy cell."""

    __slots__ = ("correct", "count", "excluded", "psnr_sum", "byte_sum",
                 "hit_count", "has_rate")

    def __init__(self, has_rate):
        self.correct = 0
        self.count = 0
        self.excluded = 0
        self.psnr_sum = 0.0
        self.byte_sum = 0
        self.hit_count = 0
        self.has_rate = has_rate

    def add(self, correct, achieved_db=None, nbytes=None, exact_hit=None):
        self.count += 1
        self.correct += int(correct)
        if achieved_db is not None:
            self.psnr_sum += achieved_db
            self.byte_sum += nbytes
            self.hit_count += int(exact_hit)

    def cell(self, attack, epsilon, codec, rate) -> AccuracyCell:
        n = self.count
        return AccuracyCell(
            attack=attack,
            epsilon=epsilon,
            codec=codec,
            rate=rate,
            accuracy=self.correct / n if n else float("nan"),
            mean_psnr=self.psnr_sum / n if n and self.has_rate else None,
            mean_bytes=self.byte_sum / n if n and self.has_rate else None,
            exact_hit_rate=self.hit_count / n if n and self.has_rate else None,
            count=n,
            excluded=self.excluded,
        )


def _predict_one(model, img):
    return int(predict_batch(model, [quantize_for_classifier(img)])[0])


def _compress_cell(img, codec, rate, reference, wstream):
    """One codec/rate cell for one image; may raise InfeasibleTargetError."""
    if rate == RATE_MAX:
        return compress_max(img, codec, reference=reference, stream=wstream)
    target = RateTarget(float(rate), reference=reference)
    if codec == CODEC_DCT:
        return compress_to_psnr_dct(img, target)
    return compress_to_psnr_wavelet(img, target, stream=wstream)


def run_experiment(
    grid: ExperimentGrid,
    model: Model | None = None,
    dataset: Dataset | None = None,
) -> Report:
    """Full grid over the dataset; deterministic for fixed inputs.

    Cells with infeasible PSNR targets on some image exclude that image
    from their average and count it in ``excluded``; a fully excluded
    cell reports NaN accuracy with count 0 rather than crashing.
    """
    if model is None:
        with open(grid.model_path, "rb") as f:
            model = load_model(f.read())
    if dataset is None:
        dataset = datamod.load_dataset(grid.dataset_dir)
    images, labels = dataset.images, dataset.labels
    if grid.max_images is not None:
        images, labels = images[: grid.max_images], labels[: grid.max_images]
    if not images:
        raise ParameterError("empty dataset")

    rates = list(grid.psnr_targets)
    if grid.include_max_compression:
        rates.append(RATE_MAX)

    tallies = {}

    def tally(attack, eps, codec, rate):
        key = (attack, eps, codec, rate)
        if key not in tallies:
            tallies[key] = _Tally(has_rate=rate is not None)
        return tallies[key]

    for seed in grid.seeds:
        for img, label in zip(images, labels):
            if grid.include_uncompressed_baseline:
                ok = _predict_one(model, img) == label
                tally(ATTACK_CLEAN, 0.0, CODEC_NONE, None).add(ok)
            for cfg in grid.attacks:
                cfg = AttackConfig(cfg.kind, cfg.epsilon, cfg.alpha,
                                   cfg.iterations, seed)
                adv = run_attack(model, img, label, cfg)
                if grid.include_uncompressed_baseline:
                    ok = _predict_one(model, adv) == label
                    tally(cfg.kind, cfg.epsilon, CODEC_NONE, None).add(ok)
                ref = adv if grid.adversarial_reference else img
                for codec in grid.codecs:
                    wstream = None
                    if codec == CODEC_WAVELET:
                        wstream = wavelet_codec.encode_embedded(adv)
                    for rate in rates:
                        t = tally(cfg.kind, cfg.epsilon, codec, rate)
                        try:
                            res = _compress_cell(adv, codec, rate, ref, wstream)
                        except InfeasibleTargetError:
                            t.excluded += 1
                            continue
                        ok = _predict_one(model, res.decoded()) == label
                        t.add(ok, res.achieved_db, res.byte_size, res.exact_hit)

    cells = [t.cell(*key) for key, t in tallies.items()]
    return Report(
        cells=cells,
        metadata={
            "model_hash": _sha256(save_model(model)),
            "dataset_hash": dataset_hash(
                Dataset(images, labels, dataset.num_classes, dataset.split)
            ),
            "seeds": list(grid.seeds),
            "version": __version__,
        },
    )


# ---------------------------------------------------------------------------
# Table rendering in the published row/column arrangement: rows are
# codec x rate setting plus an uncompressed row, columns are attack x
# epsilon. A report whose only rate settings are "max" renders without
# the PSNR column.


def _fmt_eps(eps: float) -> str:
    return f"{eps:g}"


def _column_order(report):
    cols = []
    for c in report.cells:
        if c.attack == ATTACK_CLEAN:
            continue
        key = (c.attack, c.epsilon)
        if key not in cols:
            cols.append(key)
    return cols


def _row_order(report):
    rows = []
    uncompressed = []
    for c in report.cells:
        if c.attack == ATTACK_CLEAN:
            continue
        key = (c.codec, c.rate)
        target = uncompressed if c.codec == CODEC_NONE else rows
        if key not in target:
            target.append(key)
    return rows + uncompressed


def _column_label(attack, eps):
    name = "FGSM" if attack == "fgsm" else "BIM" if attack == "bim" else attack
    return f"{name} (eps={_fmt_eps(eps)})"


def _cell_text(report, attack, eps, codec, rate, precision):
    try:
        cell = report.cell(attack, eps, codec, rate)
    except KeyError:
        return "NA"
    if cell.count == 0:
        return "NA"
    if precision is None:
        return repr(cell.accuracy)
    return f"{cell.accuracy:.{precision}f}"


def emit_table(report: Report, format: str = "markdown") -> bytes:
    """Deterministic accuracy table; CSV carries full float precision."""
    if format not in ("csv", "markdown"):
        raise ParameterError(f"unknown table format {format!r}")
    cols = _column_order(report)
    rows = _row_order(report)
    with_psnr = any(rate not in (None, RATE_MAX) for _, rate in rows)
    precision = 3 if format == "markdown" else None

    header = ["Codec"]
    if with_psnr:
        header.append("PSNR (dB)")
    header += [_column_label(a, e) for a, e in cols]
    lines = []
    prev_codec = None
    for codec, rate in rows:
        label = "Uncompressed" if codec == CODEC_NONE else codec
        # the published layout names each codec once for its row group
        shown = "" if label == prev_codec and with_psnr else label
        prev_codec = label
        row = [shown]
        if with_psnr:
            if rate is None:
                row.append("NA")
            elif rate == RATE_MAX:
                row.append(RATE_MAX)
            else:
                row.append(f"{rate:g}")
        row += [
            _cell_text(report, a, e, codec, rate, precision) for a, e in cols
        ]
        lines.append(row)

    if format == "csv":
        out = [",".join(header)]
        out += [",".join(r) for r in lines]
        return ("\n".join(out) + "\n").encode()
    widths = [
        max(len(header[i]), *(len(r[i]) for r in lines))
        for i in range(len(header))
    ]
    def md_row(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    out = [md_row(header)]
    out.append("|-" + "-|-".join("-" * w for w in widths) + "-|")
    out += [md_row(r) for r in lines]
    return ("\n".join(out) + "\n").encode()


def dump_samples(
    model: Model,
    dataset: Dataset,
    grid: ExperimentGrid,
    n: int,
    directory: str | os.PathLike,
) -> str:
    """Write n (clean, adversarial, decoded) triplets per grid cell.

    Returns the manifest path. Manifest PSNR values are computed from
    the integer images actually written, so re-reading the files and
    recomputing reproduces them exactly.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    os.makedirs(directory, exist_ok=True)
    rates = list(grid.psnr_targets)
    if grid.include_max_compression:
        rates.append(RATE_MAX)
    entries = []
    for cfg in grid.attacks:
        for codec in grid.codecs:
            for rate in rates:
                for i in range(min(n, len(dataset))):
                    img, label = dataset.images[i], dataset.labels[i]
                    adv = run_attack(model, img, label, cfg)
                    ref = adv if grid.adversarial_reference else img
                    wstream = None
                    if codec == CODEC_WAVELET:
                        wstream = wavelet_codec.encode_embedded(adv)
                    try:
                        res = _compress_cell(adv, codec, rate, ref, wstream)
                    except InfeasibleTargetError:
                        continue
                    dec = quantize_for_classifier(res.decoded())
                    stem = f"{cfg.kind}{_fmt_eps(cfg.epsilon)}_{codec}_{rate}_{i:03d}"
                    ext = "pgm" if img.channels == 1 else "ppm"
                    names = {
                        "clean": f"{stem}_clean.{ext}",
                        "adversarial": f"{stem}_adv.{ext}",
                        "decoded": f"{stem}_dec.{ext}",
                    }
                    for kind, image in (
                        ("clean", img), ("adversarial", adv), ("decoded", dec)
                    ):
                        write_netpbm(image, os.path.join(directory, names[kind]))
                    entries.append({
                        "attack": cfg.kind,
                        "epsilon": cfg.epsilon,
                        "codec": codec,
                        "rate": rate,
                        "label": label,
                        "prediction": _predict_one(model, dec),
                        "psnr_adv_decoded": psnr(adv, dec),
                        "files": names,
                    })
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as f:
        json.dump(entries, f, sort_keys=True, indent=1)
    return path


def read_dumped(directory: str | os.PathLike, name: str) -> Image:
    return read_netpbm(os.path.join(directory, name))
