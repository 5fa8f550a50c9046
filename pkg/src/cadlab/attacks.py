"""Gradient-sign attacks: single-step and iterative.

Perturbations are computed in real arithmetic and re-quantized to
integers only on the final output, so codecs and the classifier always
see a valid 8-bit image. With integer inputs and integer epsilon the
re-quantization provably preserves the deviation bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .imagecore import Image, round_half_away
from .model import loss_and_input_grad


@dataclass(frozen=True)
class AttackConfig:
    kind: str  # "fgsm" or "bim"
    epsilon: float
    alpha: float = 1.0
    iterations: int | None = None  # BIM only; None = default rule
    seed: int = 0  # reserved; both attacks are deterministic

    def __post_init__(self):
        if self.kind not in ("fgsm", "bim"):
            raise ParameterError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ParameterError("epsilon must be >= 0")
        if self.alpha <= 0:
            raise ParameterError("alpha must be > 0")
        if self.iterations is not None and self.iterations < 1:
            raise ParameterError("iterations must be >= 1")


def default_bim_iterations(epsilon: float) -> int:
    """min(eps + 4, 1.25 eps) rounded, the iterative-attack convention."""
    return max(1, int(min(epsilon + 4, round(1.25 * epsilon))))


def _quantize_into_ball(adv: np.ndarray, x: np.ndarray, epsilon: float):
    """Round to integers without leaving the deviation ball around x.

    For integer x the rounded perturbation stays within ceil(epsilon); the
    extra clip makes the bound exact for non-integer epsilon too.
    """
    q = round_half_away(adv)
    q = np.clip(q, x - epsilon, x + epsilon)
    return np.clip(q, 0.0, 255.0)


def fgsm(model, img: Image, label: int, epsilon: float) -> Image:
    """adv = clamp(x + eps * sign(grad J), 0, 255), integer output."""
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    x = img.planes
    _, grad = loss_and_input_grad(model, img, label)
    adv = np.clip(x + epsilon * np.sign(grad), 0.0, 255.0)
    return Image(_quantize_into_ball(adv, x, epsilon))


def bim(model, img: Image, label: int, epsilon: float,
        alpha: float = 1.0, iterations: int | None = None) -> Image:
    """Repeated small gradient-sign steps, projected onto the epsilon
    ball around the original image after every step."""
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    if alpha <= 0:
        raise ParameterError("alpha must be > 0")
    if iterations is None:
        iterations = default_bim_iterations(epsilon)
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    x = img.planes
    cur = x
    for _ in range(iterations):
        _, grad = loss_and_input_grad(model, Image(cur), label)
        stepped = np.clip(cur + alpha * np.sign(grad), 0.0, 255.0)
        cur = np.clip(stepped, x - epsilon, x + epsilon)
        cur = np.clip(cur, 0.0, 255.0)
    return Image(_quantize_into_ball(cur, x, epsilon))


def run_attack(model, img: Image, label: int, cfg: AttackConfig) -> Image:
    if cfg.kind == "fgsm":
        return fgsm(model, img, label, cfg.epsilon)
    return bim(model, img, label, cfg.epsilon, cfg.alpha, cfg.iterations)
