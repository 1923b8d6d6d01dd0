"""Pairwise binary-constrained penalty loss and its analytic gradients.

For a pair of embeddings (f_i, f_j) with auxiliary sign codes (b_i, b_j)
and label y:

    loss = y * d^2
         + (1 - y) * max(0, c - d)^2
         + alpha * (|f_i - b_i|^2 + |f_j - b_j|^2),    d = |f_i - f_j|

The margin c is the distance beyond which a non-matching pair stops
contributing; the alpha term is the binary quantization penalty pulling
embeddings toward their sign vectors. Note the hinge squares the margin
shortfall of the UNsquared distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError


@dataclass(frozen=True)
class LossParams:
    c: float
    alpha: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ContractError("margin c must be finite and > 0")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ContractError("alpha must be finite and >= 0")

    @classmethod
    def for_code_len(cls, code_len: int, alpha: float = 1.0) -> "LossParams":
        """Published defaults: c = L/2, alpha = 1."""
        return cls(c=code_len / 2.0, alpha=alpha)


@dataclass(frozen=True)
class PairLossBreakdown:
    similarity_term: float
    hinge_term: float
    quantization_term: float
    total: float

    def __add__(self, other: "PairLossBreakdown") -> "PairLossBreakdown":
        return PairLossBreakdown(
            self.similarity_term + other.similarity_term,
            self.hinge_term + other.hinge_term,
            self.quantization_term + other.quantization_term,
            self.total + other.total,
        )


ZERO_BREAKDOWN = PairLossBreakdown(0.0, 0.0, 0.0, 0.0)


def _check_pair(f_i, f_j, b_i, b_j, y):
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    b_i = np.asarray(b_i, dtype=np.float64)
    b_j = np.asarray(b_j, dtype=np.float64)
    if not (f_i.shape == f_j.shape == b_i.shape == b_j.shape) or f_i.ndim != 1:
        raise ShapeError(
            f"pair vectors must share one dimension: {f_i.shape}, {f_j.shape}, "
            f"{b_i.shape}, {b_j.shape}"
        )
    for b in (b_i, b_j):
        if not np.all(np.abs(b) == 1.0):
            raise ContractError("auxiliary codes must have entries in {-1, +1}")
    if y not in (0, 1):
        raise ContractError(f"pair label must be 0 or 1, got {y!r}")
    return f_i, f_j, b_i, b_j


def pair_loss(f_i, f_j, b_i, b_j, y: int, params: LossParams) -> PairLossBreakdown:
    f_i, f_j, b_i, b_j = _check_pair(f_i, f_j, b_i, b_j, y)
    diff = f_i - f_j
    d = float(np.sqrt(diff @ diff))
    similarity = y * float(diff @ diff)
    hinge = (1 - y) * max(0.0, params.c - d) ** 2
    quant = params.alpha * (
        float((f_i - b_i) @ (f_i - b_i)) + float((f_j - b_j) @ (f_j - b_j))
    )
    return PairLossBreakdown(similarity, hinge, quant, similarity + hinge + quant)


def pair_grad(f_i, f_j, b_i, b_j, y: int, params: LossParams):
    """Gradients of pair_loss w.r.t. f_i and f_j.

    The hinge is differentiable except at d = c (where both one-sided
    derivatives vanish with the strict indicator) and d = 0, where the zero
    subgradient is taken.
    """
    f_i, f_j, b_i, b_j = _check_pair(f_i, f_j, b_i, b_j, y)
    diff = f_i - f_j
    d = float(np.sqrt(diff @ diff))
    g_i = 2.0 * params.alpha * (f_i - b_i)
    g_j = 2.0 * params.alpha * (f_j - b_j)
    if y == 1:
        g_i = g_i + 2.0 * diff
        g_j = g_j - 2.0 * diff
    elif 0.0 < d < params.c:
        coef = 2.0 * (params.c - d) / d
        g_i = g_i - coef * diff
        g_j = g_j + coef * diff
    return g_i, g_j


def quantization_stats(f) -> tuple[float, float]:
    """(mean, max) absolute deviation of |entries| from 1."""
    f = np.asarray(getattr(f, "f", f), dtype=np.float64)
    if f.size == 0:
        return 0.0, 0.0
    dev = np.abs(np.abs(f) - 1.0)
    return float(dev.mean()), float(dev.max())
