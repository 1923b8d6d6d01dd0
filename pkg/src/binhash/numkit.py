"""Deterministic numeric substrate: seeded RNG, matrix helpers, and PCA.

All arithmetic is 64-bit floating point. Matrices are plain 2-D float64
numpy arrays in row-major order.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ShapeError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_PRIME = 0x100000001B3


def _mix64(z: int) -> int:
    """splitmix64 finalizer: bijective scramble of a 64-bit word."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """Counter-based splitmix64 pseudo-random generator.

    Word i of the stream is a pure function of (seed, i), so identical seeds
    give bit-identical sequences on every platform and build. Instances are
    single-owner; use :meth:`derive` to obtain independent child streams
    keyed by labels (children depend only on the seed and the keys, never on
    how much of the parent stream has been consumed).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words as a uint64 array."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self, shape: int | tuple[int, ...] | None = None):
        """Uniform float64 draws in [0, 1): a scalar, or an array of `shape`."""
        if shape is None:
            return float(self._raw(1)[0] >> np.uint64(11)) * 2.0**-53
        n = int(np.prod(shape))
        out = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return out.reshape(shape)

    def gaussian(self, shape: int | tuple[int, ...] | None = None):
        """Standard normal draws via Box-Muller; scalar or array of `shape`."""
        scalar = shape is None
        n = 1 if scalar else int(np.prod(shape))
        m = (n + 1) // 2
        # u1 in (0, 1] so log() is finite; u2 in [0, 1)
        u1 = ((self._raw(m) >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (self._raw(m) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if scalar:
            return float(out[0])
        return out.reshape(shape)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        threshold = ((1 << 64) // n) * n
        while True:
            word = int(self._raw(1)[0])
            if word < threshold:
                return word % n

    def shuffle(self, seq: list) -> None:
        """Uniform in-place Fisher-Yates shuffle of a list."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.below(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def choice(self, seq: Sequence):
        """Uniformly chosen element of a non-empty sequence."""
        return seq[self.below(len(seq))]

    def derive(self, *keys: str | int) -> "Rng":
        """Child generator keyed by (seed, keys); independent of the counter.

        Two derivations with equal keys from generators with equal seeds are
        identical, regardless of draw order, which makes keyed substreams
        safe to create from concurrent tasks.
        """
        h = self.seed
        for key in keys:
            if isinstance(key, str):
                data = key.encode("utf-8")
            else:
                data = (int(key) & _MASK64).to_bytes(8, "little")
            h = _mix64(h ^ len(data))
            for byte in data:
                h = ((h ^ byte) * _FNV_PRIME) & _MASK64
        return Rng(_mix64(h))


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, raising ShapeError otherwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


class PcaResult(NamedTuple):
    components: np.ndarray  # (d, l), orthonormal columns, variance-ordered
    mean: np.ndarray  # (d,)
    deficient: bool  # covariance rank < l; trailing columns are a completion


def pca(x, l: int) -> PcaResult:
    """Top-l principal components of the rows of x.

    Columns of ``components`` are unit-norm, mutually orthogonal, and ordered
    by non-increasing explained variance of the mean-centered data. When the
    covariance rank is below l, the remaining columns are an orthonormal
    completion and ``deficient`` is True.
    """
    x = as_matrix(x, "pca input")
    n, d = x.shape
    if n < 2:
        raise ShapeError(f"pca requires at least 2 rows, got {n}")
    if not 1 <= l <= min(n, d):
        raise ShapeError(f"pca component count {l} not in [1, min(n={n}, d={d})]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)  # ascending order
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    components = np.array(evecs[:, :l])
    # fix signs so the largest-magnitude coordinate of each column is positive
    peak = np.argmax(np.abs(components), axis=0)
    flip = components[peak, np.arange(l)] < 0
    components[:, flip] *= -1.0
    tol = max(float(evals[0]), 0.0) * 1e-12
    rank = int(np.count_nonzero(evals > tol))
    return PcaResult(components, mean, rank < l)
