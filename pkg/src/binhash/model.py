"""The trainable hashing head: two affine layers mapping features to
pre-binary embeddings, plus channel-max pooling for raw activation maps.

Layer one reduces dimension (D -> L, one unit per code bit); layer two maps
the reduced features to the pre-binary code space (L -> L). Both layers are
linear: the quantization penalty in the training loss supplies the pull
toward +/-1, so no saturating activation is needed (or wanted, since
saturation kills gradients exactly where training must still move).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureStore
from .errors import FormatError, InitError, ShapeError
from .numkit import pca

_HEAD_MAGIC = b"HASH"
_MAX_DIM = 2**31 - 1


@dataclass
class HashHead:
    w1: np.ndarray  # (d_in, code_len)
    b1: np.ndarray  # (code_len,)
    w2: np.ndarray  # (code_len, code_len)
    b2: np.ndarray  # (code_len,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        d, l = self.w1.shape
        if self.b1.shape != (l,) or self.w2.shape != (l, l) or self.b2.shape != (l,):
            raise ShapeError(
                f"inconsistent head shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.isfinite(arr).all():
                raise ShapeError("head parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def code_len(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "HashHead":
        return HashHead(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class EmbeddingBatch:
    ids: list[str] | None
    f: np.ndarray  # (n, code_len)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if self.f.ndim != 2:
            raise ShapeError("embeddings must be 2-D")
        if self.ids is not None and len(self.ids) != self.f.shape[0]:
            raise ShapeError(f"{len(self.ids)} ids for {self.f.shape[0]} embedding rows")

    def __len__(self) -> int:
        return self.f.shape[0]


def mac_pool(maps) -> np.ndarray:
    """Channel-wise spatial max over a W x H x K activation tensor
    (maximum activations of convolutions), giving a K-vector."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3 or min(maps.shape) < 1:
        raise ShapeError(f"expected a non-empty W x H x K tensor, got shape {maps.shape}")
    return maps.max(axis=(0, 1))


def init_head(store: FeatureStore, code_len: int, rng=None) -> HashHead:
    """PCA-initialized head: layer one projects onto the top code_len
    principal components with mean-centering bias, layer two starts as the
    identity, so the initial forward pass is exactly the PCA projection.

    rng is accepted for interface symmetry; PCA init draws nothing.
    """
    n, d = store.features.shape
    if code_len < 1 or code_len > min(n - 1, d):
        raise InitError(
            f"code length {code_len} not in [1, min(N-1={n - 1}, D={d})] "
            "for PCA initialization"
        )
    components, mean, _ = pca(store.features, code_len)
    w1 = components
    b1 = -(mean @ w1)
    return HashHead(w1, b1, np.eye(code_len), np.zeros(code_len))


def forward(head: HashHead, x, ids: list[str] | None = None) -> EmbeddingBatch:
    """Two affine layers, linear activations: f = (x @ w1 + b1) @ w2 + b2."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.d_in:
        raise ShapeError(f"input of shape {x.shape} does not match head d_in={head.d_in}")
    f = (x @ head.w1 + head.b1) @ head.w2 + head.b2
    return EmbeddingBatch(ids, f)


def embed_store(head: HashHead, store: FeatureStore) -> EmbeddingBatch:
    return forward(head, store.features, list(store.ids))


def save_head(head: HashHead, path) -> None:
    """Model file: magic | u32 D | u32 L | w1, b1, w2, b2 as f32 LE."""
    with open(path, "wb") as fh:
        fh.write(_HEAD_MAGIC)
        fh.write(struct.pack("<II", head.d_in, head.code_len))
        for arr in (head.w1, head.b1, head.w2, head.b2):
            fh.write(arr.astype("<f4").tobytes(order="C"))


def load_head(path) -> HashHead:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _HEAD_MAGIC:
        raise FormatError("bad model-file magic", offset=0)
    if len(data) < 12:
        raise FormatError("truncated model-file header", offset=4)
    d, l = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * (d * l + l + l * l + l)
    if not (1 <= d <= _MAX_DIM and 1 <= l <= _MAX_DIM) or expected != len(data):
        raise FormatError(
            f"model payload for D={d}, L={l} needs {expected} bytes, file has {len(data)}",
            offset=4,
        )
    offset = 12
    arrays = []
    for shape in ((d, l), (l,), (l, l), (l,)):
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.astype(np.float64).reshape(shape))
        offset += count * 4
    return HashHead(*arrays)
