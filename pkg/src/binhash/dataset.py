"""Synthetic co-observation worlds and feature-store persistence.

A world is a set of models, each owning a disjoint universe of point ids;
every image belongs to one model and observes a subset of its points.
Two images "co-observe" the points in the intersection of their observed
sets (zero across models). Worlds stand in for collections of 3D-
reconstructed scenes, letting the pair-mining logic run self-contained.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataGenerationError, FormatError, ShapeError, UnknownIdError
from .numkit import Rng

TRAIN_QUERY = "train_query"
VALIDATION_QUERY = "validation_query"
DATABASE = "database"
SPLITS = (TRAIN_QUERY, VALIDATION_QUERY, DATABASE)

# minimum co-observed points for two images to count as matching
DEFAULT_CO_OBS_THRESHOLD = 10

_FEATURE_MAGIC = b"FEAT"
_MAX_DIM = 2**31 - 1


@dataclass(frozen=True)
class ModelRecord:
    model_id: str
    point_ids: frozenset[int]


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    model_id: str
    observed_points: frozenset[int]


@dataclass
class ModelWorld:
    """Immutable after construction; safe to share read-only."""

    models: list[ModelRecord]
    images: list[ImageRecord]
    splits: dict[str, str]  # image_id -> split label
    _image_by_id: dict[str, ImageRecord] = field(init=False, repr=False)
    _model_by_id: dict[str, ModelRecord] = field(init=False, repr=False)

    def __post_init__(self):
        self._image_by_id = {img.image_id: img for img in self.images}
        self._model_by_id = {m.model_id: m for m in self.models}
        if len(self._image_by_id) != len(self.images):
            raise DataGenerationError("duplicate image ids in world")
        if len(self._model_by_id) != len(self.models):
            raise DataGenerationError("duplicate model ids in world")
        for img in self.images:
            model = self._model_by_id.get(img.model_id)
            if model is None:
                raise DataGenerationError(f"image {img.image_id} references unknown model {img.model_id}")
            if not img.observed_points <= model.point_ids:
                raise DataGenerationError(f"image {img.image_id} observes points outside its model")
        if set(self.splits) != set(self._image_by_id):
            raise DataGenerationError("split labels do not cover exactly the image set")
        for image_id, split in self.splits.items():
            if split not in SPLITS:
                raise DataGenerationError(f"unknown split label {split!r} for image {image_id}")

    def image(self, image_id: str) -> ImageRecord:
        try:
            return self._image_by_id[image_id]
        except KeyError:
            raise UnknownIdError(f"unknown image id {image_id!r}") from None

    def model(self, model_id: str) -> ModelRecord:
        try:
            return self._model_by_id[model_id]
        except KeyError:
            raise UnknownIdError(f"unknown model id {model_id!r}") from None

    def images_of_model(self, model_id: str) -> list[ImageRecord]:
        self.model(model_id)
        return [img for img in self.images if img.model_id == model_id]

    def split_ids(self, split: str) -> list[str]:
        return [img.image_id for img in self.images if self.splits[img.image_id] == split]

    @property
    def train_queries(self) -> list[str]:
        return self.split_ids(TRAIN_QUERY)

    @property
    def validation_queries(self) -> list[str]:
        return self.split_ids(VALIDATION_QUERY)

    @property
    def database_ids(self) -> list[str]:
        return self.split_ids(DATABASE)


@dataclass
class FeatureStore:
    """Image ids plus an N x D float64 feature matrix (read-only rows)."""

    ids: list[str]
    features: np.ndarray
    normalized: bool = False
    _row_by_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-D matrix")
        if len(self.ids) != self.features.shape[0]:
            raise ShapeError(f"{len(self.ids)} ids for {self.features.shape[0]} feature rows")
        self._row_by_id = {image_id: i for i, image_id in enumerate(self.ids)}
        if len(self._row_by_id) != len(self.ids):
            raise DataGenerationError("duplicate image ids in feature store")
        if self.normalized and self.features.size:
            norms = np.linalg.norm(self.features, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ShapeError("store marked normalized but rows are not unit-norm")
        self.features.setflags(write=False)

    def row(self, image_id: str) -> int:
        try:
            return self._row_by_id[image_id]
        except KeyError:
            raise UnknownIdError(f"unknown image id {image_id!r}") from None

    def vector(self, image_id: str) -> np.ndarray:
        return self.features[self.row(image_id)]


@dataclass(frozen=True)
class WorldGenParams:
    num_models: int
    images_per_model: int
    points_per_model: int
    obs_fraction: float
    feature_dim: int
    cluster_spread: float
    noise_sigma: float
    seed: int

    def __post_init__(self):
        for name in ("num_models", "images_per_model", "points_per_model", "feature_dim"):
            if getattr(self, name) < 1:
                raise DataGenerationError(f"{name} must be >= 1")
        if not 0.0 < self.obs_fraction <= 1.0:
            raise DataGenerationError("obs_fraction must be in (0, 1]")
        if not (np.isfinite(self.cluster_spread) and self.cluster_spread > 0):
            raise DataGenerationError("cluster_spread must be finite and > 0")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise DataGenerationError("noise_sigma must be finite and >= 0")


def _sample_point_subset(rng: Rng, points: list[int], size: int) -> frozenset[int]:
    # partial Fisher-Yates: uniform subset without replacement
    pts = list(points)
    for i in range(size):
        j = i + rng.below(len(pts) - i)
        pts[i], pts[j] = pts[j], pts[i]
    return frozenset(pts[:size])


def generate_world(
    params: WorldGenParams,
    min_co_observed: int = DEFAULT_CO_OBS_THRESHOLD,
) -> tuple[ModelWorld, FeatureStore]:
    """Build a synthetic world and matching feature store.

    Every model gets a disjoint point universe and a Gaussian feature
    centroid; each image observes a uniform random subset of
    round(obs_fraction * points_per_model) points and its feature is the
    centroid plus per-image Gaussian noise, L2-normalized. Per model, one
    image becomes a training query and one a validation query; the rest are
    database. Observation sets are redrawn until every training query
    co-observes at least ``min_co_observed`` points with some same-model
    image, so match mining at tau <= min_co_observed can never fail.
    """
    if params.images_per_model < 3:
        raise DataGenerationError(
            "cannot split images into queries + database: images_per_model must be >= 3"
        )
    subset_size = round(params.obs_fraction * params.points_per_model)
    if subset_size < max(1, min_co_observed):
        raise DataGenerationError(
            f"observation subsets of size {subset_size} can never co-observe "
            f"{min_co_observed} points; raise obs_fraction or points_per_model"
        )
    rng = Rng(params.seed)
    model_width = max(3, len(str(params.num_models - 1)))
    total_images = params.num_models * params.images_per_model
    image_width = max(5, len(str(total_images - 1)))

    models: list[ModelRecord] = []
    images: list[ImageRecord] = []
    splits: dict[str, str] = {}
    rows: list[np.ndarray] = []
    ids: list[str] = []

    for mi in range(params.num_models):
        model_id = f"m{mi:0{model_width}d}"
        point_base = mi * params.points_per_model
        point_ids = list(range(point_base, point_base + params.points_per_model))
        models.append(ModelRecord(model_id, frozenset(point_ids)))

        # image numbering round-robins across models so that id order carries
        # no model grouping; distance-tie groups then span many models, as
        # arbitrary photo ids would
        image_ids = [
            f"img{ii * params.num_models + mi:0{image_width}d}"
            for ii in range(params.images_per_model)
        ]
        order = list(range(params.images_per_model))
        rng.derive("split", model_id).shuffle(order)
        splits[image_ids[order[0]]] = TRAIN_QUERY
        splits[image_ids[order[1]]] = VALIDATION_QUERY
        for idx in order[2:]:
            splits[image_ids[idx]] = DATABASE
        query_idx = order[0]

        observed = _draw_observations(
            rng.derive("points", model_id), point_ids, subset_size, query_idx,
            params.images_per_model, min_co_observed, model_id,
        )

        feat_rng = rng.derive("features", model_id)
        centroid = params.cluster_spread * feat_rng.gaussian(params.feature_dim)
        for ii, image_id in enumerate(image_ids):
            noise = params.noise_sigma * feat_rng.gaussian(params.feature_dim)
            vec = centroid + noise
            norm = float(np.linalg.norm(vec))
            if norm < 1e-12:
                raise DataGenerationError(f"degenerate zero feature vector for {image_id}")
            rows.append(vec / norm)
            ids.append(image_id)
            images.append(ImageRecord(image_id, model_id, observed[ii]))

    world = ModelWorld(models, images, splits)
    store = FeatureStore(ids, np.vstack(rows), normalized=True)
    return world, store


def _draw_observations(
    rng: Rng,
    point_ids: list[int],
    subset_size: int,
    query_idx: int,
    count: int,
    min_co_observed: int,
    model_id: str,
    max_attempts: int = 1000,
) -> list[frozenset[int]]:
    for _ in range(max_attempts):
        observed = [_sample_point_subset(rng, point_ids, subset_size) for _ in range(count)]
        query_points = observed[query_idx]
        if any(
            len(query_points & other) >= min_co_observed
            for i, other in enumerate(observed)
            if i != query_idx
        ):
            return observed
    raise DataGenerationError(
        f"model {model_id}: no observation draw gave the training query "
        f"{min_co_observed} co-observed points in {max_attempts} attempts"
    )


def co_observed(world: ModelWorld, i: str, j: str) -> int:
    """Number of 3D points observed by both images (0 across models)."""
    a = world.image(i)
    b = world.image(j)
    if a.model_id != b.model_id:
        return 0
    return len(a.observed_points & b.observed_points)


# ---------------------------------------------------------------------------
# persistence


def save_features(store: FeatureStore, path) -> None:
    n, d = store.features.shape
    parts = [_FEATURE_MAGIC, struct.pack("<II", n, d)]
    parts.append(store.features.astype("<f4").tobytes(order="C"))
    for image_id in store.ids:
        raw = image_id.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_features(path) -> FeatureStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _FEATURE_MAGIC:
        raise FormatError("bad feature-file magic", offset=0)
    if len(data) < 12:
        raise FormatError("truncated feature-file header", offset=4)
    n, d = struct.unpack_from("<II", data, 4)
    if n > _MAX_DIM or d > _MAX_DIM or 12 + n * d * 4 > len(data):
        raise FormatError(f"feature matrix {n}x{d} overflows file of {len(data)} bytes", offset=4)
    offset = 12
    matrix = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset).astype(np.float64)
    offset += n * d * 4
    ids = []
    for _ in range(n):
        if offset + 4 > len(data):
            raise FormatError("truncated id table", offset=offset)
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise FormatError("truncated id entry", offset=offset)
        ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    if offset != len(data):
        raise FormatError("trailing bytes after id table", offset=offset)
    features = matrix.reshape(n, d) if n else matrix.reshape(0, d)
    normalized = bool(n) and bool(
        np.allclose(np.linalg.norm(features, axis=1), 1.0, atol=1e-6)
    )
    return FeatureStore(ids, features, normalized=normalized)


def save_world(world: ModelWorld, path) -> None:
    doc = {
        "models": [
            {"model_id": m.model_id, "point_ids": sorted(m.point_ids)} for m in world.models
        ],
        "images": [
            {
                "image_id": img.image_id,
                "model_id": img.model_id,
                "observed_points": sorted(img.observed_points),
            }
            for img in world.images
        ],
        "splits": {image_id: world.splits[image_id] for image_id in sorted(world.splits)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_world(path) -> ModelWorld:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"world file is not valid JSON: {exc.msg}", offset=exc.pos) from None
    try:
        models = [
            ModelRecord(m["model_id"], frozenset(int(p) for p in m["point_ids"]))
            for m in doc["models"]
        ]
        images = [
            ImageRecord(
                img["image_id"],
                img["model_id"],
                frozenset(int(p) for p in img["observed_points"]),
            )
            for img in doc["images"]
        ]
        splits = dict(doc["splits"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"world file is missing or mistypes a field: {exc}") from None
    return ModelWorld(models, images, splits)


def import_features_csv(path, normalize: bool = True) -> FeatureStore:
    """Read features from CSV with header ``id,f0,...,f{D-1}``."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty CSV feature file", offset=0) from None
        d = len(header) - 1
        if d < 1 or header[0] != "id" or header[1:] != [f"f{i}" for i in range(d)]:
            raise FormatError("CSV header must be id,f0,...,f{D-1}", offset=0)
        ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise FormatError(f"CSV line {lineno} has {len(row)} fields, expected {d + 1}")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"CSV line {lineno}: {exc}") from None
    features = np.asarray(rows, dtype=np.float64).reshape(len(ids), d)
    if normalize and len(ids):
        norms = np.linalg.norm(features, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise FormatError("cannot L2-normalize a zero feature row")
        features = features / norms
    return FeatureStore(ids, features, normalized=normalize and bool(len(ids)))
