"""Matching and non-matching training-pair mining.

Matching pairs: per training query, one uniformly sampled same-model image
that co-observes at least tau points; the match set is mined once and kept
for the whole training run. Non-matching pairs: per query, the k nearest
foreign-model images form a candidate pool (feature-space Euclidean
distance offline, Hamming distance on current codes online) and m of them
are sampled at random with at most one image per model. Random selection
among the top k, rather than taking the hardest, is deliberate: always
training on the hardest negatives drives optimization into bad minima.

All sampling uses substreams derived from (rng seed, query id), so mining
is order-independent and safe to parallelize per query.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import DEFAULT_CO_OBS_THRESHOLD, FeatureStore, ModelWorld, co_observed
from .errors import ContractError, MiningError
from .numkit import Rng
from .retrieval import CodeDatabase, hamming_to_all


@dataclass(frozen=True)
class TrainingPair:
    query_id: str
    other_id: str
    y: int  # 1 = matching, 0 = non-matching

    def __post_init__(self):
        if self.query_id == self.other_id:
            raise ContractError(f"pair may not repeat an image: {self.query_id}")
        if self.y not in (0, 1):
            raise ContractError(f"pair label must be 0 or 1, got {self.y!r}")


@dataclass(frozen=True)
class MiningParams:
    k: int = 70  # candidate pool size
    m: int = 6  # negatives per query
    tau: int = DEFAULT_CO_OBS_THRESHOLD  # co-observation threshold

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if not 1 <= self.m <= self.k:
            raise ContractError("m must satisfy 1 <= m <= k")
        if self.tau < 1:
            raise ContractError("tau must be >= 1")


@dataclass
class PairSet:
    matches: list[TrainingPair]  # one y=1 pair per training query, fixed
    negatives: dict[str, list[TrainingPair]]  # query_id -> m pairs with y=0
    generation: int = 0  # 0 = offline, >= 1 = online regenerations

    def __post_init__(self):
        match_queries = [p.query_id for p in self.matches]
        if len(set(match_queries)) != len(match_queries):
            raise ContractError("duplicate query in match list")
        if set(self.negatives) != set(match_queries):
            raise ContractError("negatives must cover exactly the match queries")
        for pair in self.matches:
            if pair.y != 1:
                raise ContractError("match list contains a non-matching pair")
        for query_id, negs in self.negatives.items():
            for pair in negs:
                if pair.y != 0 or pair.query_id != query_id:
                    raise ContractError(f"bad negative entry under query {query_id}")

    @property
    def query_ids(self) -> list[str]:
        return [p.query_id for p in self.matches]

    def all_pairs(self) -> list[TrainingPair]:
        """Every pair in a fixed (query_id, other_id) order."""
        pairs = list(self.matches)
        for query_id in self.query_ids:
            pairs.extend(self.negatives[query_id])
        return sorted(pairs, key=lambda p: (p.query_id, p.other_id))


def mine_matches(world: ModelWorld, rng: Rng, tau: int = DEFAULT_CO_OBS_THRESHOLD) -> list[TrainingPair]:
    """One matching pair per training query, uniform over the images of the
    query's model that co-observe at least tau points with it."""
    pairs = []
    for query_id in world.train_queries:
        query = world.image(query_id)
        candidates = sorted(
            img.image_id
            for img in world.images_of_model(query.model_id)
            if img.image_id != query_id
            and len(query.observed_points & img.observed_points) >= tau
        )
        if not candidates:
            raise MiningError(
                f"training query {query_id} has no same-model image with "
                f">= {tau} co-observed points"
            )
        choice = rng.derive(query_id).choice(candidates)
        pairs.append(TrainingPair(query_id, choice, 1))
    return pairs


def _foreign_images(world: ModelWorld, query_model: str) -> list:
    return [img for img in world.images if img.model_id != query_model]


def _sample_pool(
    ordered: list[tuple[str, str]],  # (image_id, model_id), ascending hardness
    k: int,
    m: int,
    sub_rng: Rng,
    query_id: str,
) -> list[str]:
    """Sample m model-distinct images from the top-k pool (one 2k widening)."""
    for pool_size in (k, 2 * k):
        pool = ordered[:pool_size]
        if len({model_id for _, model_id in pool}) >= m:
            break
    else:
        raise MiningError(
            f"query {query_id}: fewer than {m} distinct models in the "
            f"widened candidate pool of {len(ordered[: 2 * k])}"
        )
    order = list(range(len(pool)))
    sub_rng.shuffle(order)
    chosen: list[str] = []
    used_models: set[str] = set()
    for idx in order:
        image_id, model_id = pool[idx]
        if model_id in used_models:
            continue
        chosen.append(image_id)
        used_models.add(model_id)
        if len(chosen) == m:
            break
    return chosen


def mine_negatives_offline(
    world: ModelWorld,
    store: FeatureStore,
    params: MiningParams,
    rng: Rng,
) -> dict[str, list[TrainingPair]]:
    """Per training query: pool of the k nearest foreign images by Euclidean
    feature distance (ties by ascending image id), then m sampled with at
    most one image per model."""
    negatives = {}
    for query_id in world.train_queries:
        query_model = world.image(query_id).model_id
        foreign = _foreign_images(world, query_model)
        _require_foreign_models(world, query_id, foreign, params.m)
        rows = np.array([store.row(img.image_id) for img in foreign])
        diffs = store.features[rows] - store.vector(query_id)
        dist2 = (diffs * diffs).sum(axis=1)
        ordered = [
            (image_id, model_id)
            for _, image_id, model_id in sorted(
                (float(d2), img.image_id, img.model_id) for img, d2 in zip(foreign, dist2)
            )
        ]
        chosen = _sample_pool(ordered, params.k, params.m, rng.derive(query_id), query_id)
        negatives[query_id] = [TrainingPair(query_id, other, 0) for other in chosen]
    return negatives


def mine_negatives_online(
    world: ModelWorld,
    codes: CodeDatabase,
    params: MiningParams,
    rng: Rng,
) -> dict[str, list[TrainingPair]]:
    """As offline, but hardness is Hamming distance on the current codes."""
    negatives = {}
    for query_id in world.train_queries:
        query_model = world.image(query_id).model_id
        foreign = _foreign_images(world, query_model)
        _require_foreign_models(world, query_id, foreign, params.m)
        sub = codes.subset([img.image_id for img in foreign])
        dists = hamming_to_all(sub, codes.row(query_id))
        ordered = [
            (image_id, model_id)
            for _, image_id, model_id in sorted(
                (int(d), img.image_id, img.model_id) for d, img in zip(dists, foreign)
            )
        ]
        chosen = _sample_pool(ordered, params.k, params.m, rng.derive(query_id), query_id)
        negatives[query_id] = [TrainingPair(query_id, other, 0) for other in chosen]
    return negatives


def _require_foreign_models(world, query_id, foreign, m):
    distinct = {img.model_id for img in foreign}
    if len(distinct) < m:
        raise MiningError(
            f"query {query_id}: only {len(distinct)} foreign models exist, need {m}"
        )


def assemble_batches(pairs: PairSet, queries_per_batch: int, rng: Rng) -> list[list[TrainingPair]]:
    """One epoch of batches: training queries in shuffled order, grouped
    queries_per_batch at a time, each contributing its match plus its
    negatives. The last batch may be smaller."""
    if queries_per_batch < 1:
        raise ContractError("queries_per_batch must be >= 1")
    match_by_query = {p.query_id: p for p in pairs.matches}
    order = pairs.query_ids
    rng.shuffle(order)
    batches = []
    for start in range(0, len(order), queries_per_batch):
        batch: list[TrainingPair] = []
        for query_id in order[start : start + queries_per_batch]:
            batch.append(match_by_query[query_id])
            batch.extend(pairs.negatives[query_id])
        batches.append(batch)
    return batches


def dump_pairs(pairs: PairSet, path) -> None:
    """Audit dump: one JSON object per line, matches first."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs.matches:
            _dump_line(fh, pair, pairs.generation)
        for query_id in pairs.query_ids:
            for pair in pairs.negatives[query_id]:
                _dump_line(fh, pair, pairs.generation)


def _dump_line(fh, pair: TrainingPair, generation: int) -> None:
    fh.write(
        json.dumps(
            {"query": pair.query_id, "other": pair.other_id, "y": pair.y, "generation": generation},
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
    )


def check_pair_contracts(pairs: PairSet, world: ModelWorld, tau: int) -> None:
    """Raise ContractError if any pair violates its label's ground truth."""
    for pair in pairs.matches:
        q = world.image(pair.query_id)
        o = world.image(pair.other_id)
        if q.model_id != o.model_id:
            raise ContractError(f"match {pair} crosses models")
        if co_observed(world, pair.query_id, pair.other_id) < tau:
            raise ContractError(f"match {pair} co-observes fewer than {tau} points")
    for query_id, negs in pairs.negatives.items():
        query_model = world.image(query_id).model_id
        models = [world.image(p.other_id).model_id for p in negs]
        if query_model in models:
            raise ContractError(f"negative for {query_id} shares the query's model")
        if len(set(models)) != len(models):
            raise ContractError(f"negatives for {query_id} repeat a model")
