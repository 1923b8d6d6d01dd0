"""Alternating optimization of the hashing head.

Each inner step first sets the auxiliary codes to the closed-form optimum
B = sign(F) over all training images (which can only lower the penalty
loss, since the pair terms ignore B and sign minimizes each quantization
term independently), then runs a fixed number of minibatch-SGD epochs on
the head with B held fixed. After every block of inner steps the
non-matching pairs are regenerated with the current codes; matching pairs
are mined once and never change. The checkpoint with the best validation
mAP wins.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureStore, ModelWorld, co_observed
from .errors import ContractError, DivergenceError, ProtocolError
from .loss import ZERO_BREAKDOWN, LossParams, PairLossBreakdown, pair_grad, pair_loss, quantization_stats
from .mining import (
    MiningParams,
    PairSet,
    assemble_batches,
    mine_matches,
    mine_negatives_offline,
    mine_negatives_online,
)
from .model import EmbeddingBatch, HashHead, embed_store, init_head
from .numkit import Rng
from .retrieval import CodeDatabase, binarize, evaluate_map


@dataclass(frozen=True)
class TrainSchedule:
    outer_loops: int = 4  # online-mining regenerations (K)
    inner_loops: int = 5  # code/head alternations per regeneration (T)
    epochs: int = 10  # SGD epochs per head step (np)
    lr: float = 1e-3
    momentum: float = 0.9
    queries_per_batch: int = 4
    seed: int = 7

    def __post_init__(self):
        if min(self.outer_loops, self.inner_loops, self.epochs, self.queries_per_batch) < 1:
            raise ContractError("outer_loops, inner_loops, epochs, queries_per_batch must be >= 1")
        if not (np.isfinite(self.lr) and self.lr >= 0):
            raise ContractError("lr must be finite and >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError("momentum must be in [0, 1)")


@dataclass
class TrainRecord:
    k: int
    t: int
    epochs_done: int  # cumulative SGD epochs at the end of this step
    total_loss: float
    similarity_term: float
    hinge_term: float
    quantization_term: float
    mean_abs_dev: float
    max_abs_dev: float
    val_map: float
    loss_before_b: float
    loss_after_b: float


@dataclass
class TrainReport:
    records: list[TrainRecord] = field(default_factory=list)
    best_checkpoint: tuple[int, int] = (0, 0)
    best_val_map: float = float("-inf")
    wall_clock: float = 0.0

    def csv_text(self) -> str:
        lines = ["k,t,epoch,total_loss,sim_term,hinge_term,quant_term,mean_abs_dev,val_map"]
        for r in self.records:
            lines.append(
                f"{r.k},{r.t},{r.epochs_done},{r.total_loss!r},{r.similarity_term!r},"
                f"{r.hinge_term!r},{r.quantization_term!r},{r.mean_abs_dev!r},{r.val_map!r}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        """JSON-ready summary; excludes wall-clock so the file is
        byte-identical across reruns of the same seeded configuration."""
        return {
            "best_checkpoint": {"k": self.best_checkpoint[0], "t": self.best_checkpoint[1]},
            "best_val_map": self.best_val_map,
            "code_steps": [
                {"k": r.k, "t": r.t, "loss_before": r.loss_before_b, "loss_after": r.loss_after_b}
                for r in self.records
            ],
        }


def b_step(batch: EmbeddingBatch) -> CodeDatabase:
    """Closed-form code update: B = sign(F) elementwise, sign(0) = +1."""
    return binarize(batch)


def pair_set_loss(
    emb: EmbeddingBatch, codes: CodeDatabase, pairs: PairSet, params: LossParams
) -> PairLossBreakdown:
    """Loss summed over every pair in a fixed id-ordered reduction."""
    row = {image_id: i for i, image_id in enumerate(emb.ids)}
    signs = codes.signs()
    crow = {image_id: i for i, image_id in enumerate(codes.ids)}
    total = ZERO_BREAKDOWN
    for pair in pairs.all_pairs():
        qi, oi = row[pair.query_id], row[pair.other_id]
        total = total + pair_loss(
            emb.f[qi],
            emb.f[oi],
            signs[crow[pair.query_id]],
            signs[crow[pair.other_id]],
            pair.y,
            params,
        )
    return total


def w_step(
    head: HashHead,
    store: FeatureStore,
    pairs: PairSet,
    codes: CodeDatabase,
    loss_params: LossParams,
    sched: TrainSchedule,
    rng: Rng,
    k: int = 1,
    t: int = 1,
) -> HashHead:
    """Minibatch SGD with classical momentum on the head, codes held fixed.

    The batch gradient is the mean of the pair gradients backpropagated
    through both affine layers; velocities start at zero for each call.
    """
    for pair in pairs.all_pairs():
        for image_id in (pair.query_id, pair.other_id):
            if image_id not in codes:
                raise ContractError(f"codes do not cover image {image_id} referenced by pairs")
    head = head.copy()
    signs = codes.signs()
    code_row = {image_id: i for i, image_id in enumerate(codes.ids)}
    velocity = [np.zeros_like(a) for a in (head.w1, head.b1, head.w2, head.b2)]

    for epoch in range(1, sched.epochs + 1):
        batches = assemble_batches(pairs, sched.queries_per_batch, rng.derive("epoch", k, t, epoch))
        for batch_index, batch in enumerate(batches):
            image_ids = list(dict.fromkeys(i for p in batch for i in (p.query_id, p.other_id)))
            local = {image_id: i for i, image_id in enumerate(image_ids)}
            x = store.features[[store.row(i) for i in image_ids]]
            hidden = x @ head.w1 + head.b1
            f = hidden @ head.w2 + head.b2

            grad_f = np.zeros_like(f)
            batch_loss = 0.0
            for pair in batch:
                qi, oi = local[pair.query_id], local[pair.other_id]
                b_q = signs[code_row[pair.query_id]]
                b_o = signs[code_row[pair.other_id]]
                batch_loss += pair_loss(f[qi], f[oi], b_q, b_o, pair.y, loss_params).total
                g_q, g_o = pair_grad(f[qi], f[oi], b_q, b_o, pair.y, loss_params)
                grad_f[qi] += g_q
                grad_f[oi] += g_o
            grad_f /= len(batch)

            grad_w2 = hidden.T @ grad_f
            grad_b2 = grad_f.sum(axis=0)
            grad_hidden = grad_f @ head.w2.T
            grad_w1 = x.T @ grad_hidden
            grad_b1 = grad_hidden.sum(axis=0)

            params = (head.w1, head.b1, head.w2, head.b2)
            grads = (grad_w1, grad_b1, grad_w2, grad_b2)
            for vel, param, grad in zip(velocity, params, grads):
                vel *= sched.momentum
                vel -= sched.lr * grad
                param += vel

            if not np.isfinite(batch_loss) or not all(np.isfinite(p).all() for p in params):
                raise DivergenceError("non-finite loss or parameter", k, t, epoch, batch_index)
    return head


def validate_map(
    head: HashHead,
    world: ModelWorld,
    store: FeatureStore,
    tau: int,
    threads: int = 1,
    query_split: str = "validation_query",
) -> float:
    """mAP of binary-code retrieval for the given query split against the
    database split; relevance = same model and co-observation >= tau.
    Queries with no relevant database image are skipped."""
    query_ids = world.split_ids(query_split)
    if not query_ids:
        raise ProtocolError(f"world has no {query_split} images")
    codes = binarize(embed_store(head, store))

    def is_relevant(query_id: str, image_id: str) -> bool:
        return (
            world.image(query_id).model_id == world.image(image_id).model_id
            and co_observed(world, query_id, image_id) >= tau
        )

    return evaluate_map(codes, query_ids, world.database_ids, is_relevant, threads=threads)


def train(
    world: ModelWorld,
    store: FeatureStore,
    code_len: int,
    mining_params: MiningParams | None = None,
    loss_params: LossParams | None = None,
    schedule: TrainSchedule | None = None,
    threads: int = 1,
    log=None,
) -> tuple[HashHead, TrainReport]:
    """Full training: PCA init, offline mining, alternating code/head steps
    with per-step validation, online negative regeneration between blocks.

    Returns the checkpoint with the highest validation mAP (earliest step on
    ties) and the per-step report. Deterministic given (world, store,
    parameters, seed).
    """
    mining_params = mining_params or MiningParams()
    loss_params = loss_params or LossParams.for_code_len(code_len)
    schedule = schedule or TrainSchedule()
    started = time.perf_counter()

    master = Rng(schedule.seed)
    head = init_head(store, code_len)
    matches = mine_matches(world, master.derive("matches"), mining_params.tau)
    negatives = mine_negatives_offline(
        world, store, mining_params, master.derive("negatives", 0)
    )
    pairs = PairSet(matches, negatives, generation=0)

    report = TrainReport()
    best_head = head.copy()
    prev_codes = binarize(embed_store(head, store))

    for k in range(1, schedule.outer_loops + 1):
        for t in range(1, schedule.inner_loops + 1):
            emb = embed_store(head, store)
            loss_before = pair_set_loss(emb, prev_codes, pairs, loss_params).total
            codes = b_step(emb)
            loss_after = pair_set_loss(emb, codes, pairs, loss_params).total

            head = w_step(
                head, store, pairs, codes, loss_params, schedule,
                master.derive("sgd"), k, t,
            )

            emb = embed_store(head, store)
            breakdown = pair_set_loss(emb, codes, pairs, loss_params)
            mean_dev, max_dev = quantization_stats(emb.f)
            val = validate_map(head, world, store, mining_params.tau, threads=threads)
            record = TrainRecord(
                k, t,
                epochs_done=((k - 1) * schedule.inner_loops + t) * schedule.epochs,
                total_loss=breakdown.total,
                similarity_term=breakdown.similarity_term,
                hinge_term=breakdown.hinge_term,
                quantization_term=breakdown.quantization_term,
                mean_abs_dev=mean_dev,
                max_abs_dev=max_dev,
                val_map=val,
                loss_before_b=loss_before,
                loss_after_b=loss_after,
            )
            report.records.append(record)
            if val > report.best_val_map:
                report.best_val_map = val
                report.best_checkpoint = (k, t)
                best_head = head.copy()
            if log is not None:
                log(
                    f"k={k} t={t} loss={breakdown.total:.4f} "
                    f"dev={mean_dev:.4f} val_map={val:.4f}"
                )
            prev_codes = codes

        if k < schedule.outer_loops:
            current_codes = binarize(embed_store(head, store))
            negatives = mine_negatives_online(
                world, current_codes, mining_params, master.derive("negatives", k)
            )
            pairs = PairSet(matches, negatives, generation=k)

    report.wall_clock = time.perf_counter() - started
    return best_head, report
