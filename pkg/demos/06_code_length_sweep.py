"""Sweep the code length and watch retrieval quality change.

Longer codes carry more information but spread the training signal over
more bits; short codes collide. The sweep fixes the world and the seed and
retrains per length, mirroring how code-length curves are produced for
retrieval benchmarks. (The CLI `report` subcommand does the same thing at
full scale and writes an L,map CSV.)
"""

from binhash import (
    MiningParams,
    TrainSchedule,
    WorldGenParams,
    co_observed,
    binarize,
    embed_store,
    evaluate_map,
    generate_world,
    train,
)

world, store = generate_world(
    WorldGenParams(
        num_models=10, images_per_model=6, points_per_model=80, obs_fraction=0.5,
        feature_dim=32, cluster_spread=1.0, noise_sigma=0.9, seed=15,
    )
)
mining = MiningParams(k=15, m=3, tau=10)
schedule = TrainSchedule(outer_loops=2, inner_loops=2, epochs=5, seed=15)

def relevant(q, other):
    return (world.image(q).model_id == world.image(other).model_id
            and co_observed(world, q, other) >= mining.tau)

print(f"{'bits':>5} {'mAP':>8}")
for code_len in (4, 8, 16, 32):
    head, _ = train(world, store, code_len, mining_params=mining, schedule=schedule)
    codes = binarize(embed_store(head, store))
    value = evaluate_map(codes, world.validation_queries, world.database_ids, relevant)
    print(f"{code_len:5d} {value:8.4f}")
