"""Mine matching and non-matching training pairs from a world.

Matching pairs come from co-observation: one uniformly sampled same-model
image that shares at least tau points with the query. Non-matching pairs
are hard negatives: the k nearest foreign-model images form a pool, and m
are sampled at random with at most one image per model. Sampling randomly
from the pool, instead of always taking the hardest, avoids the bad local
minima that hardest-negative training is known to produce.
"""

from collections import Counter

from binhash import (
    MiningParams,
    PairSet,
    Rng,
    WorldGenParams,
    dump_pairs,
    generate_world,
    mine_matches,
    mine_negatives_offline,
)

world, store = generate_world(
    WorldGenParams(
        num_models=10, images_per_model=5, points_per_model=80, obs_fraction=0.5,
        feature_dim=16, cluster_spread=1.0, noise_sigma=0.5, seed=77,
    )
)
params = MiningParams(k=8, m=3, tau=10)
rng = Rng(99)

matches = mine_matches(world, rng.derive("matches"), params.tau)
negatives = mine_negatives_offline(world, store, params, rng.derive("negatives", 0))
pairs = PairSet(matches, negatives, generation=0)

print("matches (query -> co-observing same-model image):")
for pair in matches[:5]:
    print(f"  {pair.query_id} -> {pair.other_id}")

query = matches[0].query_id
print(f"\nnegatives for {query} (each from a different foreign model):")
for pair in negatives[query]:
    print(f"  {pair.other_id} (model {world.image(pair.other_id).model_id})")

# Reseeding changes which pool members get sampled; over many seeds every
# pool member shows up, not just the hardest.
counts = Counter()
for seed in range(300):
    negs = mine_negatives_offline(world, store, params, Rng(seed))
    counts.update(p.other_id for p in negs[query])
print(f"\npool members sampled across 300 reseeds for {query}:")
for image_id, n in counts.most_common():
    print(f"  {image_id}: {n}")

dump_pairs(pairs, "/tmp/demo_pairs.jsonl")
print("\naudit dump written to /tmp/demo_pairs.jsonl (one JSON object per pair)")
