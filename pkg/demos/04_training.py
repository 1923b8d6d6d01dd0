"""Train a hashing head end to end and watch the alternation work.

Each inner step snaps the auxiliary codes to sign(f) (closed form, never
increases the loss) and then runs SGD epochs on the head with the codes
fixed. After each block of inner steps, non-matching pairs are regenerated
using Hamming distances under the current codes, so the negatives stay
hard as the representation moves. The best checkpoint by validation mAP
wins.
"""

from binhash import (
    MiningParams,
    TrainSchedule,
    WorldGenParams,
    embed_store,
    generate_world,
    init_head,
    quantization_stats,
    train,
    validate_map,
)

world, store = generate_world(
    WorldGenParams(
        num_models=12, images_per_model=8, points_per_model=100, obs_fraction=0.5,
        feature_dim=32, cluster_spread=1.0, noise_sigma=1.0, seed=42,
    )
)
code_len = 12
mining = MiningParams(k=20, m=4, tau=10)
schedule = TrainSchedule(outer_loops=3, inner_loops=3, epochs=5, seed=42)

baseline = validate_map(init_head(store, code_len), world, store, mining.tau)
print(f"sign-of-PCA baseline mAP: {baseline:.4f}\n")

best_head, report = train(
    world, store, code_len, mining_params=mining, schedule=schedule,
    log=print,
)

print(f"\nbest checkpoint: outer={report.best_checkpoint[0]} "
      f"inner={report.best_checkpoint[1]} mAP={report.best_val_map:.4f} "
      f"(baseline {baseline:.4f})")

dev_init, _ = quantization_stats(embed_store(init_head(store, code_len), store).f)
dev_best, _ = quantization_stats(embed_store(best_head, store).f)
print(f"mean |sign deviation| of embeddings: {dev_init:.3f} at init "
      f"-> {dev_best:.3f} at best checkpoint")

print("\nper-step loss decomposition (first block):")
print(f"{'k':>2} {'t':>2} {'total':>10} {'pull':>9} {'push':>9} {'quant':>9} {'val mAP':>8}")
for r in report.records[:3]:
    print(f"{r.k:2d} {r.t:2d} {r.total_loss:10.1f} {r.similarity_term:9.1f} "
          f"{r.hinge_term:9.1f} {r.quantization_term:9.1f} {r.val_map:8.4f}")
