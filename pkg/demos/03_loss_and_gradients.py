"""Walk the pairwise binary-constrained loss along an interpolation path.

The loss has three parts: a pull term for matching pairs (squared
distance), a hinged push term for non-matching pairs (active only inside
the margin c), and a quantization penalty drawing every embedding toward
its sign vector. The auxiliary sign codes make the binary constraint
separable: with the head fixed, the optimal codes are just sign(f).
"""

import numpy as np

from binhash import LossParams, pair_grad, pair_loss

params = LossParams(c=2.0, alpha=1.0)
f_i = np.array([0.9, -1.1, 0.8])
b_i = np.sign(f_i)

print("matching pair: loss as f_j slides away from f_i")
print(f"{'offset':>8} {'similarity':>11} {'quantization':>13} {'total':>8}")
for offset in (0.0, 0.5, 1.0, 2.0):
    f_j = f_i + offset
    out = pair_loss(f_i, f_j, b_i, np.sign(f_j), 1, params)
    print(f"{offset:8.1f} {out.similarity_term:11.3f} {out.quantization_term:13.3f} {out.total:8.3f}")

print("\nnon-matching pair: hinge switches off once distance reaches c = 2")
print(f"{'distance':>9} {'hinge':>8} {'total':>8}")
for offset in (0.2, 0.6, 1.0, 1.5, 2.5):
    f_j = f_i + offset / np.sqrt(3.0)  # offset along (1,1,1) gives |f_i-f_j| = offset
    out = pair_loss(f_i, f_j, b_i, np.sign(f_j), 0, params)
    print(f"{np.linalg.norm(f_i - f_j):9.3f} {out.hinge_term:8.3f} {out.total:8.3f}")

# The analytic gradient agrees with finite differences.
f_j = np.array([0.2, 0.4, -0.3])
g_i, g_j = pair_grad(f_i, f_j, b_i, np.sign(f_j), 0, params)
h = 1e-6
numeric = np.zeros(3)
for idx in range(3):
    up, down = f_i.copy(), f_i.copy()
    up[idx] += h
    down[idx] -= h
    numeric[idx] = (
        pair_loss(up, f_j, b_i, np.sign(f_j), 0, params).total
        - pair_loss(down, f_j, b_i, np.sign(f_j), 0, params).total
    ) / (2 * h)
print(f"\nanalytic gradient  {np.round(g_i, 6)}")
print(f"finite differences {np.round(numeric, 6)}")
