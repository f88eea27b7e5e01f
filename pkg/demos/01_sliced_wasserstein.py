# Sliced Wasserstein distance between two point clouds, and why it can stand in
# for an exact matching when the samples of two views are not aligned.

import numpy as np

from hotmvl.ot import brute_force_matching, sample_projections, sliced_wasserstein

rng = np.random.default_rng(0)

# two clouds of 7 points in R^3, columns are samples
z1 = rng.standard_normal((3, 7))
z2 = rng.standard_normal((3, 7)) + 0.5

proj = sample_projections(8, 3, seed=1)
sw, g1, g2 = sliced_wasserstein(z1, z2, proj)
best, perm = brute_force_matching(z1, z2)
print(f"sliced Wasserstein     {sw:.4f}")
print(f"best exact matching    {best:.4f}  (perm {perm})")

# the sliced value never exceeds the matching cost: every 1-D projection of
# the best matching is itself a (possibly suboptimal) 1-D matching
assert sw <= best + 1e-12

# shuffling the samples of one view changes nothing, so no alignment is needed
shuffled = z2[:, rng.permutation(7)]
print("after shuffling z2    ", f"{sliced_wasserstein(z1, shuffled, proj)[0]:.4f}")

# a few gradient steps on z1 pull its projections onto those of z2
for step in range(200):
    sw, g1, _ = sliced_wasserstein(z1, z2, proj)
    z1 -= 0.1 * g1
print(f"after 200 steps        {sw:.2e}")
