"""
L_p geometry
============

The generalized standard deviation sigma_p and its dual: the zero-sum vector
k in the unit p-ball that maximizes <k, c> attains sigma_q(c).
"""
import numpy as np

from lprmdp import conjugate, dual_vector, gstd, mean_project, sample_B, sample_K
from lprmdp.bench import make_rng

c = np.array([5.0, 3.0, 1.0, 0.5])
for p in (1, 1.5, 2, 3, np.inf):
    k, value = dual_vector(c, p)
    print(f"p={p:>4}: k={np.round(k, 3)}  <k,c>={value:.4f}  sigma_q={gstd(c, conjugate(p)):.4f}")

print(mean_project([1.0, 0.0, 0.0]))  # (2/3, -1/3, -1/3)

rng = make_rng(1)
print("sample k:", sample_K(4, 2, rng), "sample b:", sample_B(2, 2, 2, 0.1, rng), sep="\n")
