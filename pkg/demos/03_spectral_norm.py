"""
Maximizing ||A x|| over the nonnegative ball
============================================

Spectral candidates from the eigenvectors of A^T A, the certified bracket
around the optimum, and the local refiner.
"""
import time

import numpy as np

from lprmdp import local_refine, random_search, spectral_bounds, spectral_solve
from lprmdp.bench import make_rng

rng = make_rng(3)
A = rng.standard_normal((60, 60))

for order in ("zero", "first", "second"):
    sol = spectral_solve(A, 1.0, order)
    print(f"{order:>6}: {sol.value:.4f}")

sol = spectral_solve(A, 1.0)
ref = local_refine(A, 1.0, sol.x)
print("refined:", ref.value, "after", ref.steps, "steps")
print("bounds:", spectral_bounds(A))

t0 = time.perf_counter()
best, _ = random_search(A, 1.0, 10_000, rng)
print(f"random search: {best:.4f} in {time.perf_counter() - t0:.3f}s")

# entrywise positive matrices are solved exactly: the top singular vector is nonnegative
P = rng.random((5, 5))
print(spectral_solve(P).value, np.linalg.svd(P, compute_uv=False)[0])
