"""
Robust policy gradient
======================

Each step evaluates the policy, takes the gradient at its worst kernel, and
projects back onto the simplex.
"""
import numpy as np

from lprmdp import UncertaintySpec, binary_search_evaluate, random_mdp, rpg_run, uniform_policy
from lprmdp.bench import make_rng

m = random_mdp(5, 2, 0.9, make_rng(11))
spec = UncertaintySpec(2, 0.005)

trace = rpg_run(m, spec, uniform_policy(5, 2), max_iters=100)
ret = trace.column("robust_return")
print("robust return:", ret[0], "->", ret[-1])
print("final policy:\n", np.round(trace.final_policy, 3))
print(trace.to_csv().splitlines()[:4])

final = binary_search_evaluate(m, trace.final_policy, spec, tol=1e-8)
print("final robust return at tol 1e-8:", final.robust_return)
