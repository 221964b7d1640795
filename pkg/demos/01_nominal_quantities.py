"""
Nominal MDP quantities
======================

Values, occupancy, occupation measure and Q-values of a fixed policy, all
from one LU factorization of (I - gamma P^pi).
"""
import numpy as np

from lprmdp import nominal_eval, policy_matrices, q_value, random_mdp, uniform_policy, validate_mdp
from lprmdp.bench import make_rng

m = random_mdp(4, 2, 0.9, make_rng(0))
print("violations:", validate_mdp(m))

pi = uniform_policy(4, 2)
P_pi, R_pi = policy_matrices(m, pi)
print("P^pi rows sum to", P_pi.sum(axis=1))

ev = nominal_eval(m, pi)
print("v   =", ev.value)
print("d   =", ev.occupation, "mass", ev.occupation.sum())  # 1/(1-gamma) = 10
print("J   =", ev.ret, "=", ev.occupation @ R_pi)

# Q averaged by the policy gives back v
Q = q_value(m, pi, m.R)
print("max |pi.Q - v| =", np.abs((pi * Q).sum(axis=1) - ev.value).max())
