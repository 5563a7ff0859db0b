"""Why the exponent at a hyperbolic critical pair looks positive in floating point.

At m = 0, V = 1/sqrt(2), E = sqrt(2) + 1/sqrt(2) one site matrix H is
hyperbolic and the other, R, satisfies R^2 = -1 and R H R^-1 = H^-1. The
product therefore walks along the two eigenlines of H without drift, and the
exact exponent is 0. The norm still reaches lambda^|walk|. Rounding mixes the
eigenlines and this growth turns into an apparent positive exponent.

    python3 demos/critical_pair_rounding.py
"""
import math

import numpy as np

from bernoulli_dirac.model import DiracParams, PotentialSpec
from bernoulli_dirac.transfer import lyapunov, single_step

V = 1 / math.sqrt(2)
E = math.sqrt(2) + V
params = DiracParams(0.0, 1.0)
H = single_step(E, -V, params).matrix.real
R = single_step(E, V, params).matrix.real
print("trace H =", np.trace(H), " trace R =", np.trace(R))
print("R^2 =\n", R @ R)
print("R H R^-1 - H^-1 =\n", R @ H @ np.linalg.inv(R) - np.linalg.inv(H))
print("largest eigenvalue of H:", max(abs(np.linalg.eigvals(H))))

for n in (10**3, 10**4, 10**5, 10**6):
    est = lyapunov(E, params, PotentialSpec.bernoulli(V), n, 8, seed=0)
    print(f"n = {n:>8d}: gamma = {est.gamma:.4f} +- {est.stderr:.4f}")
print("For growing precision see tests/oracles/critical_pair_precision.py")
