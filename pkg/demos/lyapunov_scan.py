"""Lyapunov exponent across energy for the massless and massive operators.

At m = 0 the exponent dips to zero at E = +-V, where one of the two
one-site transfer matrices is the identity. With a mass the dip disappears.
Writes ``lyapunov_scan.dat`` (columns E, gamma(m=0), gamma(m=1)).

    python3 demos/lyapunov_scan.py
"""
import numpy as np

from bernoulli_dirac.model import DiracParams, PotentialSpec
from bernoulli_dirac.transfer import lyapunov, predict_localization

V = 0.5
spec = PotentialSpec.bernoulli(V)
energies = np.linspace(-1.5, 1.5, 31)
energies = np.union1d(energies, [-V, V])

rows = []
print(f"{'E':>8} {'gamma m=0':>12} {'gamma m=1':>12}  prediction(m=0)")
for E in energies:
    g0 = lyapunov(E, DiracParams(0.0, 1.0), spec, 2 * 10**5, 4, seed=1).gamma
    g1 = lyapunov(E, DiracParams(1.0, 1.0), spec, 2 * 10**5, 4, seed=1).gamma
    verdict = predict_localization(E, V, 0.0, 1.0).verdict.value
    rows.append((E, g0, g1))
    print(f"{E:8.3f} {g0:12.5f} {g1:12.5f}  {verdict}")

np.savetxt("lyapunov_scan.dat", rows, header="E gamma_m0 gamma_m1")
