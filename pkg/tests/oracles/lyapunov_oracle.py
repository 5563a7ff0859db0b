"""Independent long-product estimate of the massless exponent at E = 0, V = 0.5.

Plain numpy vector iteration with its own random stream (PCG64), no code
shared with the package. Run once; the printed value is pinned in
``tests/test_transfer.py``.

    python3 tests/oracles/lyapunov_oracle.py
"""
import numpy as np

E, V, c = 0.0, 0.5, 1.0
STEPS, REALIZATIONS, BLOCK = 10**7, 32, 10**5


def main():
    rng = np.random.default_rng(20240601)
    x = np.ones(REALIZATIONS)
    y = np.zeros(REALIZATIONS)
    logs = np.zeros(REALIZATIONS)
    for _ in range(STEPS // BLOCK):
        signs = np.where(rng.random((BLOCK, REALIZATIONS)) < 0.5, 1.0, -1.0)
        alpha = E - V * signs
        t11 = 1.0 - alpha ** 2 / c ** 2
        t12 = alpha / c
        t21 = -alpha / c
        for i in range(BLOCK):
            x, y = t11[i] * x + t12[i] * y, t21[i] * x + y
            if i % 16 == 15:
                s = np.hypot(x, y)
                x /= s
                y /= s
                logs += np.log(s)
    logs += np.log(np.hypot(x, y))
    g = logs / STEPS
    print(f"gamma = {g.mean():.6f} +- {g.std(ddof=1) / np.sqrt(REALIZATIONS):.6f}")


if __name__ == "__main__":
    main()
