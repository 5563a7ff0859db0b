"""Transfer matrices, Lyapunov exponents and the zero-exponent classifier."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .model import DiracParams, PotentialSpec, Realization, site_uniforms

__all__ = [
    "Transfer2",
    "MatrixClass",
    "LyapunovEstimate",
    "Verdict",
    "LocalizationPrediction",
    "single_step",
    "product",
    "transfer_matrix",
    "classify",
    "lyapunov",
    "lyapunov_realization",
    "predict_localization",
    "critical_pairs",
    "perturbation_matrix",
    "perturbation_identity_residual",
    "critical_window_energies",
    "critical_window_supremum",
    "fit_growth_constant",
]


@dataclass(frozen=True, eq=False)
class Transfer2:
    """2x2 complex matrix; unimodular for real energies."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrix, dtype=complex)
        if a.shape != (2, 2):
            raise ValueError("transfer matrix must be 2x2")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def det(self) -> complex:
        a = self.matrix
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]

    @property
    def trace(self) -> complex:
        return self.matrix[0, 0] + self.matrix[1, 1]

    def norm(self) -> float:
        """Operator 2-norm."""
        return float(np.linalg.norm(self.matrix, 2))

    def __matmul__(self, other: "Transfer2") -> "Transfer2":
        return Transfer2(self.matrix @ other.matrix)


class MatrixClass(enum.Enum):
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class LyapunovEstimate:
    """Mean of ``ln||T(E; n, 1)|| / n`` over realizations.

    The raw mean is reported without clipping, so it can sit slightly below
    zero when the exponent vanishes.
    """

    gamma: float
    stderr: float
    steps: int
    realizations: int
    samples: tuple = ()

    @property
    def degenerate(self) -> bool:
        return self.realizations < 2


class Verdict(enum.Enum):
    POSITIVE = "PositiveLyapunov"
    ZERO = "ZeroLyapunov"


@dataclass(frozen=True)
class LocalizationPrediction:
    verdict: Verdict
    reason: Optional[str] = None  # "CriticalEnergy" or "CriticalPair" for ZERO
    detail: str = ""

    @property
    def positive(self) -> bool:
        return self.verdict is Verdict.POSITIVE


def single_step(E: complex, site_value: float, params: DiracParams) -> Transfer2:
    """One-site transfer matrix mapping ``(psi+(n), psi-(n-1))`` to ``(psi+(n+1), psi-(n))``."""
    m, c = params.m, params.c
    mc2 = m * c * c
    alpha = E - site_value
    return Transfer2(np.array([
        [1.0 + (mc2 * mc2 - alpha * alpha) / (c * c), (mc2 + alpha) / c],
        [(mc2 - alpha) / c, 1.0],
    ], dtype=complex))


def _site_slice(realization: Realization, k: int, n: int) -> np.ndarray:
    w = realization.window
    if n > k and (k not in w or (n - 1) not in w):
        raise IndexError(f"sites [{k}, {n - 1}] not covered by the realization window")
    return realization.values[k - w.n_min:n - w.n_min]


def product(E: complex, realization: Realization, k: int, n: int,
            params: DiracParams = DiracParams()) -> tuple[Transfer2, float]:
    """Transfer matrix from site ``k`` to site ``n >= k``.

    Returns ``(normalized, log_scale)`` with the true product equal to
    ``normalized * exp(log_scale)``.
    """
    if n < k:
        raise ValueError("product needs k <= n")
    if n == k:
        return Transfer2(np.eye(2)), 0.0
    vals = np.ascontiguousarray(_site_slice(realization, k, n), dtype=np.float64)
    mat, log_scale = _kernels.complex_product(complex(E), vals, float(params.m), float(params.c))
    return Transfer2(mat), float(log_scale)


def transfer_matrix(E: complex, realization: Realization, n: int, k: int,
                    params: DiracParams = DiracParams()) -> np.ndarray:
    """Unscaled ``T(E; n, k)``; for ``n < k`` this is the inverse of ``T(E; k, n)``."""
    if n >= k:
        t, s = product(E, realization, k, n, params)
        return t.matrix * math.exp(s)
    t, s = product(E, realization, n, k, params)
    a = t.matrix
    # inverse of a determinant-one matrix is its adjugate, and adj(k A) = k adj(A)
    adj = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]])
    return adj * math.exp(s)


def classify(T: Transfer2, tol: Optional[float] = None) -> MatrixClass:
    """Elliptic, parabolic or hyperbolic by comparing ``|trace|`` with 2.

    The default band is ``1e-9 * max(1, |trace|)``.
    """
    if np.max(np.abs(T.matrix.imag)) > (tol if tol is not None else 1e-9):
        raise ValueError("classification needs a real transfer matrix")
    tr = abs(T.trace.real)
    if tol is None:
        tol = 1e-9 * max(1.0, tr)
    if tr < 2.0 - tol:
        return MatrixClass.ELLIPTIC
    if tr > 2.0 + tol:
        return MatrixClass.HYPERBOLIC
    return MatrixClass.PARABOLIC


def lyapunov_realization(E: float, params: DiracParams, spec: PotentialSpec,
                         n_steps: int, seed: int, realization: int) -> float:
    """``ln||T(E; n_steps + 1, 1)|| / n_steps`` for one disorder realization."""
    sites = np.arange(1, n_steps + 1)
    if spec.kind == "bernoulli":
        u = site_uniforms(seed, realization, sites)
        vals = np.where(u < spec.p, spec.V, -spec.V)
    elif spec.kind == "constant":
        vals = np.full(n_steps, spec.value)
    else:
        if len(spec.values) != n_steps:
            raise ValueError("explicit potential length must equal n_steps")
        vals = np.array(spec.values, dtype=float)
    lg = _kernels.log_norm_product(float(E), vals.astype(np.float64),
                                   float(params.m), float(params.c))
    return lg / n_steps


def lyapunov(E: float, params: DiracParams, spec: PotentialSpec, n_steps: int = 10**6,
             n_realizations: int = 16, seed: int = 0) -> LyapunovEstimate:
    """Monte Carlo estimate of the Lyapunov exponent at real energy ``E``.

    ``stderr`` is the sample standard deviation (``n - 1`` denominator) over
    realizations divided by ``sqrt(n_realizations)``; zero for one realization.
    """
    if n_steps < 1000:
        raise ValueError("lyapunov needs at least 1000 steps")
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    samples = np.array([lyapunov_realization(E, params, spec, n_steps, seed, r)
                        for r in range(n_realizations)])
    gamma = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n_realizations)) if n_realizations > 1 else 0.0
    return LyapunovEstimate(gamma, stderr, int(n_steps), int(n_realizations),
                            tuple(float(s) for s in samples))


def critical_pairs(m: float, c: float) -> tuple[float, list[float], float, list[float]]:
    """The two special amplitudes and their zero-exponent energies.

    Returns ``(V1, energies1, V2, energies2)`` with ``V1 = c/sqrt(2)``,
    ``energies1 = {+-c sqrt(2 + m^2 c^2) +- c/sqrt(2)}``,
    ``V2 = c sqrt(2 + m^2 c^2)`` and ``energies2 = [0]``.
    """
    root = c * math.sqrt(2.0 + (m * c) ** 2)
    v1 = c / math.sqrt(2.0)
    e1 = sorted({s1 * root + s2 * v1 for s1 in (1, -1) for s2 in (1, -1)})
    return v1, e1, root, [0.0]


def _close(x: float, y: float, scale: float) -> bool:
    return abs(x - y) <= 1e-9 * max(abs(x), abs(y), scale)


def predict_localization(E: float, V: float, m: float, c: float) -> LocalizationPrediction:
    """Zero/positive Lyapunov verdict from the transfer-matrix case analysis.

    Zero at ``E = +-V`` when ``m = 0`` and ``V`` in ``(0, c]``, ``V != c/sqrt(2)``
    (the identity/elliptic pair), and at the critical pairs of the special
    amplitudes ``c/sqrt(2)`` and ``c sqrt(2 + m^2 c^2)``. Positive otherwise.
    Comparisons use a relative tolerance of ``1e-9``.
    """
    if not (V > 0 and c > 0 and m >= 0):
        raise ValueError("need V > 0, c > 0, m >= 0")
    scale = max(1.0, c, V)
    v1, e1, v2, e2 = critical_pairs(m, c)
    if _close(V, v1, scale) and any(_close(E, e, scale) for e in e1):
        return LocalizationPrediction(Verdict.ZERO, "CriticalPair",
                                      f"V = c/sqrt(2), E = {E:.17g} is a critical pair")
    if _close(V, v2, scale) and any(_close(E, e, scale) for e in e2):
        return LocalizationPrediction(Verdict.ZERO, "CriticalPair",
                                      "V = c sqrt(2 + m^2 c^2), E = 0 is a critical pair")
    if (m == 0.0 and (V < c or _close(V, c, scale)) and not _close(V, v1, scale)
            and (_close(E, V, scale) or _close(E, -V, scale))):
        return LocalizationPrediction(
            Verdict.ZERO, "CriticalEnergy",
            "massless, one transfer matrix is the identity and the other elliptic/parabolic")
    return LocalizationPrediction(Verdict.POSITIVE, None, "no excluded energy")


def perturbation_matrix(E: float, zeta: complex, site_value: float, c: float) -> np.ndarray:
    """The matrix ``S`` with ``T(E + zeta) = T(E) - zeta S`` for a single site."""
    return (zeta / c ** 2) * np.array([[1.0, 0.0], [0.0, 0.0]]) + (1.0 / c) * np.array(
        [[2.0 * (E - site_value) / c, -1.0], [1.0, 0.0]])


def perturbation_identity_residual(E: float, zeta: complex, realization: Realization,
                                   k: int, n: int,
                                   params: DiracParams = DiracParams()) -> float:
    """Frobenius norm of ``T(E+zeta; n, k) - [T(E; n, k) - zeta sum_l ...]``."""
    if not n > k:
        raise ValueError("need n > k")
    vals = _site_slice(realization, k, n)
    steps0 = [single_step(E, v, params).matrix for v in vals]
    steps1 = [single_step(E + zeta, v, params).matrix for v in vals]
    # prefix[j] = T(E; k + j, k); suffix[j] = T(E + zeta; n, k + j)
    prefix = [np.eye(2, dtype=complex)]
    for s in steps0:
        prefix.append(s @ prefix[-1])
    # same multiplication order as prefix, so zeta = 0 cancels exactly
    lhs = np.eye(2, dtype=complex)
    for s in steps1:
        lhs = s @ lhs
    suffix = [np.eye(2, dtype=complex)] * (len(vals) + 1)
    for j in range(len(vals) - 1, -1, -1):
        suffix[j] = suffix[j + 1] @ steps1[j]
    total = np.zeros((2, 2), dtype=complex)
    for j, v in enumerate(vals):
        total += suffix[j + 1] @ perturbation_matrix(E, zeta, v, params.c) @ prefix[j]
    rhs = prefix[-1] - zeta * total
    return float(np.linalg.norm(lhs - rhs))


def critical_window_energies(center: float, half_width: float, n_energies: int = 33) -> np.ndarray:
    """Chebyshev-Lobatto points on ``[center - half_width, center + half_width]``."""
    if n_energies < 2:
        raise ValueError("need at least two energies")
    j = np.arange(n_energies)
    return center + half_width * np.cos(np.pi * j / (n_energies - 1))[::-1]


def critical_window_supremum(realization: Realization, N: int, lam: Optional[float],
                             params: DiracParams, V: float, sign: int = 1,
                             n_energies: int = 33, half_width: Optional[float] = None,
                             max_span: Optional[int] = None) -> float:
    """Largest ``||T(E; n, k)||`` near the massless critical energy ``E_V = sign * V``.

    Pairs range over ``0 <= k <= n <= N`` (optionally ``n - k <= max_span``)
    and energies over Chebyshev points of ``[E_V - w, E_V + w]`` with
    ``w = N**(-lam - 1/2)`` unless ``half_width`` is given.
    """
    if params.m != 0.0:
        raise ValueError("critical energies exist only for m = 0")
    c = params.c
    if not (0.0 < V <= c * (1 + 1e-12)) or _close(V, c / math.sqrt(2.0), max(1.0, c)):
        raise ValueError("V must lie in (0, c] and differ from c/sqrt(2)")
    if half_width is None:
        if lam is None:
            raise ValueError("give lam or half_width")
        half_width = float(N) ** (-lam - 0.5)
    vals = np.ascontiguousarray(_site_slice(realization, 0, N), dtype=np.float64)
    span = N if max_span is None else int(max_span)
    best = 0.0
    for E in critical_window_energies(sign * V, half_width, n_energies):
        best = max(best, _kernels.pair_supremum(float(E), vals, 0.0, float(c), span))
    return float(best)


def fit_growth_constant(supremum: float, delta: float, span: int) -> float:
    """Smallest ``C >= 1`` with ``supremum <= C exp(C delta span)``."""
    if supremum <= math.exp(delta * span):
        return 1.0
    f = lambda C: math.log(C) + C * delta * span - math.log(supremum)
    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
    return float(brentq(f, 1.0, hi))
