"""Finite-volume eigenproblems, Green's functions and related identities."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .model import (
    DiracParams,
    LatticeWindow,
    OperatorMatrix,
    PotentialSpec,
    Realization,
    SpinorState,
    build_dirac,
    build_schrodinger_limit,
    index_of,
    sample_realization,
)
from .transfer import transfer_matrix

__all__ = [
    "DENSE_SITE_LIMIT",
    "EigenDecomposition",
    "GreensColumn",
    "DecayFit",
    "WegnerResult",
    "SpectrumTooCloseError",
    "eigensolve",
    "greens_column",
    "greens_transfer_residual",
    "reconstruct_eigenfunction_residual",
    "decay_fit",
    "wegner_probability",
    "wegner_estimate",
    "wegner_hit",
    "nonrel_resolvents",
    "nonrel_limit_error",
]

DENSE_SITE_LIMIT = 2000


class SpectrumTooCloseError(ValueError):
    """The energy sits on (or within 1e-8 of) the spectrum of a restricted operator."""


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Sorted eigenvalues and orthonormal eigenvectors (columns of ``vectors``)."""

    window: LatticeWindow
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.eigenvalues.size

    def state(self, j: int) -> SpinorState:
        return SpinorState.from_vector(self.window, self.vectors[:, j])

    def pair(self, j: int) -> tuple[float, SpinorState]:
        return float(self.eigenvalues[j]), self.state(j)


@dataclass(frozen=True, eq=False)
class GreensColumn:
    """``(G+(z; n), G-(z; n))``: the resolvent applied to the upper delta at ``source``."""

    z: complex
    window: LatticeWindow
    values: np.ndarray
    source: int = 0

    def at(self, n: int) -> np.ndarray:
        if n not in self.window:
            return np.zeros(2, dtype=complex)
        return self.values[n - self.window.n_min]

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class DecayFit:
    center: int
    rate: float
    fit_quality: float


@dataclass(frozen=True)
class WegnerResult:
    probability: float
    stderr: float
    exact: bool
    samples: int
    threshold: float


def eigensolve(op: OperatorMatrix, max_sites: int = DENSE_SITE_LIMIT) -> EigenDecomposition:
    """Full symmetric eigendecomposition of a banded operator.

    Windows larger than ``max_sites`` are refused; use the Chebyshev
    propagator or Green's function solves for those.
    """
    if op.window.size > max_sites:
        raise ValueError(
            f"window has {op.window.size} sites, dense limit is {max_sites}; "
            "use a Chebyshev propagator or banded Green's function solves instead"
        )
    w, v = sla.eig_banded(op.upper_band(), lower=False)
    return EigenDecomposition(op.window, w, v)


def greens_column(op: OperatorMatrix, z: complex, source: int = 0) -> GreensColumn:
    """Solve ``(D - z) G = delta_source^+`` by a banded complex solve."""
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("Green's function needs Im z != 0")
    rhs = np.zeros(op.dim, dtype=complex)
    rhs[index_of(op.window, source, "+")] = 1.0
    bw = op.bandwidth
    try:
        g = sla.solve_banded((bw, bw), op.banded(z), rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - Im z != 0 keeps D - z invertible
        raise np.linalg.LinAlgError(f"resolvent solve failed at z={z}") from exc
    return GreensColumn(z, op.window, g.reshape(-1, 2), source)


def greens_transfer_residual(op: OperatorMatrix, z: complex) -> float:
    """Worst mismatch between the Green's column and its transfer-matrix recursion.

    For ``n >= 1`` compares ``(G+(n), G-(n-1))`` with ``T(z; n, 1) (G+(1), G-(0))``;
    for ``n <= 0`` with ``T(z; n, 0) (G+(0), G-(-1))``. Values outside the window
    are zero (zero boundary conditions). Each site's mismatch is divided by
    ``||G|| * max(1, ||T||)``, the size of the rounding error the product can
    amplify.
    """
    if op.params is None or op.realization is None or op.kind != "dirac":
        raise ValueError("needs a Dirac operator built from a realization")
    w = op.window
    if 0 not in w:
        raise ValueError("the window must contain the source site 0")
    if w.size == 1:
        return 0.0
    col = greens_column(op, z)
    scale = col.norm()
    real = op.realization
    worst = 0.0

    def pair(n):
        return np.array([col.at(n)[0], col.at(n - 1)[1]])

    if 1 in w:
        seed = pair(1)
        for n in range(2, w.n_max + 1):
            t = transfer_matrix(z, real, n, 1, op.params)
            r = np.linalg.norm(pair(n) - t @ seed) / (scale * max(1.0, np.linalg.norm(t, 2)))
            worst = max(worst, r)
    seed = pair(0)
    for n in range(w.n_min, 0):
        t = transfer_matrix(z, real, n, 0, op.params)
        r = np.linalg.norm(pair(n) - t @ seed) / (scale * max(1.0, np.linalg.norm(t, 2)))
        worst = max(worst, r)
    return float(worst)


def _block_column_solve(op: OperatorMatrix, E: float, cols: list[int]) -> np.ndarray:
    rhs = np.zeros((op.dim, len(cols)))
    for j, i in enumerate(cols):
        rhs[i, j] = 1.0
    bw = op.bandwidth
    return sla.solve_banded((bw, bw), op.banded(E), rhs)


def reconstruct_eigenfunction_residual(big_op: OperatorMatrix, eigenpair: tuple,
                                       inner: LatticeWindow) -> float:
    """Relative error of rebuilding ``Psi`` at the center of ``inner`` from its boundary values.

    Uses ``Psi(n) = -G(n, l1) [[0, c], [0, 0]] Psi(l1 - 1) - G(n, l2) [[0, 0], [c, 0]] Psi(l2 + 1)``
    with ``G`` the resolvent of the operator restricted to ``inner = [l1, l2]``.
    Raises :class:`SpectrumTooCloseError` when ``E`` is within ``1e-8`` of the
    restricted spectrum.
    """
    E, psi = eigenpair
    outer = big_op.window
    if not (outer.n_min < inner.n_min and inner.n_max < outer.n_max):
        raise ValueError("inner window must lie strictly inside the operator window")
    params = big_op.params
    c = params.c
    inner_op = build_dirac(params, big_op.realization.restrict(inner))
    inner_spec = sla.eigvalsh_tridiagonal(inner_op.diagonals[0], inner_op.diagonals[1])
    if np.min(np.abs(inner_spec - E)) < 1e-8:
        raise SpectrumTooCloseError(
            f"E={E} lies within 1e-8 of the spectrum on [{inner.n_min}, {inner.n_max}]; choose another box"
        )
    l1, l2 = inner.n_min, inner.n_max
    n = (l1 + l2) // 2
    g = _block_column_solve(inner_op, float(E),
                            [index_of(inner, l1, "+"), index_of(inner, l1, "-"),
                             index_of(inner, l2, "+"), index_of(inner, l2, "-")])
    rows = [index_of(inner, n, "+"), index_of(inner, n, "-")]
    g_l1 = g[rows][:, 0:2]
    g_l2 = g[rows][:, 2:4]
    hop_left = np.array([[0.0, c], [0.0, 0.0]])
    hop_right = np.array([[0.0, 0.0], [c, 0.0]])
    rebuilt = -g_l1 @ hop_left @ psi.at(l1 - 1) - g_l2 @ hop_right @ psi.at(l2 + 1)
    ref = psi.at(n)
    return float(np.linalg.norm(ref - rebuilt) / np.linalg.norm(ref))


def decay_fit(vec: SpinorState, exclude: int = 5, floor: float = 1e-13) -> DecayFit:
    """Exponential decay rate of ``||phi(n)||`` away from its maximum.

    Least squares of ``ln||phi(n)||`` against ``|n - center|`` over sites whose
    norm exceeds ``floor * max``; the ``exclude`` sites nearest each window
    edge are dropped. Negative slopes are reported as rate 0.
    """
    norms = vec.site_norms()
    if norms.size < 8:
        raise ValueError("decay fit needs at least 8 sites")
    peak = float(norms.max())
    if peak == 0.0:
        raise ValueError("decay fit needs a nonzero vector")
    sites = vec.window.sites
    center = int(sites[int(np.argmax(norms))])
    keep = norms > floor * peak
    if exclude > 0:
        keep[:exclude] = False
        keep[-exclude:] = False
    x = np.abs(sites[keep] - center).astype(float)
    y = np.log(norms[keep])
    if x.size < 2 or np.ptp(x) == 0.0:
        return DecayFit(center, 0.0, 1.0)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    quality = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return DecayFit(center, max(0.0, float(-slope)), quality)


def _distance_to_spectrum(E: float, params: DiracParams, values: np.ndarray) -> float:
    mc2 = params.m * params.c ** 2
    d = np.empty(2 * values.size)
    d[0::2] = values + mc2
    d[1::2] = values - mc2
    e = np.empty(2 * values.size - 1)
    e[0::2] = -params.c
    e[1::2] = params.c
    if d.size == 2:
        ev = np.linalg.eigvalsh(np.array([[d[0], e[0]], [e[0], d[1]]]))
    else:
        ev = sla.eigvalsh_tridiagonal(d, e)
    return float(np.min(np.abs(ev - E)))


def wegner_estimate(E: float, L: int, theta: float, tau: float, params: DiracParams,
                    spec: PotentialSpec, n_real: int = 2000, seed: int = 0,
                    enumerate_limit: int = 16) -> WegnerResult:
    """Probability that the spectrum on ``Lambda_L(0)`` comes within ``exp(-tau L^theta)`` of ``E``.

    Exact enumeration over all sign patterns when the box has at most
    ``enumerate_limit`` sites, Monte Carlo over ``n_real`` realizations otherwise.
    """
    if not (0.0 < theta < 1.0) or not (tau > 0.0):
        raise ValueError("need theta in (0, 1) and tau > 0")
    window = LatticeWindow.centered(L)
    threshold = math.exp(-tau * float(L) ** theta)
    if spec.kind == "bernoulli" and window.size <= enumerate_limit:
        prob = 0.0
        for signs in itertools.product((1.0, -1.0), repeat=window.size):
            s = np.array(signs)
            n_plus = int(np.sum(s > 0))
            weight = spec.p ** n_plus * (1.0 - spec.p) ** (window.size - n_plus)
            if weight == 0.0:
                continue
            if _distance_to_spectrum(E, params, spec.V * s) <= threshold:
                prob += weight
        return WegnerResult(min(1.0, prob), 0.0, True, 2 ** window.size, threshold)
    hits = 0
    for r in range(n_real):
        real = sample_realization(spec, window, seed, r)
        if _distance_to_spectrum(E, params, real.values) <= threshold:
            hits += 1
    prob = hits / n_real
    return WegnerResult(prob, math.sqrt(prob * (1.0 - prob) / n_real), False, n_real, threshold)


def wegner_hit(E: float, L: int, theta: float, tau: float, params: DiracParams,
               spec: PotentialSpec, seed: int, realization: int) -> bool:
    """Whether one sampled box spectrum comes within ``exp(-tau L^theta)`` of ``E``."""
    window = LatticeWindow.centered(L)
    real = sample_realization(spec, window, seed, realization)
    return _distance_to_spectrum(E, params, real.values) <= math.exp(-tau * float(L) ** theta)


def wegner_probability(E: float, L: int, theta: float, tau: float, params: DiracParams,
                       spec: PotentialSpec, n_real: int = 2000, seed: int = 0) -> float:
    return wegner_estimate(E, L, theta, tau, params, spec, n_real, seed).probability


def nonrel_resolvents(c: float, m: float, z: complex,
                      realization: Realization) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(D(c) - m c^2 - z)^{-1}`` and ``Lambda (H_inf - z)^{-1}`` on one window."""
    if not (m > 0.0):
        raise ValueError("the nonrelativistic limit needs m > 0")
    if complex(z).imag == 0.0:
        raise ValueError("need Im z != 0")
    dirac = build_dirac(DiracParams(m, c), realization).dense()
    eye = np.eye(dirac.shape[0])
    r_dirac = np.linalg.solve(dirac - (m * c * c + z) * eye, eye.astype(complex))
    h_inf = build_schrodinger_limit(m, realization).dense()
    r_limit = np.linalg.solve(h_inf - z * eye, eye.astype(complex))
    r_limit[1::2, :] = 0.0
    return r_dirac, r_limit


def nonrel_limit_error(c: float, m: float, z: complex, realization: Realization) -> float:
    """Operator 2-norm distance between the mass-shifted Dirac resolvent and its limit."""
    r_dirac, r_limit = nonrel_resolvents(c, m, z, realization)
    return float(np.linalg.norm(r_dirac - r_limit, 2))
