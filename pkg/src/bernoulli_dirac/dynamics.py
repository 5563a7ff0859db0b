"""Wavepacket propagation, position moments and their Laplace averages."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import jv

from .model import (
    DiracParams,
    LatticeWindow,
    OperatorMatrix,
    PotentialSpec,
    Realization,
    SpinorState,
    build_dirac,
    delta_state,
    index_of,
)
from .spectral import EigenDecomposition, eigensolve

__all__ = [
    "BoundaryContaminationError",
    "ChebyshevOrderError",
    "NumericalContractError",
    "Propagator",
    "MomentSeries",
    "LaplaceMoment",
    "MassComparison",
    "radius_bound",
    "safe_half_width",
    "safe_window",
    "chebyshev_coefficients",
    "evolve",
    "moment",
    "moment_series",
    "interval_moment_series",
    "laplace_cutoff",
    "laplace_grid",
    "laplace_average",
    "laplace_window",
    "laplace_moment_curve",
    "laplace_moment_time",
    "laplace_moment_energy",
    "growth_exponent",
    "mass_comparison",
]

BOUNDARY_SITES = 10
BOUNDARY_TOL = 1e-8


class BoundaryContaminationError(RuntimeError):
    """Probability mass reached the window edge during an experiment that forbids it."""


class ChebyshevOrderError(RuntimeError):
    """The requested time step needs more Chebyshev terms than allowed; split the step."""


class NumericalContractError(RuntimeError):
    """A conserved quantity (norm, identity) drifted beyond its tolerance."""


def radius_bound(params: DiracParams, spec_or_vmax) -> float:
    """``c sqrt(4 + m^2 c^2) + sup |V|``, a bound on the Dirac operator norm."""
    vmax = spec_or_vmax.sup if isinstance(spec_or_vmax, PotentialSpec) else float(spec_or_vmax)
    return params.free_bound + vmax


def safe_half_width(radius: float, t_max: float) -> int:
    """Half-width ``1.2 R t_max + 20`` of a window the packet cannot cross by ``t_max``."""
    return int(math.ceil(1.2 * radius * t_max + 20))


def safe_window(radius: float, t_max: float, center: int = 0) -> LatticeWindow:
    half = safe_half_width(radius, t_max)
    return LatticeWindow(center - half, center + half)


@dataclass(frozen=True, eq=False)
class Propagator:
    """``exp(-i D t)`` by eigenbasis phases or by a Chebyshev expansion.

    For the Chebyshev method ``radius`` must bound the operator norm; the
    series is truncated once the remaining Bessel coefficients fall below
    ``tail_tol``.
    """

    op: OperatorMatrix
    method: str
    decomposition: Optional[EigenDecomposition] = None
    radius: float = 0.0
    max_order: int = 200_000
    tail_tol: float = 1e-14

    @classmethod
    def eigen(cls, op: OperatorMatrix) -> "Propagator":
        return cls(op, "eigen", eigensolve(op), op.norm_bound())

    @classmethod
    def chebyshev(cls, op: OperatorMatrix, radius: Optional[float] = None,
                  max_order: int = 200_000) -> "Propagator":
        bound = op.norm_bound()
        if radius is None:
            radius = bound
        elif radius < bound * (1 - 1e-12):
            raise ValueError(f"radius {radius} is below the operator norm bound {bound}")
        return cls(op, "chebyshev", None, float(radius), max_order)


def chebyshev_coefficients(x: float, tail_tol: float = 1e-14,
                           max_order: int = 200_000) -> np.ndarray:
    """Coefficients ``(2 - delta_k0) (-i)^k J_k(x)`` of ``exp(-i x y)`` on ``[-1, 1]``."""
    kmax = int(1.3 * x + 60)
    if kmax > max_order + 60:
        raise ChebyshevOrderError(
            f"R t = {x:.4g} needs about {kmax} Chebyshev terms (max {max_order}); split the time step"
        )
    k = np.arange(kmax + 1)
    j = jv(k, x)
    big = np.nonzero(2.0 * np.abs(j) >= tail_tol)[0]
    order = int(big[-1]) + 1 if big.size else 1
    if order > max_order:
        raise ChebyshevOrderError(f"order {order} exceeds max_order {max_order}")
    coef = 2.0 * j[:order] * (-1j) ** k[:order]
    coef[0] = j[0]
    return coef


def _chebyshev_apply(prop: Propagator, vec: np.ndarray, t: float) -> np.ndarray:
    R = prop.radius
    coef = chebyshev_coefficients(R * t, prop.tail_tol, prop.max_order)
    mv = prop.op.matvec
    phi0 = vec
    out = coef[0] * phi0
    if coef.size == 1:
        return out
    phi1 = mv(phi0) / R
    out = out + coef[1] * phi1
    for a in coef[2:]:
        phi2 = (2.0 / R) * mv(phi1) - phi0
        out += a * phi2
        phi0, phi1 = phi1, phi2
    return out


def _evolve_vec(prop: Propagator, vec: np.ndarray, t: float) -> np.ndarray:
    if t < 0:
        # exp(iDt) psi = conj(exp(-iDt) conj(psi)) for real symmetric D
        return np.conj(_evolve_vec(prop, np.conj(vec), -t))
    if t == 0:
        return vec.astype(complex, copy=True)
    if prop.method == "eigen":
        v = prop.decomposition.vectors
        return v @ (np.exp(-1j * prop.decomposition.eigenvalues * t) * (v.T @ vec))
    return _chebyshev_apply(prop, vec.astype(complex), t)


def evolve(prop: Propagator, psi: SpinorState, t: float) -> SpinorState:
    """``exp(-i D t) psi``; negative ``t`` runs backwards by complex conjugation."""
    if psi.window != prop.op.window:
        raise ValueError("state and propagator live on different windows")
    return SpinorState.from_vector(psi.window, _evolve_vec(prop, psi.vector, float(t)))


def _weights(window: LatticeWindow, q: float) -> np.ndarray:
    if q == 0:
        return np.ones(window.size)
    if q < 0:
        raise ValueError("moment order must be >= 0")
    return np.abs(window.sites).astype(float) ** q


def moment(psi_t: SpinorState, q: float) -> float:
    """``sum_n |n|^q (|psi+(n)|^2 + |psi-(n)|^2)`` with ``|0|^q = 0`` for ``q > 0``.

    ``q = 0`` returns the squared norm.
    """
    return float(np.dot(_weights(psi_t.window, q), psi_t.site_density()))


@dataclass(frozen=True, eq=False)
class MomentSeries:
    q: float
    times: np.ndarray
    values: np.ndarray
    boundary_mass: np.ndarray
    boundary_flag: bool = False
    empty_projection: bool = False
    norms: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.times.size


def _boundary_mass(density: np.ndarray, sites: int = BOUNDARY_SITES) -> float:
    if density.size <= 2 * sites:
        return float(density.sum())
    return float(density[:sites].sum() + density[-sites:].sum())


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need a nonempty 1D array of times")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return times


def _series_from_vectors(q, times, window, vectors, norm0) -> MomentSeries:
    w = _weights(window, q)
    vals, bmass, norms = [], [], []
    for vec in vectors:
        dens = np.sum(np.abs(vec.reshape(-1, 2)) ** 2, axis=1)
        vals.append(float(np.dot(w, dens)))
        bmass.append(_boundary_mass(dens))
        norms.append(math.sqrt(float(dens.sum())))
    bmass = np.array(bmass)
    norms = np.array(norms)
    if norm0 > 0 and np.max(np.abs(norms - norm0)) > 1e-10 * max(1.0, norm0):
        raise NumericalContractError(
            f"norm drifted by {np.max(np.abs(norms - norm0)):.3e} during propagation"
        )
    return MomentSeries(q, times, np.array(vals), bmass,
                        bool(np.any(bmass > BOUNDARY_TOL)), False, norms)


def _propagate_through(prop: Propagator, vec: np.ndarray, times: np.ndarray):
    if prop.method == "eigen":
        v = prop.decomposition.vectors
        coeff = v.T @ vec
        lam = prop.decomposition.eigenvalues
        for t in times:
            yield v @ (np.exp(-1j * lam * t) * coeff)
        return
    cur, t_prev = vec.astype(complex), 0.0
    for t in times:
        if t > t_prev:
            cur = _chebyshev_apply(prop, cur, t - t_prev)
            t_prev = t
        yield cur


def moment_series(prop: Propagator, psi: SpinorState, q: float,
                  times: Sequence[float]) -> MomentSeries:
    """Moments ``M^(q)(t)`` along ``times``.

    ``boundary_flag`` is set when more than ``1e-8`` of the probability sits on
    the 10 outermost sites at either edge at some time. A norm drift above
    ``1e-10`` raises :class:`NumericalContractError`.
    """
    times = _check_times(times)
    return _series_from_vectors(q, times, psi.window,
                                _propagate_through(prop, psi.vector, times), psi.norm())


def interval_moment_series(prop: Propagator, psi: SpinorState, q: float,
                           times: Sequence[float], interval: tuple) -> MomentSeries:
    """Moments of the part of ``psi`` with energies in ``interval``, evolved in time.

    A projection with norm below ``1e-12`` yields a zero series with
    ``empty_projection`` set.
    """
    if prop.method != "eigen":
        raise ValueError("interval projection needs an eigenbasis propagator")
    times = _check_times(times)
    lo, hi = interval
    dec = prop.decomposition
    mask = (dec.eigenvalues >= lo) & (dec.eigenvalues <= hi)
    coeff = dec.vectors.T @ psi.vector
    coeff = np.where(mask, coeff, 0.0)
    pnorm = float(np.linalg.norm(coeff))
    if pnorm < 1e-12:
        zeros = np.zeros(times.size)
        return MomentSeries(q, times, zeros, zeros.copy(), False, True, zeros.copy())
    lam = dec.eigenvalues
    vecs = (dec.vectors @ (np.exp(-1j * lam * t) * coeff) for t in times)
    return _series_from_vectors(q, times, psi.window, vecs, pnorm)


@dataclass(frozen=True)
class LaplaceMoment:
    """Laplace-averaged moment ``A^(q)(T)`` with bookkeeping of how it was computed."""

    q: float
    T: float
    value: float
    tail_bound: float = 0.0
    cutoff: float = 0.0
    points: int = 0
    boundary_flag: bool = False


def laplace_cutoff(m_max: float, T: float, tol: float = 1e-8) -> float:
    """``t_max = (T/2) ln(M_max T / tol)``, beyond which the weighted tail is below ``tol/(2T)``."""
    return 0.5 * T * math.log(max(m_max * T / tol, math.e))


def laplace_grid(T: float, m_max: float, tol: float = 1e-8,
                 step: Optional[float] = None) -> np.ndarray:
    """Uniform time grid on ``[0, t_max]`` with spacing at most ``T/64``."""
    t_max = laplace_cutoff(m_max, T, tol)
    h = T / 64.0 if step is None else min(step, T / 64.0)
    return np.linspace(0.0, t_max, int(math.ceil(t_max / h)) + 1)


def _laplace_trapezoid(grid: np.ndarray, values: np.ndarray, T: float) -> float:
    return float(np.trapezoid(np.exp(-2.0 * grid / T) * values / T, grid))


def laplace_average(moment: Callable[[np.ndarray], np.ndarray], T: float, m_max: float,
                    tol: float = 1e-8, step: Optional[float] = None) -> float:
    """Time-route quadrature of ``(1/T) int exp(-2t/T) M(t) dt`` for a given curve.

    ``moment`` maps an array of times to moment values and ``m_max`` bounds it
    on the integration range. This is the same rule :func:`laplace_moment_curve`
    applies to a propagated state.
    """
    if not (T > 0):
        raise ValueError("T must be > 0")
    grid = laplace_grid(T, m_max, tol, step)
    return _laplace_trapezoid(grid, np.asarray(moment(grid), dtype=float), T)


def laplace_window(params: DiracParams, spec: PotentialSpec, q: float, T_max: float,
                   tol: float = 1e-8, center: int = 0) -> LatticeWindow:
    """Smallest boundary-safe window for a Laplace average up to ``T_max``.

    The cutoff time grows with the window through ``M_max`` so the half-width is
    found by fixed-point iteration.
    """
    radius = radius_bound(params, spec)
    half = 20
    for _ in range(50):
        m_max = float(half) ** q if q > 0 else 1.0
        new = safe_half_width(radius, laplace_cutoff(m_max, T_max, tol))
        if new <= half:
            break
        half = new
    return LatticeWindow(center - half, center + half)


def laplace_moment_curve(prop: Propagator, psi: SpinorState, q: float, T_values: Sequence[float],
                         tol: float = 1e-8, step: Optional[float] = None,
                         check_boundary: bool = True) -> list[LaplaceMoment]:
    """Laplace averages for several ``T`` from one propagation.

    Each ``T`` gets its own uniform trapezoid grid on ``[0, t_max(T)]`` with step
    ``T/64`` (or ``step`` if smaller); the moment curve is evaluated once on the
    union of all grids.
    """
    T_values = [float(T) for T in T_values]
    if not T_values or min(T_values) <= 0:
        raise ValueError("T must be > 0")
    norm2 = psi.norm() ** 2
    m_max = norm2 * float(np.max(_weights(psi.window, q)))
    if m_max == 0.0:
        return [LaplaceMoment(q, T, 0.0) for T in T_values]
    grids = [laplace_grid(T, m_max, tol, step) for T in T_values]
    times = np.unique(np.concatenate(grids))
    series = moment_series(prop, psi, q, times)
    out = []
    for T, grid in zip(T_values, grids):
        sel = times <= grid[-1]
        if check_boundary and np.any(series.boundary_mass[sel] > BOUNDARY_TOL):
            raise BoundaryContaminationError(
                f"boundary mass {series.boundary_mass[sel].max():.3e} before t_max={grid[-1]:.4g}"
            )
        vals = np.interp(grid, times, series.values)  # exact: grid nodes are in ``times``
        value = _laplace_trapezoid(grid, vals, T)
        tail = 0.5 * m_max * math.exp(-2.0 * grid[-1] / T)
        flag = bool(np.any(series.boundary_mass[sel] > BOUNDARY_TOL))
        out.append(LaplaceMoment(q, T, value, tail, float(grid[-1]), grid.size, flag))
    return out


def laplace_moment_time(prop: Propagator, psi: SpinorState, q: float, T: float,
                        tol: float = 1e-8, step: Optional[float] = None,
                        check_boundary: bool = True) -> LaplaceMoment:
    """``(1/T) int_0^inf exp(-2t/T) M^(q)(t) dt`` by the trapezoid rule in time.

    The integral is cut at ``t_max = (T/2) ln(M_max T / tol)`` where ``M_max``
    is the largest moment the window allows, so the discarded tail is at
    most ``M_max exp(-2 t_max / T) / 2 = tol / (2T)``. The step is ``T/64``
    or ``step`` if smaller.
    """
    if not (T > 0):
        raise ValueError("T must be > 0")
    return laplace_moment_curve(prop, psi, q, [T], tol, step, check_boundary)[0]


def _energy_integrand(op: OperatorMatrix, energies: np.ndarray, eta: float,
                      weights: np.ndarray, src: int) -> np.ndarray:
    bw = op.bandwidth
    out = np.empty(energies.size)
    rhs = np.zeros(op.dim, dtype=complex)
    rhs[src] = 1.0
    for i, E in enumerate(energies):
        g = sla.solve_banded((bw, bw), op.banded(E + 1j * eta), rhs,
                             overwrite_ab=True, check_finite=False)
        dens = np.abs(g[0::2]) ** 2 + np.abs(g[1::2]) ** 2
        out[i] = np.dot(weights, dens)
    return out


def _tail_integral(e_in: float, e_out: float, f_in: float, f_out: float) -> float:
    """Integral beyond ``e_out`` of ``S / (E - mu)^2`` matched to two samples."""
    if f_out <= 0.0 or f_in <= 0.0:
        return 0.0
    r = math.sqrt(f_in / f_out)
    if r <= 1.0:
        return f_out * abs(e_out - e_in)
    # (e_out - mu) = r (e_in - mu)
    dist = abs(e_out - e_in) * r / (r - 1.0)
    return f_out * dist


def laplace_moment_energy(op: OperatorMatrix, q: float, T: float,
                          energy_grid: Optional[np.ndarray] = None,
                          rel_tol: float = 0.005, tail_tol: float = 1e-4,
                          source: int = 0) -> LaplaceMoment:
    """``A^(q)(T)`` for ``delta_source^+`` from Green's functions at ``E + i/T``.

    Evaluates ``(1/(2 pi T)) sum_n |n|^q int (|G+(n)|^2 + |G-(n)|^2) dE`` by the
    trapezoid rule. Without an explicit grid the energy range is the operator
    norm bound padded by ``2/T + 1``. The part beyond the range is added back
    with a one-pole model, and the padding is doubled until that model's error
    estimate drops below ``tail_tol`` relative. The spacing starts at ``1/(2T)`` and is
    halved until successive estimates agree to ``rel_tol``.
    """
    if not (T > 0):
        raise ValueError("T must be > 0")
    eta = 1.0 / T
    weights = _weights(op.window, q)
    src = index_of(op.window, source, "+")
    norm_factor = 1.0 / (2.0 * math.pi * T)
    if energy_grid is not None:
        grid = np.asarray(energy_grid, dtype=float)
        f = _energy_integrand(op, grid, eta, weights, src)
        return LaplaceMoment(q, T, norm_factor * float(np.trapezoid(f, grid)), 0.0, 0.0, grid.size)

    bound = op.norm_bound()
    pad = 2.0 / T + 1.0
    while True:
        lo, hi = -bound - pad, bound + pad
        h = 0.5 * eta
        n = int(math.ceil((hi - lo) / h))
        grid = np.linspace(lo, hi, n + 1)
        f = _energy_integrand(op, grid, eta, weights, src)
        est = float(np.trapezoid(f, grid))
        for _ in range(12):
            mids = 0.5 * (grid[:-1] + grid[1:])
            fm = _energy_integrand(op, mids, eta, weights, src)
            merged = np.empty(grid.size + mids.size)
            merged[0::2], merged[1::2] = grid, mids
            fmerged = np.empty_like(merged)
            fmerged[0::2], fmerged[1::2] = f, fm
            new = float(np.trapezoid(fmerged, merged))
            grid, f = merged, fmerged
            done = abs(new - est) <= rel_tol * abs(new)
            est = new
            if done:
                break
        else:
            raise RuntimeError("energy grid refinement did not converge")
        # outside the spectrum the integrand behaves like S / (E - mu)^2
        tail = _tail_integral(grid[1], grid[0], f[1], f[0]) + _tail_integral(grid[-2], grid[-1], f[-2], f[-1])
        # the one-pole tail model is off by about (spread / distance)^2
        model_err = tail * (bound ** 2 + eta ** 2) / pad ** 2
        if est == 0.0 or model_err <= tail_tol * abs(est):
            value = norm_factor * (est + tail)
            return LaplaceMoment(q, T, value, norm_factor * model_err, hi, grid.size)
        pad *= 2.0


def growth_exponent(series, fit_window: Optional[tuple] = None) -> float:
    """Least-squares slope of ``ln(value)`` against ``ln(t)``.

    ``series`` is a :class:`MomentSeries` or a pair ``(t, values)``. Only
    points with ``fit_window[0] <= t <= fit_window[1]`` are used; at least 8
    points, all positive, are required.
    """
    if isinstance(series, MomentSeries):
        t, y = series.times, series.values
    else:
        t, y = (np.asarray(a, dtype=float) for a in series)
    if fit_window is not None:
        sel = (t >= fit_window[0]) & (t <= fit_window[1])
        t, y = t[sel], y[sel]
    if t.size < 8:
        raise ValueError(f"growth fit needs at least 8 points, got {t.size}")
    if np.any(y <= 0) or np.any(t <= 0):
        raise ValueError("growth fit needs positive times and values")
    slope, _ = np.polyfit(np.log(t), np.log(y), 1)
    return float(slope)


@dataclass(frozen=True, eq=False)
class MassComparison:
    """``sup_{t <= T} |M^(q)(m, t) - M^(q)(m', t)|`` for each ``T``."""

    m: float
    m_prime: float
    q: float
    T: np.ndarray
    sup_diff: np.ndarray
    times: np.ndarray = field(repr=False, default=None)
    diff: np.ndarray = field(repr=False, default=None)


def mass_comparison(m: float, m_prime: float, c: float, realization: Realization, q: float,
                    T_grid: Sequence[float], psi: Optional[SpinorState] = None,
                    check_boundary: bool = True) -> MassComparison:
    """Compare moment curves of two masses on the same potential.

    Both operators are propagated by Chebyshev expansion on a shared time
    grid of step at most ``min(T_grid) / 200``.
    """
    T_grid = np.asarray(sorted(T_grid), dtype=float)
    if psi is None:
        psi = delta_state(realization.window, 0, "+")
    if m == m_prime:
        return MassComparison(m, m_prime, q, T_grid, np.zeros(T_grid.size))
    h = T_grid[0] / 200.0
    n = int(math.ceil(T_grid[-1] / h))
    times = np.linspace(0.0, T_grid[-1], n + 1)
    curves = []
    for mass in (m, m_prime):
        prop = Propagator.chebyshev(build_dirac(DiracParams(mass, c), realization))
        s = moment_series(prop, psi, q, times)
        if check_boundary and s.boundary_flag:
            raise BoundaryContaminationError(
                f"boundary mass {s.boundary_mass.max():.3e} for m={mass}; enlarge the window"
            )
        curves.append(s.values)
    diff = np.abs(curves[0] - curves[1])
    sup = np.array([diff[times <= T * (1 + 1e-12)].max() for T in T_grid])
    return MassComparison(m, m_prime, q, T_grid, sup, times, diff)
