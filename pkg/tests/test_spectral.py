import math

import numpy as np
import pytest

from bernoulli_dirac.model import (
    DiracParams,
    LatticeWindow,
    PotentialSpec,
    SpinorState,
    build_dirac,
    sample_realization,
)
from bernoulli_dirac.spectral import (
    SpectrumTooCloseError,
    decay_fit,
    eigensolve,
    greens_column,
    greens_transfer_residual,
    nonrel_limit_error,
    nonrel_resolvents,
    reconstruct_eigenfunction_residual,
    wegner_estimate,
    wegner_probability,
)


def _op(N, m=1.0, c=1.0, V=1.0, seed=0, center=0):
    w = LatticeWindow.centered(N, center)
    return build_dirac(DiracParams(m, c), sample_realization(PotentialSpec.bernoulli(V), w, seed))


def _single_site(m=1.0, c=1.0, v=0.0):
    r = sample_realization(PotentialSpec.constant(v), LatticeWindow(0, 0), 0)
    return build_dirac(DiracParams(m, c), r)


def test_eigensolve_single_site():
    ev = eigensolve(_single_site()).eigenvalues
    assert np.allclose(ev, [-math.sqrt(2), math.sqrt(2)], atol=1e-14)


def test_eigensolve_free_band():
    r = sample_realization(PotentialSpec.constant(0.0), LatticeWindow(0, 99), 0)
    ev = eigensolve(build_dirac(DiracParams(0.0, 1.0), r)).eigenvalues
    assert ev.min() >= -2 - 1e-12 and ev.max() <= 2 + 1e-12


def test_eigensolve_residual_and_orthogonality():
    op = _op(60, m=0.5, V=0.8, seed=2)
    dec = eigensolve(op)
    a = op.dense()
    assert np.abs(a @ dec.vectors - dec.vectors * dec.eigenvalues).max() < 1e-10
    assert np.abs(dec.vectors.T @ dec.vectors - np.eye(len(dec))).max() < 1e-10
    assert dec.eigenvalues.sum() == pytest.approx(np.trace(a), abs=1e-9)
    assert np.all(np.diff(dec.eigenvalues) >= 0)
    E, psi = dec.pair(5)
    assert E == dec.eigenvalues[5] and psi.norm() == pytest.approx(1.0)


def test_eigensolve_potential_shift():
    r = sample_realization(PotentialSpec.bernoulli(0.7), LatticeWindow(0, 30), 1)
    shifted = r.shifted(0.25)
    base = eigensolve(build_dirac(DiracParams(0.3, 1.0), r)).eigenvalues
    moved = eigensolve(build_dirac(DiracParams(0.3, 1.0), shifted)).eigenvalues
    assert np.allclose(moved, base + 0.25, atol=1e-12)


def test_eigensolve_size_limit():
    with pytest.raises(ValueError):
        eigensolve(_op(100), max_sites=50)


def test_greens_single_site():
    g = greens_column(_single_site(), 1j)
    ref = np.linalg.inv(np.array([[1 - 1j, -1], [-1, -1 - 1j]]))[:, 0]
    assert np.allclose(g.values[0], ref, atol=1e-14)
    assert np.array_equal(g.at(5), [0, 0])


def test_greens_bound_and_expansion():
    op = _op(40, m=0.2, V=0.6, seed=3)
    z = 0.3 + 0.2j
    g = greens_column(op, z, source=4)
    assert g.norm() <= 1 / abs(z.imag) + 1e-12
    dec = eigensolve(op)
    col = op.window.n_min
    src = 2 * (4 - col)
    ref = dec.vectors @ (dec.vectors[src] / (dec.eigenvalues - z))
    assert np.allclose(g.values.ravel(), ref, atol=1e-10)
    with pytest.raises(ValueError):
        greens_column(op, 0.3)


def test_greens_transfer_recursion():
    op = _op(80, seed=4)
    assert greens_transfer_residual(op, 2j) < 1e-8
    assert greens_transfer_residual(_op(60, m=0.0, V=0.5, seed=1), 0.1 + 0.5j) < 1e-8
    assert greens_transfer_residual(_single_site(), 2j) == 0.0


def test_greens_transfer_shift_invariant():
    r = sample_realization(PotentialSpec.bernoulli(1.0), LatticeWindow(-20, 20), 5)
    params = DiracParams(1.0, 1.0)
    a = greens_transfer_residual(build_dirac(params, r), 0.1 + 2j)
    b = greens_transfer_residual(build_dirac(params, r.shifted(0.4)), 0.5 + 2j)
    assert a == pytest.approx(b, abs=1e-12)


def _localized_pair(op, inner_half=20):
    dec = eigensolve(op)
    mid = len(dec) // 2
    for j in range(mid - 40, mid + 40):
        E, psi = dec.pair(j)
        fit = decay_fit(psi)
        if op.window.n_min + 100 < fit.center < op.window.n_max - 100:
            inner = LatticeWindow(fit.center - inner_half, fit.center + inner_half)
            try:
                return E, psi, inner, reconstruct_eigenfunction_residual(op, (E, psi), inner)
            except SpectrumTooCloseError:
                continue
    raise AssertionError("no usable eigenpair")


def test_eigenfunction_reconstruction():
    op = _op(400, seed=6)
    E, psi, inner, res = _localized_pair(op)
    assert res < 1e-6
    # a global phase cannot change the relative residual
    rotated = SpinorState(psi.window, psi.amplitudes * np.exp(0.7j))
    assert reconstruct_eigenfunction_residual(op, (E, rotated), inner) == pytest.approx(res, abs=1e-12)


def test_reconstruction_without_boundary_trace():
    op = _op(400, seed=6)
    E, psi, inner, _ = _localized_pair(op)
    amps = np.array(psi.amplitudes)
    amps[inner.n_min - 1 - psi.window.n_min] = 0.0
    amps[inner.n_max + 1 - psi.window.n_min] = 0.0
    res = reconstruct_eigenfunction_residual(op, (E, SpinorState(psi.window, amps)), inner)
    assert res == pytest.approx(1.0, abs=1e-12)


def test_reconstruction_rejects_edge_windows():
    op = _op(40)
    E, psi = eigensolve(op).pair(10)
    with pytest.raises(ValueError):
        reconstruct_eigenfunction_residual(op, (E, psi), op.window)


def test_decay_fit_synthetic():
    w = LatticeWindow(-40, 40)
    amps = np.zeros((w.size, 2))
    amps[:, 0] = np.exp(-0.3 * np.abs(w.sites))
    fit = decay_fit(SpinorState(w, amps))
    assert fit.center == 0 and fit.rate == pytest.approx(0.3, abs=1e-6)
    assert fit.fit_quality == pytest.approx(1.0)


def test_decay_fit_flat_and_errors():
    w = LatticeWindow(0, 29)
    assert decay_fit(SpinorState(w, np.ones((w.size, 2)))).rate == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        decay_fit(SpinorState(LatticeWindow(0, 4), np.ones((5, 2))))
    with pytest.raises(ValueError):
        decay_fit(SpinorState(w, np.zeros((w.size, 2))))


def test_wegner_single_site_enumeration():
    # box {0}: spectra {V0 +- sqrt(2)}, distance sqrt(2) - 1 from E = 0, threshold exp(0) = 1
    res = wegner_estimate(0.0, 0, 0.5, 0.1, DiracParams(1.0, 1.0), PotentialSpec.bernoulli(1.0))
    assert res.exact and res.samples == 2 and res.threshold == 1.0
    assert res.probability == 1.0


def _wegner_by_listing(E, L, theta, tau, params, spec):
    # independent route: dense eigenvalues of every sign pattern
    import itertools

    window = LatticeWindow.centered(L)
    thr = math.exp(-tau * L ** theta)
    total = 0.0
    for signs in itertools.product((1, -1), repeat=window.size):
        r = sample_realization(PotentialSpec.explicit(spec.V * np.array(signs, float)), window, 0)
        ev = np.linalg.eigvalsh(build_dirac(params, r).dense())
        k = signs.count(1)
        if np.min(np.abs(ev - E)) <= thr:
            total += spec.p ** k * (1 - spec.p) ** (window.size - k)
    return total


def test_wegner_exact_matches_brute_force():
    from bernoulli_dirac.checks import wegner_brute_force

    params, spec = DiracParams(1.0, 1.0), PotentialSpec.bernoulli(1.0, 0.3)
    for L in (0, 2, 4):
        res = wegner_estimate(1.3, L, 0.5, 0.8, params, spec)
        assert res.exact
        assert res.probability == pytest.approx(_wegner_by_listing(1.3, L, 0.5, 0.8, params, spec), abs=1e-12)
    single = wegner_estimate(0.0, 0, 0.5, 0.1, params, spec).probability
    assert single == wegner_brute_force(0.0, 0.5, 0.1, params, 1.0, 0.3)


def test_wegner_probability_range():
    params, spec = DiracParams(1.0, 1.0), PotentialSpec.bernoulli(1.0)
    for L in (0, 6, 20):
        p = wegner_probability(0.2, L, 0.5, 0.1, params, spec, n_real=50, seed=1)
        assert 0.0 <= p <= 1.0
    with pytest.raises(ValueError):
        wegner_probability(0.2, 4, 1.5, 0.1, params, spec)


def test_nonrel_single_site_closed_form():
    m, c, z = 1.0, 8.0, 1j
    r = sample_realization(PotentialSpec.constant(0.0), LatticeWindow(0, 0), 0)
    # (D - mc^2 - z) on one site is [[-z, -c], [-c, -2mc^2 - z]]
    det = (-z) * (-2 * m * c * c - z) - c * c
    r_dirac = np.array([[-2 * m * c * c - z, c], [c, -z]]) / det
    # the truncated kinetic term leaves 1/(2m) on the single upper entry
    r_limit = np.array([[1 / (1 / (2 * m) - z), 0], [0, 0]])
    expected = np.linalg.norm(r_dirac - r_limit, 2)
    assert nonrel_limit_error(c, m, z, r) == pytest.approx(expected, abs=1e-12)


def test_nonrel_lower_block_is_projected_out():
    r = sample_realization(PotentialSpec.bernoulli(1.0), LatticeWindow(-10, 10), 0)
    _, r_limit = nonrel_resolvents(16.0, 1.0, 1j, r)
    assert np.count_nonzero(r_limit[1::2, :]) == 0
    with pytest.raises(ValueError):
        nonrel_limit_error(16.0, 0.0, 1j, r)
    with pytest.raises(ValueError):
        nonrel_limit_error(16.0, 1.0, 0.5, r)


def test_nonrel_error_decreases():
    r = sample_realization(PotentialSpec.bernoulli(1.0), LatticeWindow.centered(30), 0)
    errs = [nonrel_limit_error(c, 1.0, 1j, r) for c in (8, 16, 32)]
    assert errs[0] > errs[1] > errs[2]
    assert all(0.4 <= b / a <= 0.65 for a, b in zip(errs, errs[1:]))
