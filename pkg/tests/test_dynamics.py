import math

import numpy as np
import pytest

from bernoulli_dirac.dynamics import (
    BoundaryContaminationError,
    ChebyshevOrderError,
    Propagator,
    chebyshev_coefficients,
    evolve,
    growth_exponent,
    interval_moment_series,
    laplace_average,
    laplace_cutoff,
    laplace_moment_curve,
    laplace_moment_energy,
    laplace_moment_time,
    laplace_window,
    mass_comparison,
    moment,
    moment_series,
    radius_bound,
    safe_half_width,
    safe_window,
)
from bernoulli_dirac.model import (
    DiracParams,
    LatticeWindow,
    PotentialSpec,
    SpinorState,
    build_dirac,
    delta_state,
    sample_realization,
)


def _op(window, m=0.0, c=1.0, V=0.5, seed=0, spec=None):
    spec = spec or PotentialSpec.bernoulli(V)
    return build_dirac(DiracParams(m, c), sample_realization(spec, window, seed))


def _random_state(window, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(window.size, 2)) + 1j * rng.normal(size=(window.size, 2))
    return SpinorState(window, a / np.linalg.norm(a))


def test_chebyshev_coefficients_sum_to_exponential():
    x = 7.3
    coef = chebyshev_coefficients(x)
    # at y = 1 every Chebyshev polynomial is 1, so the series sums to exp(-i x)
    assert coef.sum() == pytest.approx(np.exp(-1j * x), abs=1e-13)
    with pytest.raises(ChebyshevOrderError):
        chebyshev_coefficients(1e4, max_order=100)


def test_evolve_zero_time_is_identity():
    w = LatticeWindow(-20, 20)
    psi = _random_state(w)
    for prop in (Propagator.eigen(_op(w)), Propagator.chebyshev(_op(w))):
        assert np.array_equal(evolve(prop, psi, 0.0).vector, psi.vector)


def test_chebyshev_matches_eigenbasis():
    w = LatticeWindow.centered(200)
    op = _op(w, m=0.5, V=1.0, seed=3)
    psi = _random_state(w, 1)
    a = evolve(Propagator.eigen(op), psi, 5.0).vector
    b = evolve(Propagator.chebyshev(op), psi, 5.0).vector
    assert np.abs(a - b).max() < 1e-9


def test_evolution_is_unitary_and_reversible():
    w = LatticeWindow.centered(80)
    prop = Propagator.chebyshev(_op(w, m=1.0, V=1.0))
    psi = _random_state(w, 2)
    fwd = evolve(prop, psi, 3.7)
    assert fwd.norm() == pytest.approx(1.0, abs=1e-12)
    back = evolve(prop, fwd, -3.7)
    assert np.abs(back.vector - psi.vector).max() < 1e-11
    two = evolve(prop, evolve(prop, psi, 1.5), 2.2)
    assert np.abs(two.vector - fwd.vector).max() < 1e-11


def test_evolve_errors():
    w = LatticeWindow(-5, 5)
    op = _op(w)
    with pytest.raises(ValueError):
        evolve(Propagator.eigen(op), delta_state(LatticeWindow(0, 3)), 1.0)
    with pytest.raises(ValueError):
        Propagator.chebyshev(op, radius=0.1)
    with pytest.raises(ChebyshevOrderError):
        evolve(Propagator.chebyshev(op, max_order=50), delta_state(w), 500.0)


def test_moment_examples():
    w = LatticeWindow(-5, 5)
    assert moment(delta_state(w, 3), 2.0) == 9.0
    assert moment(delta_state(w), 2.0) == 0.0
    assert moment(delta_state(w), 0.3) == 0.0
    assert moment(delta_state(w, -2, "-"), 1.5) == pytest.approx(2 ** 1.5)
    assert moment(_random_state(w), 0) == pytest.approx(1.0)


def test_moment_order_inequality():
    # Jensen: M1^2 <= M0 M2 for any state and time
    w = LatticeWindow.centered(120)
    prop = Propagator.chebyshev(_op(w, m=0.3, V=0.7))
    psi = delta_state(w)
    for t in (2.0, 10.0, 25.0):
        s = evolve(prop, psi, t)
        assert moment(s, 1.0) ** 2 <= moment(s, 0) * moment(s, 2.0) * (1 + 1e-12)


def test_free_ballistic_growth():
    params = DiracParams(0.0, 1.0)
    window = safe_window(radius_bound(params, 0.0), 100.0)
    op = build_dirac(params, sample_realization(PotentialSpec.constant(0.0), window, 0))
    times = np.linspace(10, 100, 19)
    s = moment_series(Propagator.chebyshev(op), delta_state(window), 2.0, times)
    assert not s.boundary_flag
    assert growth_exponent(s, (10, 100)) == pytest.approx(2.0, abs=0.1)


def test_boundary_flag_on_small_window():
    w = LatticeWindow.centered(30)
    s = moment_series(Propagator.chebyshev(_op(w, spec=PotentialSpec.constant(0.0))),
                      delta_state(w), 2.0, [1.0, 40.0])
    assert s.boundary_flag and s.boundary_mass[0] < 1e-8


def test_moment_series_time_checks():
    w = LatticeWindow.centered(10)
    prop = Propagator.eigen(_op(w))
    with pytest.raises(ValueError):
        moment_series(prop, delta_state(w), 2.0, [2.0, 1.0])
    with pytest.raises(ValueError):
        moment_series(prop, delta_state(w), 2.0, [-1.0])


def test_interval_series_full_and_empty():
    w = LatticeWindow.centered(60)
    op = _op(w, m=1.0, V=1.0, seed=1)
    prop = Propagator.eigen(op)
    times = np.linspace(0, 20, 11)
    full = interval_moment_series(prop, delta_state(w), 2.0, times, (-100, 100))
    ref = moment_series(prop, delta_state(w), 2.0, times)
    assert np.allclose(full.values, ref.values, atol=1e-10)
    empty = interval_moment_series(prop, delta_state(w), 2.0, times, (100, 200))
    assert empty.empty_projection and np.all(empty.values == 0)
    with pytest.raises(ValueError):
        interval_moment_series(Propagator.chebyshev(op), delta_state(w), 2.0, times, (0, 1))


def test_interval_away_from_critical_energies_stays_bounded():
    w = LatticeWindow.centered(300)
    prop = Propagator.eigen(_op(w, m=0.0, V=0.5, seed=2))
    times = np.linspace(0, 200, 81)
    s = interval_moment_series(prop, delta_state(w), 2.0, times, (-0.2, 0.2))
    assert not s.empty_projection
    # the projection has static exponential tails at the edges, but the
    # moment stays far below what ballistic spreading would reach by t = 200
    assert s.values.max() < 0.01 * 200.0 ** 2


def test_laplace_average_analytic_cases():
    T = 6.0
    # trapezoid error with step T/64 is about 1e-4 relative
    assert laplace_average(lambda t: np.full(t.size, 3.0), T, 3.0) == pytest.approx(1.5, rel=2e-4)
    ballistic = laplace_average(lambda t: t ** 2, T, 1e6)
    assert ballistic == pytest.approx(T ** 2 / 4, rel=2e-4)
    fine = laplace_average(lambda t: t ** 2, T, 1e6, step=T / 1024)
    assert abs(fine - T ** 2 / 4) < abs(ballistic - T ** 2 / 4)


def test_laplace_cutoff_controls_tail():
    T, m_max, tol = 5.0, 1e4, 1e-8
    t_max = laplace_cutoff(m_max, T, tol)
    assert 0.5 * m_max * math.exp(-2 * t_max / T) == pytest.approx(tol / (2 * T))


def test_laplace_normalization():
    w = LatticeWindow.centered(40)
    op = _op(w)
    a_t = laplace_moment_time(Propagator.chebyshev(op), delta_state(w), 0.0, 3.0, check_boundary=False)
    assert a_t.value == pytest.approx(0.5, rel=2e-4)
    a_e = laplace_moment_energy(op, 0.0, 3.0)
    assert a_e.value == pytest.approx(0.5, rel=5e-3)


def test_laplace_single_site_closed_form():
    # on one site the moment is 9 forever, so A = 9/2 on both routes
    w = LatticeWindow(3, 3)
    op = _op(w, m=1.0, V=0.4)
    a_t = laplace_moment_time(Propagator.eigen(op), delta_state(w, 3), 2.0, 2.0,
                              step=2.0 / 4096, check_boundary=False)
    a_e = laplace_moment_energy(op, 2.0, 2.0, rel_tol=1e-8, tail_tol=1e-7, source=3)
    assert a_t.value == pytest.approx(4.5, abs=1e-6)
    assert a_e.value == pytest.approx(4.5, abs=1e-6)


def test_laplace_routes_agree_small_box():
    w = LatticeWindow.centered(20)
    op = _op(w, seed=4)
    a_t = laplace_moment_time(Propagator.chebyshev(op), delta_state(w), 2.0, 2.0, check_boundary=False)
    a_e = laplace_moment_energy(op, 2.0, 2.0)
    assert a_t.value == pytest.approx(a_e.value, rel=0.02)


def test_laplace_curve_matches_single_calls():
    w = LatticeWindow.centered(30)
    prop = Propagator.chebyshev(_op(w, seed=5))
    psi = delta_state(w)
    curve = laplace_moment_curve(prop, psi, 2.0, [1.0, 2.5], check_boundary=False)
    single = laplace_moment_time(prop, psi, 2.0, 2.5, check_boundary=False)
    assert curve[1].value == pytest.approx(single.value, rel=1e-12)
    with pytest.raises(ValueError):
        laplace_moment_time(prop, psi, 2.0, 0.0)


def test_laplace_boundary_contamination_raises():
    w = LatticeWindow.centered(15)
    prop = Propagator.chebyshev(_op(w, spec=PotentialSpec.constant(0.0)))
    with pytest.raises(BoundaryContaminationError):
        laplace_moment_time(prop, delta_state(w), 2.0, 10.0)


def test_window_sizes_grow_with_time():
    params, spec = DiracParams(0.0, 1.0), PotentialSpec.bernoulli(0.5)
    R = radius_bound(params, spec)
    assert R == pytest.approx(2.0 + 0.5)
    widths = [safe_half_width(R, t) for t in (1, 10, 100)]
    assert widths == sorted(widths) and widths[0] >= 20
    small = laplace_window(params, spec, 2.0, 10.0)
    large = laplace_window(params, spec, 2.0, 50.0)
    assert large.size > small.size
    # the window reaches past the propagation front at the cutoff time
    half = small.n_max
    assert half >= 1.2 * R * laplace_cutoff(half ** 2, 10.0, 1e-8)


def test_growth_exponent_exact_power():
    t = np.linspace(1, 50, 30)
    assert growth_exponent((t, t ** 2)) == pytest.approx(2.0, abs=1e-10)
    assert growth_exponent((t, 3 * t ** 0.5), (5, 40)) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValueError):
        growth_exponent((t[:5], t[:5] ** 2))
    with pytest.raises(ValueError):
        growth_exponent((t, np.zeros_like(t)))


def test_mass_comparison_same_mass():
    r = sample_realization(PotentialSpec.bernoulli(0.5), LatticeWindow.centered(50), 0)
    res = mass_comparison(0.3, 0.3, 1.0, r, 2.0, [1.0, 2.0])
    assert np.all(res.sup_diff == 0)


def test_mass_comparison_grows_with_mass():
    params = DiracParams(0.004, 1.0)
    spec = PotentialSpec.bernoulli(0.5)
    window = safe_window(radius_bound(params, spec), 8.0)
    r = sample_realization(spec, window, 1)
    small = mass_comparison(0.002, 0.0, 1.0, r, 2.0, [4.0, 8.0])
    big = mass_comparison(0.004, 0.0, 1.0, r, 2.0, [4.0, 8.0])
    assert np.all(big.sup_diff > small.sup_diff)
    assert np.all(np.diff(big.sup_diff) >= 0)
    assert big.sup_diff[-1] / small.sup_diff[-1] == pytest.approx(2.0, rel=0.25)
