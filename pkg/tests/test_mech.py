import math

import numpy as np
import pytest
from scipy.integrate import quad

from solitonlab.field import Grid
from solitonlab.mech import (MechError, MechOrbit, MechState,
                             build_effective_potential, critical_margin,
                             critical_values, mech_energy, mech_run, mech_step,
                             orbit_distance)
from solitonlab.model import PotentialModel


@pytest.fixture(scope="module")
def well_veff(family, grid512):
    pot = PotentialModel.gaussians([(-1.0, [0.0], 2.0)])
    b = family.profile_on_grid(1.0, grid512)
    return build_effective_potential(pot, b, grid512, mass=1.0)


def test_veff_constant_potential(family, grid512):
    # V ~ const A => V^eff = 2 m A (huge-width Gaussian stands in for A)
    pot = PotentialModel.gaussians([(0.7, [0.0], 1e6)])
    b = family.profile_on_grid(1.0, grid512)
    veff = build_effective_potential(pot, b, grid512, mass=1.0)
    assert np.max(np.abs(veff.values - 2.0 * 0.7)) < 1e-8


def test_veff_wide_potential_trend(family, grid512):
    # wide well: V^eff(q) ~ 2m V(q)
    pot = PotentialModel.gaussians([(-1.0, [0.0], 20.0)])
    b = family.profile_on_grid(1.0, grid512)
    veff = build_effective_potential(pot, b, grid512, mass=1.0)
    for q in (0.0, 3.0, 10.0):
        v = float(pot(q))
        assert veff.value_at([q]) == pytest.approx(2.0 * v, rel=1e-2)


def test_veff_center_value_quadrature_oracle(well_veff):
    # V^eff(0) = -int e^{-x^2/8} sech^2 x dx, independent adaptive quadrature
    oracle, err = quad(lambda x: -math.exp(-x * x / 8.0) / math.cosh(x) ** 2,
                       -40.0, 40.0, epsabs=1e-13)
    assert well_veff.value_at([0.0]) == pytest.approx(oracle, abs=1e-10)


def test_veff_bound_and_symmetry(well_veff):
    # |V^eff| <= 2m max|V| and grad V^eff(0) = 0 for even V
    assert np.max(np.abs(well_veff.values)) <= 2.0 * 1.0 + 1e-12
    assert abs(well_veff.grad_at([0.0])[0]) < 1e-10


def test_veff_matches_direct_quadrature(family, grid512, rng):
    # spectral convolution vs direct quadrature at 10 random grid nodes
    pot = PotentialModel.gaussians([(-1.0, [0.0], 2.0), (0.4, [5.0], 1.5)])
    b = family.profile_on_grid(1.0, grid512)
    veff = build_effective_potential(pot, b, grid512, mass=1.0)
    x = grid512.axes[0]
    b2 = b**2
    for i in rng.integers(64, 448, size=10):
        qi = x[i]
        direct = grid512.cell * float(np.sum(pot(x + qi) * b2))
        assert veff.values[i] == pytest.approx(direct, rel=1e-8)


def test_veff_gradient_consistent_with_values(well_veff, rng):
    # interpolated gradient vs small-step FD of the interpolated values
    d = 1e-3
    for q in rng.uniform(-20, 20, size=100):
        fd = (well_veff.value_at([q + d]) - well_veff.value_at([q - d])) / (2 * d)
        assert abs(fd - well_veff.grad_at([q])[0]) < 1e-7


def test_veff_wraparound_guard(family):
    small = Grid(1, 64, 12.0)
    pot = PotentialModel.gaussians([(-1.0, [0.0], 2.0)])
    b = family.profile_on_grid(1.0, small, wrap_tol=1.0)   # bypass build guard
    with pytest.raises(MechError, match="wrap"):
        build_effective_potential(pot, b, small, mass=1.0)


def test_mech_energy_forms(well_veff):
    eps = 1e-2
    s = MechState([0.0], [0.0])
    e0 = mech_energy(s, 1.0, eps, well_veff)
    assert e0 == pytest.approx(eps * well_veff.value_at([0.0]))
    ek = 0.37
    s2 = MechState([math.sqrt(2.0 * 1.0 * ek)], [40.0])
    assert mech_energy(s2, 1.0, eps, well_veff) \
        == pytest.approx(ek + eps * well_veff.value_at([40.0]), rel=1e-10)
    # scaled form: H/eps with p = mu^2 p~
    assert mech_energy(s2, 1.0, eps, well_veff, scaled=True) \
        == pytest.approx(mech_energy(s2, 1.0, eps, well_veff) / eps, rel=1e-12)


def test_mech_free_motion(well_veff):
    orbit = mech_run(MechState([0.3], [-2.0]), 1.0, 0.0, well_veff,
                     dt=1e-2, t_final=10.0)
    assert orbit.qs[-1, 0] == pytest.approx(-2.0 + 0.3 * 10.0, abs=1e-12)
    assert orbit.ps[-1, 0] == pytest.approx(0.3, abs=1e-14)


def test_mech_time_reversal(well_veff):
    eps = 1e-2
    s0 = MechState([0.0], [3.0])
    s = s0
    for _ in range(1000):
        s = mech_step(s, 1.0, eps, well_veff, 1e-2)
    for _ in range(1000):
        s = mech_step(s, 1.0, eps, well_veff, -1e-2)
    assert abs(s.q[0] - 3.0) < 1e-10
    assert abs(s.p[0]) < 1e-10


def test_mech_harmonic_period(well_veff):
    # small oscillation near the minimum: period = 2 pi sqrt(m/(eps Veff''))
    eps = 1e-2
    d = 1e-4
    v2 = (well_veff.value_at([d]) - 2 * well_veff.value_at([0.0])
          + well_veff.value_at([-d])) / d**2
    period = 2 * math.pi * math.sqrt(1.0 / (eps * v2))
    orbit = mech_run(MechState([0.0], [0.2]), 1.0, eps, well_veff,
                     dt=period / 2000, t_final=10 * period)
    assert orbit.period_estimate() == pytest.approx(period, rel=1e-2)


def test_mech_leapfrog_energy_bounded(well_veff):
    eps = 1e-2
    d = 1e-4
    v2 = (well_veff.value_at([d]) - 2 * well_veff.value_at([0.0])
          + well_veff.value_at([-d])) / d**2
    period = 2 * math.pi * math.sqrt(1.0 / (eps * v2))
    orbit = mech_run(MechState([0.0], [0.1]), 1.0, eps, well_veff,
                     dt=period / 1000, t_final=20 * period)
    assert np.max(np.abs(orbit.energies - orbit.energies[0])) < 1e-8


def test_mech_leaves_range(well_veff):
    with pytest.raises(MechError, match="range"):
        mech_run(MechState([1.0], [0.0]), 1.0, 0.0, well_veff, dt=1.0, t_final=100.0)


def test_orbit_distance_weighted_norm(well_veff):
    eps = 4e-3
    orbit = mech_run(MechState([0.0], [3.0]), 1.0, eps, well_veff,
                     dt=0.05, t_final=400.0)
    on = MechState(orbit.ps[137].copy(), orbit.qs[137].copy())
    assert orbit_distance(on, orbit, eps) < 1e-10
    mid_q = float(orbit.qs[137, 0])
    mid_p = float(orbit.ps[137, 0])
    far_p = MechState([mid_p + 0.5], [mid_q])
    far_q = MechState([mid_p], [mid_q + 0.5])
    # a pure-p displacement costs delta, a pure-q one sqrt(eps) delta, up to
    # the closest-approach gain along the curve
    assert orbit_distance(far_p, orbit, eps) <= 0.5 + 1e-12
    assert orbit_distance(far_q, orbit, eps) <= math.sqrt(eps) * 0.5 + 1e-12
    assert orbit_distance(far_p, orbit, eps) > 0.2
    assert orbit_distance(far_q, orbit, eps) > 0.2 * math.sqrt(eps)


def test_orbit_distance_displacement_from_point_orbit(well_veff):
    # against a single-point orbit the weighted norm is exact
    eps = 0.01
    single = MechOrbit(np.array([0.0]), np.array([[0.1]]), np.array([[2.0]]),
                       np.array([0.0]), 1.0, eps)
    assert orbit_distance(MechState([0.1 + 0.3], [2.0]), single, eps) \
        == pytest.approx(0.3, rel=1e-12)
    assert orbit_distance(MechState([0.1], [2.0 + 0.3]), single, eps) \
        == pytest.approx(math.sqrt(eps) * 0.3, rel=1e-12)


def test_orbit_distance_empty():
    orbit = MechOrbit(np.array([]), np.empty((0, 1)), np.empty((0, 1)),
                      np.array([]), 1.0, 1e-2)
    with pytest.raises(MechError, match="empty"):
        orbit_distance(MechState([0.0], [0.0]), orbit, 1e-2)


def test_critical_values_and_margin(well_veff):
    crit = critical_values(well_veff)
    assert any(abs(c) < 1e-12 for c in crit)                 # value at infinity
    assert any(abs(c - well_veff.value_at([0.0])) < 1e-6 for c in crit)
    h = 0.5 * well_veff.value_at([0.0])                      # half-depth level
    assert critical_margin(h, well_veff) > 0.2


def test_mech_3d_axis_invariance(family):
    # axially symmetric V, initial data on the axis: motion stays on the axis
    # (box chosen so the potential truncation at the edge is at roundoff)
    grid = Grid(3, 16, 32.0)
    pot = PotentialModel.gaussians([(-1.0, [0.0, 0.0, 0.0], 2.0)], axis=0)
    b = family.profile_on_grid(1.0, grid, wrap_tol=1e-3)
    veff = build_effective_potential(pot, b, grid, mass=1.0)
    s = MechState([0.05, 0.0, 0.0], [1.5, 0.0, 0.0])
    for _ in range(200):
        s = mech_step(s, 1.0, 1e-2, veff, 0.05)
    assert np.max(np.abs(s.q[1:])) < 1e-12
    assert np.max(np.abs(s.p[1:])) < 1e-12
