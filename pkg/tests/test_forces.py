import math

import numpy as np
import pytest

from kpotential.domain import Ball, ChargeDistribution, RadialGrid, SurfaceSphere, VolumeShell
from kpotential.equilibrium import equilibrium_distribution_ball, solve_equilibrium
from kpotential.errors import KinkRadius
from kpotential.forces import (
    collision_balance,
    coulomb_force_outside,
    electric_only_force_formulas,
    electric_only_interior_force,
    enclosed_charge,
    force_profile,
    force_table,
    gradient_force,
    mollified_force,
)
from kpotential.radial import PotentialField, eval_radial_gradient, solve_radial_potential

BALL = Ball(1.0)
# 30-digit evaluations: 2 Q k^2 / |B| with the exact Q, and e Q rho / r^3 at rho = 0.5
M_EXACT = -0.15524863152847451546
FE_HALF = -1.0160999172702589400


@pytest.fixture(scope="module")
def sol0():
    return solve_equilibrium(BALL, 1.0, 0.0)


@pytest.fixture(scope="module")
def sol04():
    return solve_equilibrium(BALL, 1.0, 0.4)


def _sampled(fn, r_max=4.0, n=40001):
    grid = RadialGrid.uniform(r_max, n)
    U = fn(grid.node_radii)
    return PotentialField(grid, U, float(U[-1] * r_max))


@pytest.mark.parametrize("x", [1.5, 2.0, 4.0])
def test_exterior_is_coulomb(sol0, x):
    assert gradient_force(sol0.potential, x, 1.0) == pytest.approx(coulomb_force_outside(1.0, 1.0, x), rel=0.01)


def test_exterior_k_force_uses_far_coefficient(sol04):
    # outside E the k-field is A_far/rho, not q/rho
    f = gradient_force(sol04.potential, 2.0, 1.0)
    assert f == pytest.approx(sol04.potential.far_coefficient / 4.0, rel=0.01)


def test_interior_force_vanishes(sol04):
    surf = abs(eval_radial_gradient(sol04.potential, 1.0, "outer"))
    inner = max(abs(gradient_force(sol04.potential, x, 1.0)) for x in np.linspace(0.05, 0.95, 19))
    assert inner <= 0.005 * surf


def test_kink_on_surface(sol0):
    with pytest.raises(KinkRadius):
        gradient_force(sol0.potential, 1.0, 1.0)
    assert gradient_force(sol0.potential, 0.0, 1.0) == 0.0


def test_vector_argument(sol0):
    x = np.array([0.0, 1.2, 1.6])
    assert gradient_force(sol0.potential, x, 1.0) == pytest.approx(0.25, rel=0.01)


def test_mollified_constant_and_affine():
    const = _sampled(lambda r: np.full_like(r, 2.0))
    assert mollified_force(const, 1.0, 1.0, 0.2) == pytest.approx(0.0, abs=1e-12)
    # U = 3 - rho has constant radial derivative away from the origin
    lin = _sampled(lambda r: 3.0 - r)
    assert mollified_force(lin, 2.0, 1.0, 0.1) == pytest.approx(1.0, rel=1e-3)


def test_mollified_harmonic_exact():
    sph = solve_radial_potential(RadialGrid.build(BALL, 10.0, 2000), ChargeDistribution((SurfaceSphere(1.0, 1.0),)), 0.0)
    assert mollified_force(sph, 2.0, 1.0, 0.1) == pytest.approx(0.25, rel=1e-4)
    assert mollified_force(sph, 2.0, 1.0, 0.5) == pytest.approx(0.25, rel=1e-4)


def test_mollified_quadratic_convergence():
    field = _sampled(lambda r: np.cos(r) * np.exp(-r))
    exact = (math.sin(1.0) + math.cos(1.0)) * math.exp(-1.0)
    rs = np.array([0.2, 0.1, 0.05])
    errs = [abs(mollified_force(field, 1.0, 1.0, s) - exact) for s in rs]
    slope = np.polyfit(np.log(rs), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_mollified_printed_normalization_off_by_radius():
    field = _sampled(lambda r: np.cos(r) * np.exp(-r))
    a = mollified_force(field, 1.0, 1.0, 0.1)
    b = mollified_force(field, 1.0, 1.0, 0.1, normalization="printed")
    assert b == pytest.approx(0.1 * a, rel=1e-12)
    with pytest.raises(ValueError):
        mollified_force(field, 1.0, 1.0, 0.1, normalization="other")


def test_coulomb_force_outside():
    assert coulomb_force_outside(1.0, 1.0, 2.0) == 0.25
    assert coulomb_force_outside(1.0, -1.0, 2.0) == -0.25
    v = coulomb_force_outside(2.0, 1.0, np.array([0.0, 3.0, 4.0]))
    assert np.allclose(v, 2.0 * np.array([0.0, 3.0, 4.0]) / 125.0)


def test_enclosed_charge():
    d = ChargeDistribution((VolumeShell(0.0, 1.0, -2.0), SurfaceSphere(1.0, 3.0)))
    assert enclosed_charge(d, 0.5) == pytest.approx(-0.25)
    assert enclosed_charge(d, 1.0) == pytest.approx(-2.0)
    assert enclosed_charge(d, 1.5) == pytest.approx(1.0)


def test_electric_only_force(sol04):
    printed, derived = electric_only_force_formulas(1.0, 1.0, 0.4, 1.0, 0.5)
    assert derived == pytest.approx(FE_HALF, rel=1e-12)
    assert printed == pytest.approx(-3.0321998345405179 * 1.0, rel=1e-12)
    assert electric_only_interior_force(sol04, 0.5, 1.0) == pytest.approx(FE_HALF, rel=0.01)
    exact = solve_equilibrium(BALL, 1.0, 0.0)
    assert electric_only_interior_force(exact, 0.5, 1.0) == pytest.approx(0.0, abs=1e-6)


def test_electric_only_outside_is_coulomb_for_every_k(sol04):
    assert electric_only_interior_force(sol04, 2.0, 1.0) == pytest.approx(0.25, rel=1e-10)


def test_collision_balance():
    Q = -2.0321998345405179
    assert collision_balance(Q, 0.4, 1.0) == pytest.approx(M_EXACT, rel=1e-12)
    assert collision_balance(2 * Q, 0.4, 1.0) == pytest.approx(2 * M_EXACT, rel=1e-12)
    assert collision_balance(Q, 0.0, 1.0) == 0.0


def test_collision_from_solver(sol04):
    assert collision_balance(sol04.Q, 0.4, 1.0) == pytest.approx(M_EXACT, rel=0.02)


def test_force_profile_and_table(sol04):
    rows = force_profile(sol04, [0.5, 1.0, 2.0])
    assert math.isnan(rows[1][1])
    assert rows[2][3] == 0.0
    assert rows[0][3] == pytest.approx(0.5 * collision_balance(sol04.Q, 0.4, 1.0))
    lines = force_table(rows).splitlines()
    assert lines[0] == "rho,F_k,F_electric_only,F_collision"
    assert len(lines) == 4


def test_closed_form_distribution_exterior():
    d = equilibrium_distribution_ball(1.0, 1.0, 0.4)
    assert enclosed_charge(d, 2.0) == pytest.approx(1.0, abs=1e-14)
