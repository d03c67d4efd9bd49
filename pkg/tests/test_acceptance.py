"""Acceptance gate: one check per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from kpotential.domain import Ball, NestedShells, RadialGrid, VoxelSet
from kpotential.equilibrium import (
    alternating_geometry,
    assemble_energy_matrix,
    ball_closed_form,
    constancy_check,
    convexity_check,
    equilibrium_basis,
    nested_spheres_charges,
    solve_equilibrium,
    total_variation,
)
from kpotential.forces import coulomb_force_outside, gradient_force, mollified_force
from kpotential.functional import (
    SampledRadialFunction,
    capacity,
    conductor_grid,
    density_ball,
    density_tent,
    hardy_check,
    poincare_bounds,
    poincare_constant,
    rearrange,
    rearrangement_inequalities,
    superlevel_volume,
)
from kpotential.photoeffect import (
    PairModel,
    force_scan,
    pair_parameter_t,
    t_residual,
    threshold_energy_parts,
    threshold_scaling,
)
from kpotential.radial import PotentialField, eval_radial_gradient
from kpotential.voxel import solve_voxel_equilibrium

# 30-digit reference for the pair parameter at (r, delta, k) = (1, 0.1, 0.4)
T_REF = 0.39308822696488178991


def _rel(a, b):
    return abs(a - b) / abs(b)


def criterion_1():
    worst, slowest = 0.0, 0.0
    for r in (0.5, 1.0, 2.5):
        t0 = time.perf_counter()
        C = capacity(Ball(r), RadialGrid.build(Ball(r), 10.0 * r, 2000))
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, _rel(C, r))
    return worst <= 0.01 and slowest < 1.0, f"max rel error {worst:.2e}, slowest {slowest:.3f} s"


def _shooting(r):
    def slope(k):
        s = solve_ivp(lambda t, y: [y[1], -4 * math.pi * k**2 * y[0]], (0, r), [0, 1], rtol=1e-12, atol=1e-14)
        return s.y[1, -1]

    return brentq(slope, 0.1 / r, 0.6 / r, xtol=1e-14)


def criterion_2():
    k1 = poincare_constant(Ball(1.0))
    lo, hi = poincare_bounds(1.0)
    oracle = _shooting(1.0)
    scaled = max(_rel(poincare_constant(Ball(r)) * r, k1) for r in (0.5, 2.0, 4.0))
    ok = lo <= k1 <= hi and _rel(k1, oracle) <= 0.01 and _rel(k1, 0.4431) <= 0.01 and scaled <= 0.005
    return ok, f"k = {k1:.6f} in [{lo:.6f}, {hi:.6f}], shooting {oracle:.6f}, 1/r spread {scaled:.1e}"


def criterion_3():
    t0 = time.perf_counter()
    sol = solve_equilibrium(Ball(1.0), 1.0, 0.4)
    elapsed = time.perf_counter() - t0
    A, Q, qh = ball_closed_form(1.0, 1.0, 0.4)
    errs = [_rel(sol.A, A), _rel(sol.Q, Q), _rel(sol.q_hat, qh)]
    dev = constancy_check(sol)
    ok = max(errs) <= 0.02 and Q + qh == 1.0 and dev <= 0.005 * sol.A and elapsed < 5.0
    return ok, (f"A {sol.A:.6f} Q {sol.Q:.6f} q_hat {sol.q_hat:.6f} (closed {A:.6f}), "
                f"constancy {dev:.1e}, {elapsed:.2f} s")


def criterion_4():
    charges = nested_spheres_charges(NestedShells(0.5, ((0.6, 0.7), (0.8, 0.9))), 1.0)
    err = max(abs(c - s) for (_, c), s in zip(charges, (1, -1, 1, -1, 1)))
    tv = [total_variation(nested_spheres_charges(alternating_geometry(0.2, m), 1.0)) for m in range(1, 8)]
    slope, icpt = np.polyfit(np.arange(1, 8), tv, 1)
    linear = np.allclose(tv, slope * np.arange(1, 8) + icpt, atol=1e-8) and slope > 0
    return err <= 1e-8 and linear, f"max charge error {err:.1e}, total variation slope {slope:.6f} per shell"


def criterion_5():
    ball = Ball(1.0)
    grid = conductor_grid(ball, RadialGrid.build(ball, 10.0, 600))
    G = assemble_energy_matrix(equilibrium_basis(ball, grid, 8), ball, 0.3, grid)
    rng = np.random.default_rng(11)
    n = G.entries.shape[0]
    violations = 0
    for _ in range(1000):
        c1, c2 = rng.normal(size=(2, n))
        c1 += (1.0 - c1.sum()) / n
        c2 += (1.0 - c2.sum()) / n
        mid, avg = convexity_check(c1, c2, G=G)
        violations += mid > avg + 1e-10 * max(1.0, abs(avg))
    a = solve_equilibrium(ball, 1.0, 0.4, RadialGrid.build(ball, 10.0, 2000), cells_per_shell=4)
    b = solve_equilibrium(ball, 1.0, 0.4, RadialGrid.build(ball, 15.0, 3001), cells_per_shell=7)
    spread = max(_rel(x, y) for x, y in ((a.A, b.A), (a.Q, b.Q), (a.q_hat, b.q_hat)))
    return violations == 0 and spread <= 0.02, f"{violations} violations in 1000 pairs, discretization spread {spread:.1e}"


def criterion_6():
    sol0 = solve_equilibrium(Ball(1.0), 1.0, 0.0)
    ext = max(_rel(gradient_force(sol0.potential, x, 1.0), coulomb_force_outside(1.0, 1.0, x)) for x in (1.5, 2.0, 4.0))
    sol = solve_equilibrium(Ball(1.0), 1.0, 0.4)
    surf = abs(eval_radial_gradient(sol.potential, 1.0, "outer"))
    inner = max(abs(gradient_force(sol.potential, x, 1.0)) for x in np.linspace(0.05, 0.95, 19))
    grid = RadialGrid.uniform(4.0, 40001)
    U = np.cos(grid.node_radii) * np.exp(-grid.node_radii)
    field = PotentialField(grid, U, float(U[-1] * 4.0))
    exact = (math.sin(1.0) + math.cos(1.0)) * math.exp(-1.0)
    rs = np.array([0.2, 0.1, 0.05])
    errs = [abs(mollified_force(field, 1.0, 1.0, s) - exact) for s in rs]
    slope = float(np.polyfit(np.log(rs), np.log(errs), 1)[0])
    ok = ext <= 0.01 and inner <= 0.005 * surf and slope >= 1.9
    return ok, f"exterior error {ext:.1e}, interior/surface {inner / surf:.1e}, mollifier slope {slope:.3f}"


def criterion_7():
    t = pair_parameter_t(1.0, 0.1, 0.4)
    res = abs(t_residual(t, 1.0, 0.1, 0.4))
    closed, quad = threshold_energy_parts(1.0, 0.1, 1.0, 1.0)
    worst = max(
        float(force_scan(PairModel(r, f * r, kr / r)).max())
        for r in (0.5, 1.0, 2.0) for f in (0.05, 0.1) for kr in (0.35, 0.44)
    )
    slope = threshold_scaling([10.0, 20.0, 40.0, 80.0], 0.1)
    ok = (abs(t - T_REF) <= 1e-9 and res <= 1e-12 and _rel(closed, 6.3131e-4) <= 1e-4
          and abs(closed - quad) <= 1e-10 * closed and worst < 0.0 and abs(slope + 4.0) <= 0.1)
    return ok, (f"t {t:.12f} residual {res:.1e}, E_min {closed:.6e} (quad gap {abs(closed - quad):.1e}), "
                f"max scanned force {worst:.2e}, slope {slope:.4f}")


def criterion_8():
    grid = RadialGrid.uniform(3.0, 301)
    worst_meas, worst_dr = 0.0, 0.0
    for fn in (lambda x: np.exp(-8 * (x - 0.8) ** 2) + 0.5 * np.exp(-8 * (x - 2.0) ** 2),
               lambda x: np.sin(3 * x) ** 2 * np.exp(-x),
               lambda x: np.exp(-x**2)):
        f = SampledRadialFunction.from_callable(grid, fn)
        fs = rearrange(f)
        for t in (0.1, 0.3, 0.6):
            worst_meas = max(worst_meas, abs(superlevel_volume(fs, t) - superlevel_volume(f, t)))
        worst_dr = max(worst_dr, rearrangement_inequalities(f)[1])
    rng = np.random.default_rng(12345)
    worst_h = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 40))
        x = np.sort(np.concatenate([[0.0], rng.uniform(0.0, 1.0, n - 2), [1.0]]))
        g = np.abs(rng.standard_cauchy(n)) if rng.random() < 0.3 else rng.exponential(size=n)
        worst_h = max(worst_h, hardy_check(x, g))
    fn = lambda p: np.cos(p[:, 0]) * np.exp(p[:, 1]) + p[:, 2] ** 2  # noqa: E731
    x0 = np.array([0.2, 0.1, -0.3])
    rs = np.array([0.1, 0.05, 0.025])
    gaps = [abs(density_ball(fn, x0, r) - density_tent(fn, x0, r)) for r in rs]
    slope = float(np.polyfit(np.log(rs), np.log(gaps), 1)[0])
    ok = worst_meas <= 1e-12 and worst_dr <= 1.0 + 1e-3 and worst_h <= 1.0 and slope >= 1.9
    return ok, (f"level-set volume gap {worst_meas:.1e}, max Dirichlet ratio {worst_dr:.4f}, "
                f"max Hardy ratio {worst_h:.4f}, density slope {slope:.3f}")


def criterion_9():
    t0 = time.perf_counter()
    eq = solve_voxel_equilibrium(VoxelSet.ball(1.0, 1.0 / 32), 1.0, 0.4)
    elapsed = time.perf_counter() - t0
    A = ball_closed_form(1.0, 1.0, 0.4)[0]
    err = _rel(eq.A, A)
    return err <= 0.05 and elapsed < 60.0, f"A_h {eq.A:.5f} vs {A:.5f} ({100 * err:.2f}%), {elapsed:.1f} s"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


def _line(i, ok, detail):
    return f"criterion {i}: {'PASS' if ok else 'FAIL'} ({detail})"


@pytest.mark.parametrize("i", range(1, len(CRITERIA) + 1))
def test_criterion(i, capsys):
    ok, detail = CRITERIA[i - 1]()
    with capsys.disabled():
        print("\n" + _line(i, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for i, check in enumerate(CRITERIA, 1):
        ok, detail = check()
        results.append(ok)
        print(_line(i, ok, detail), flush=True)
    raise SystemExit(0 if all(results) else 1)
