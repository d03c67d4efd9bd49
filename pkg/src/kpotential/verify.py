"""Self-check suites behind ``kpotential verify``.

Each suite returns a list of ``Check`` records.  ``INFO`` records carry
diagnostics that are reported but not judged (for instance both normalisations
of the Poincare-type constant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import equilibrium as eqm
from . import forces, functional, photoeffect, radial
from .domain import (
    Ball,
    ChargeDistribution,
    ModelParams,
    RadialGrid,
    RadialGridSpec,
    Scenario,
    SurfaceSphere,
    VolumeShell,
    VoxelSet,
    ball_poincare_constant,
    validate,
)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool | None  # None marks an informational line
    detail: str

    def line(self) -> str:
        tag = "INFO" if self.passed is None else ("PASS" if self.passed else "FAIL")
        return f"{tag} {self.name}: {self.detail}"


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _c(name, ok, detail):
    return Check(name, bool(ok), detail)


def suite_domain() -> list[Check]:
    out = []
    ok = validate(Scenario(Ball(1.0), ModelParams(k=0.4), RadialGridSpec(10.0, 2000))) == []
    out.append(_c("valid_ball_scenario", ok, "Ball(1), k=0.4 has no violations"))
    msgs = validate(Scenario(Ball(1.0), ModelParams(k=0.5)))
    out.append(_c("k_upper_bound", any("0.4886" in m for m in msgs), "; ".join(msgs)))
    msgs = validate(VolumeShell(0.5, 0.4, 1.0))
    out.append(_c("reversed_shell", msgs == ["shell bounds reversed"], "; ".join(msgs)))
    d = ChargeDistribution((VolumeShell(0.0, 1.0, 0.7), SurfaceSphere(1.0, 0.3)))
    split = d.split_shell(0, 0.37)
    out.append(_c("split_invariance", abs(split.total() - d.total()) < 1e-15,
                  f"total {d.total():.6g} -> {split.total():.6g}"))
    return out


def suite_radial() -> list[Check]:
    out = []
    g = Ball(1.0)
    grid = RadialGrid.build(g, 10.0, 2000)
    sol = radial.solve_radial_potential(grid, ChargeDistribution((SurfaceSphere(1.0, 1.0),)), 0.0)
    rho = np.array([0.0, 0.5, 1.0, 2.0, 5.0, 20.0])
    err = np.max(np.abs(radial.eval_potential(sol, rho) - np.minimum(1.0, 1.0 / rho.clip(1e-300))))
    out.append(_c("unit_sphere_potential", err < 1e-10, f"max |U - min(1, 1/rho)| = {err:.3g}"))
    uni = ChargeDistribution((VolumeShell(0.0, 1.0, 1.0),))
    f = radial.solve_radial_potential(grid, uni, 0.0)
    x = np.linspace(0.05, 0.95, 10)
    err = np.max(np.abs(radial.eval_potential(f, x) - (3.0 - x**2) / 2.0))
    out.append(_c("uniform_ball_potential", err < 1e-4, f"max error {err:.3g}"))
    eq = eqm.equilibrium_distribution_ball(1.0, 1.0, 0.4)
    fk = radial.solve_radial_potential(grid, eq, 0.4)
    A = eqm.ball_closed_form(1.0, 1.0, 0.4)[0]
    flux = 1.0 + 0.4**2 * 4.0 / 3.0 * math.pi * A
    out.append(_c("flux_identity", _rel(fk.far_coefficient, flux) < 1e-3,
                  f"A_far = {fk.far_coefficient:.6g}, q + k^2 int_E U = {flux:.6g}"))
    back = radial.decompose_distribution(fk, g, 0.4)
    out.append(_c("round_trip", abs(back.volume_charge - eq.volume_charge) < 1e-2 * abs(eq.volume_charge),
                  f"Q {eq.volume_charge:.6g} -> {back.volume_charge:.6g}"))
    return out


def suite_functional() -> list[Check]:
    out = []
    for r in (0.5, 1.0, 2.5):
        C = functional.capacity(Ball(r))
        out.append(_c(f"capacity_ball_{r:g}", _rel(C, r) < 0.01, f"C = {C:.6g}"))
    k1 = functional.poincare_constant(Ball(1.0))
    lo, hi = functional.poincare_bounds(1.0)
    out.append(_c("poincare_ball", lo <= k1 <= hi and _rel(k1, ball_poincare_constant(1.0)) < 0.01,
                  f"k(B1) = {k1:.6g} in [{lo:.6g}, {hi:.6g}], oracle {ball_poincare_constant(1.0):.6g}"))
    out.append(Check("poincare_printed_convention", None,
                     f"without the 1/4pi factor k(B1) = {functional.poincare_constant(Ball(1.0), convention='printed'):.6g}"))
    scal = [functional.poincare_constant(Ball(r)) * r for r in (0.5, 1.0, 2.0, 4.0)]
    spread = (max(scal) - min(scal)) / min(scal)
    out.append(_c("poincare_scaling", spread < 0.005, f"r k(B_r) spread {spread:.3g}"))
    grid = RadialGrid.uniform(3.0, 301)
    fn = functional.SampledRadialFunction.from_callable(grid, lambda x: np.exp(-(x - 1.0) ** 2))
    l2, dr = functional.rearrangement_inequalities(fn)
    out.append(_c("rearrangement", abs(l2 - 1.0) < 1e-12 and dr <= 1.0 + 1e-3,
                  f"L2 ratio {l2:.12g}, Dirichlet ratio {dr:.6g}"))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        x = np.sort(np.concatenate([[0.0], rng.uniform(0.0, 1.0, 30), [1.0]]))
        worst = max(worst, functional.hardy_check(x, rng.normal(size=x.size)))
    out.append(_c("hardy", worst <= 1.0, f"max ratio over 200 inputs {worst:.6g}"))
    func = lambda p: np.sum(p**2, axis=-1)  # noqa: E731
    origin = np.zeros(3)
    rs = np.array([0.2, 0.1, 0.05])
    gaps = [abs(functional.density_ball(func, origin, r) - functional.density_tent(func, origin, r)) for r in rs]
    slope = float(np.polyfit(np.log(rs), np.log(gaps), 1)[0])
    out.append(_c("density_agreement", slope >= 1.9, f"slope {slope:.4g}"))
    return out


def suite_equilibrium() -> list[Check]:
    out = []
    sol = eqm.solve_equilibrium(Ball(1.0), 1.0, 0.4)
    A, Q, qh = eqm.ball_closed_form(1.0, 1.0, 0.4)
    out.append(_c("ball_closed_form", max(_rel(sol.A, A), _rel(sol.Q, Q), _rel(sol.q_hat, qh)) < 0.02,
                  f"A {sol.A:.6g} ({A:.6g}), Q {sol.Q:.6g} ({Q:.6g}), q_hat {sol.q_hat:.6g} ({qh:.6g})"))
    out.append(_c("closed_form_total", Q + qh == 1.0, f"Q + q_hat = {Q + qh!r}"))
    c = eqm.constancy_check(sol)
    out.append(_c("interior_constancy", c <= 0.005 * sol.A, f"max - min = {c:.3g}"))
    nested = eqm.nested_spheres_charges(
        eqm.NestedShells(0.5, ((0.6, 0.7), (0.8, 0.9))), 1.0
    )
    target = [1.0, -1.0, 1.0, -1.0, 1.0]
    err = max(abs(qq - t) for (_, qq), t in zip(nested, target))
    out.append(_c("nested_alternating", err < 1e-8, f"charges {[round(qq, 9) for _, qq in nested]}"))
    tv = [eqm.total_variation(eqm.nested_spheres_charges(eqm.alternating_geometry(0.2, m), 1.0))
          for m in range(1, 6)]
    steps = np.diff(tv)
    out.append(_c("total_variation_growth", np.allclose(steps, 2.0, atol=1e-8),
                  "total variation " + ", ".join(f"{t:.6g}" for t in tv)))
    return out


def suite_forces() -> list[Check]:
    out = []
    sol0 = eqm.solve_equilibrium(Ball(1.0), 1.0, 0.0)
    worst = max(
        _rel(forces.gradient_force(sol0.potential, x, 1.0), forces.coulomb_force_outside(1.0, 1.0, x))
        for x in (1.5, 2.0, 4.0)
    )
    out.append(_c("exterior_coulomb", worst < 0.01, f"max rel error {worst:.3g}"))
    sol = eqm.solve_equilibrium(Ball(1.0), 1.0, 0.4)
    surf = abs(radial.eval_radial_gradient(sol.potential, 1.0, "outer"))
    inner = max(abs(forces.gradient_force(sol.potential, x, 1.0)) for x in np.linspace(0.05, 0.95, 19))
    out.append(_c("interior_force", inner <= 0.005 * surf, f"max interior {inner:.3g}, surface {surf:.6g}"))
    printed, derived = forces.electric_only_force_formulas(1.0, 1.0, 0.4, 1.0, 0.5)
    numeric = forces.electric_only_interior_force(sol, 0.5, 1.0)
    out.append(_c("electric_only_force", _rel(numeric, derived) < 0.01,
                  f"numeric {numeric:.6g}, derived {derived:.6g}"))
    out.append(Check("electric_only_printed_constant", None,
                     f"constant 6 gives {printed:.6g}; 4 pi k^2 gives {derived:.6g}"))
    out.append(Check("collision_M", None, f"M = {forces.collision_balance(sol.Q, 0.4, 1.0):.6g}"))
    grid = RadialGrid.uniform(4.0, 40001)
    r = grid.node_radii
    U = np.cos(r) * np.exp(-r)
    field = radial.PotentialField(grid, U, float(U[-1] * r[-1]))
    exact = (math.sin(1.0) + math.cos(1.0)) * math.exp(-1.0)
    rs = np.array([0.2, 0.1, 0.05])
    errs = [abs(forces.mollified_force(field, 1.0, 1.0, s) - exact) for s in rs]
    slope = float(np.polyfit(np.log(rs), np.log(errs), 1)[0])
    out.append(_c("mollified_convergence", slope >= 1.9, f"slope {slope:.4g}"))
    return out


def suite_photoeffect() -> list[Check]:
    out = []
    m = photoeffect.PairModel(1.0, 0.1, 0.4)
    res = photoeffect.t_residual(m.t, 1.0, 0.1, 0.4)
    out.append(_c("pair_parameter", abs(m.t - 0.393088) < 1e-6 and abs(res) <= 1e-12,
                  f"t = {m.t:.12g}, residual {res:.3g}"))
    closed, quad = photoeffect.threshold_energy_parts(1.0, 0.1, 1.0, 1.0)
    out.append(_c("threshold_energy", abs(closed - quad) <= 1e-10 * closed and _rel(closed, 6.3131e-4) < 1e-4,
                  f"closed {closed:.6g}, quadrature {quad:.6g}"))
    worst = max(
        float(photoeffect.force_scan(photoeffect.PairModel(r, d, k)).max())
        for r in (0.5, 1.0, 2.0) for d in (0.01, 0.1, 0.3) for k in (0.0, 0.2, 0.4)
        if 3.0 - 4.0 * math.pi * k**2 * r**2 > 0
    )
    out.append(_c("restoring_force_negative", worst < 0.0, f"max scanned force {worst:.3g}"))
    slope = photoeffect.threshold_scaling([10.0, 20.0, 40.0, 80.0], 0.1)
    out.append(_c("threshold_scaling", abs(slope + 4.0) <= 0.1, f"slope {slope:.4g}"))
    flagged = photoeffect.PairModel(1.0, 0.1, 0.1)
    out.append(Check("t_out_of_range", None, f"k=0.1 gives t = {flagged.t:.6g} (flagged)"))
    return out


def suite_voxel() -> list[Check]:
    from . import voxel

    out = []
    mask = VoxelSet.ball(1.0, 1.0 / 32.0)
    eq = voxel.solve_voxel_equilibrium(mask, 1.0, 0.4)
    A = eqm.ball_closed_form(1.0, 1.0, 0.4)[0]
    out.append(_c("voxel_ball_A", _rel(eq.A, A) < 0.05, f"A = {eq.A:.6g} vs {A:.6g} (rel {_rel(eq.A, A):.3g})"))
    dev = voxel.equilibrium_constancy(eq, mask, 0.4)
    out.append(_c("voxel_constancy", dev < 0.02, f"max |U - A|/A = {dev:.3g}"))
    est = voxel.voxel_poincare_estimate(VoxelSet.ball(1.0, 1.0 / 16.0))
    out.append(Check("voxel_poincare_surrogate", None, f"k(E) surrogate at h=1/16: {est:.6g}"))
    rng = np.random.default_rng(1)
    box = voxel.VoxelBox(VoxelSet.ball(0.5, 1.0 / 8.0))
    u, v = rng.normal(size=(2,) + box.shape)
    a, b = np.vdot(box.apply(u, 0.3), v), np.vdot(u, box.apply(v, 0.3))
    out.append(_c("operator_symmetry", abs(a - b) <= 1e-10 * abs(a), f"|<Lu,v> - <u,Lv>| = {abs(a - b):.3g}"))
    return out


SUITES = {
    "domain": suite_domain,
    "radial": suite_radial,
    "functional": suite_functional,
    "equilibrium": suite_equilibrium,
    "forces": suite_forces,
    "photoeffect": suite_photoeffect,
    "voxel": suite_voxel,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn()]
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
