"""Command-line entry point.

Human reports go to stdout as ``key: value`` lines with 6 significant digits;
tables requested with ``--out`` are CSV with 12.  Exit codes: 0 success,
1 failed verification checks, 2 usage or validation errors, 3 numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .domain import (
    DEFAULT_DELTA,
    Ball,
    ChargeDistribution,
    ModelParams,
    NestedShells,
    RadialGrid,
    RadialGridSpec,
    Scenario,
    SurfaceSphere,
    VoxelGridSpec,
    VoxelSet,
    analytic_capacity,
    load_scenario,
    validate,
)
from .errors import KPotentialError, ScenarioError

EXIT_OK, EXIT_CHECKS, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def fmt(x) -> str:
    return f"{float(x):.6g}"


# ---------------------------------------------------------------------------
# Scenario resolution: file values first, flags override
# ---------------------------------------------------------------------------


def _parse_shells(text: str) -> tuple[tuple[float, float], ...]:
    try:
        pairs = []
        for item in text.split(","):
            a, b = item.split(":")
            pairs.append((float(a), float(b)))
        return tuple(pairs)
    except ValueError:
        raise UsageError("--shells expects 'inner:outer,inner:outer,...'") from None


def _shape_of(g) -> str:
    return {Ball: "ball", NestedShells: "nested", VoxelSet: "voxel"}[type(g)]


def _geometry(args, base: Scenario | None):
    g = base.geometry if base else None
    shape = args.shape or (_shape_of(g) if g is not None else "ball")
    if g is not None and _shape_of(g) != shape:
        g = None
    if shape == "ball":
        if args.radius is not None:
            return Ball(args.radius)
        if g is None:
            raise UsageError("--radius is required for --shape ball")
        return g
    if shape == "nested":
        inner = args.inner_radius if args.inner_radius is not None else getattr(g, "inner_radius", None)
        if inner is None:
            raise UsageError("--inner-radius is required for --shape nested")
        shells = _parse_shells(args.shells) if args.shells else getattr(g, "shell_faces", ())
        outer = args.outer_sphere if args.outer_sphere is not None else getattr(g, "outer_sphere_radius", None)
        return NestedShells(inner, tuple(shells), outer)
    if args.mask_file:
        from .voxel import read_mask

        try:
            return read_mask(args.mask_file)
        except OSError as exc:
            raise UsageError(f"cannot read mask: {exc}") from None
    if args.radius is not None:
        spacing = args.spacing
        if spacing is None:
            spacing = base.grid.spacing if base and isinstance(base.grid, VoxelGridSpec) else 1.0 / 32.0
        if not spacing > 0:
            raise UsageError("--spacing must be positive")
        return VoxelSet.ball(args.radius, spacing)
    if g is None:
        raise UsageError("--shape voxel needs --mask-file or --radius")
    return g


def resolve_scenario(args) -> Scenario:
    base = load_scenario(args.scenario) if args.scenario else None
    geometry = _geometry(args, base)
    params = base.params if base else ModelParams()
    overrides = {
        name: getattr(args, attr)
        for name, attr in (("k", "k"), ("q", "charge"), ("e", "e"), ("delta", "delta"))
        if getattr(args, attr) is not None
    }
    params = replace(params, **overrides)
    if isinstance(geometry, VoxelSet):
        grid = VoxelGridSpec(geometry.spacing)
    else:
        old = base.grid if base and isinstance(base.grid, RadialGridSpec) else None
        r_max = args.r_max if args.r_max is not None else (
            old.r_max if old else 10.0 * geometry.outer_radius
        )
        nodes = args.nodes if args.nodes is not None else (old.node_count if old else 2000)
        grid = RadialGridSpec(float(r_max), int(nodes))
    charges = base.charges if base else None
    outputs = base.requested_outputs if base else ()
    return Scenario(geometry, params, grid, outputs, charges)


def _checked(args, radial_only: bool = False) -> Scenario:
    sc = resolve_scenario(args)
    if radial_only and isinstance(sc.geometry, VoxelSet):
        raise UsageError(f"'{args.command}' needs a radial geometry; use the voxel command")
    problems = validate(sc)
    if problems:
        raise UsageError("; ".join(problems))
    return sc


def _radial_grid(sc: Scenario) -> RadialGrid:
    return RadialGrid.build(sc.geometry, sc.grid.r_max, sc.grid.node_count)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _emit(lines: list[tuple[str, object]]) -> None:
    for key, value in lines:
        text = fmt(value) if isinstance(value, (float, np.floating)) else str(value)
        print(f"{key}: {text}")


def _write(path: str | None, text: str) -> list[tuple[str, object]]:
    if not path:
        return []
    Path(path).write_text(text)
    return [("table", path)]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else f"{v:.12g}" for v in row])
    return buf.getvalue()


def _charge_rows(dist: ChargeDistribution):
    """``radius_or_shell`` is a radius for surface spheres and ``a:b`` for shells."""
    for c in dist.components:
        if isinstance(c, SurfaceSphere):
            yield (f"{c.radius:.12g}", c.charge)
        else:
            yield (f"{c.a:.12g}:{c.b:.12g}", c.charge)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_capacity(args) -> int:
    sc = _checked(args)
    g = sc.geometry
    from .functional import capacity

    if isinstance(g, VoxelSet):
        C = capacity(g)
        out = [("shape", "voxel"), ("spacing", g.spacing), ("C", C)]
        if args.radius is not None:
            out += [("C_analytic", args.radius), ("rel_error", abs(C - args.radius) / args.radius)]
    else:
        C = capacity(g, _radial_grid(sc))
        exact = analytic_capacity(g)
        out = [("shape", _shape_of(g)), ("C", C), ("C_analytic", exact),
               ("rel_error", abs(C - exact) / exact)]
    _emit(out)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    from .equilibrium import ball_closed_form, constancy_check, solve_equilibrium

    sc = _checked(args, radial_only=True)
    p = sc.params
    sol = solve_equilibrium(sc.geometry, p.q, p.k, _radial_grid(sc))
    out = [("shape", _shape_of(sc.geometry)), ("k", p.k), ("q", p.q), ("A", sol.A),
           ("Q", sol.Q), ("q_hat", sol.q_hat), ("W", sol.W),
           ("constancy_deviation", constancy_check(sol)), ("nodes", sc.grid.node_count)]
    if isinstance(sc.geometry, Ball):
        A, Q, qh = ball_closed_form(sc.geometry.radius, p.q, p.k)
        out += [("A_closed_form", A), ("Q_closed_form", Q), ("q_hat_closed_form", qh)]
    out += _write(args.out, _csv(["radius_or_shell", "charge"], _charge_rows(sol.charges)))
    _emit(out)
    return EXIT_OK


def cmd_potential(args) -> int:
    from .radial import eval_potential, potential_table, solve_radial_potential

    sc = _checked(args, radial_only=True)
    p = sc.params
    g = sc.geometry
    charges = sc.charges
    if charges is None or not charges.components:
        charges = ChargeDistribution((SurfaceSphere(g.outer_radius, p.q),))
    field = solve_radial_potential(_radial_grid(sc), charges, p.k)
    out = [("shape", _shape_of(g)), ("k", p.k), ("total_charge", charges.total()),
           ("A_far", field.far_coefficient), ("U_center", eval_potential(field, 0.0)),
           ("U_outer", eval_potential(field, g.outer_radius))]
    out += _write(args.out, potential_table(field))
    _emit(out)
    return EXIT_OK


def cmd_forces(args) -> int:
    from .equilibrium import solve_equilibrium
    from .forces import (
        collision_balance,
        coulomb_force_outside,
        electric_only_force_formulas,
        electric_only_interior_force,
        force_profile,
        force_table,
        gradient_force,
    )

    sc = _checked(args, radial_only=True)
    p = sc.params
    g = sc.geometry
    R = g.outer_radius
    sol = solve_equilibrium(g, p.q, p.k, _radial_grid(sc))
    rows = force_profile(sol, np.linspace(0.0, 3.0 * R, 61), p.e)
    interior = [abs(f) for rho, f, _, _ in rows if rho < R and not math.isnan(f)]
    out = [("shape", _shape_of(g)), ("k", p.k), ("q", p.q), ("e", p.e),
           ("F_k_at_2R", gradient_force(sol.potential, 2.0 * R, p.e)),
           ("coulomb_at_2R", coulomb_force_outside(p.q, p.e, 2.0 * R)),
           ("A_far", sol.potential.far_coefficient),
           ("max_interior_F_k", max(interior) if interior else 0.0)]
    if isinstance(g, Ball):
        printed, derived = electric_only_force_formulas(R, p.q, p.k, p.e, 0.5 * R)
        out += [("electric_only_at_half_r", electric_only_interior_force(sol, 0.5 * R, p.e)),
                ("electric_only_formula_derived", derived),
                ("electric_only_formula_constant_6", printed),
                ("collision_M", collision_balance(sol.Q, p.k, R))]
    out += _write(args.out, force_table(rows))
    _emit(out)
    return EXIT_OK


def cmd_photoeffect(args) -> int:
    from .photoeffect import (
        PairModel,
        pair_force_table,
        restoring_force,
        t_residual,
        threshold_energy_parts,
        threshold_scaling,
    )

    sc = _checked(args, radial_only=True)
    if not isinstance(sc.geometry, Ball):
        raise UsageError("photoeffect needs --shape ball")
    p = sc.params
    r = sc.geometry.radius
    m = PairModel(r, p.delta, p.k, p.q, p.e)
    closed, quad = threshold_energy_parts(r, p.delta, p.q, p.e)
    out = [("r", r), ("delta", p.delta), ("k", p.k), ("t", m.t),
           ("t_status", "out-of-range" if m.flagged else "ok"),
           ("balance_residual", t_residual(m.t, r, p.delta, p.k)),
           ("restoring_force_mid", restoring_force(r + 0.5 * p.delta, m)),
           ("E_min", closed), ("E_min_quadrature", quad),
           ("scaling_exponent_fixed_delta",
            threshold_scaling(100.0 * p.delta * np.array([1.0, 2.0, 4.0, 8.0]), p.delta, p.q, p.e))]
    out += _write(args.out, pair_force_table(m))
    _emit(out)
    return EXIT_OK


def cmd_nested(args) -> int:
    from .equilibrium import nested_potential, nested_spheres_charges, total_variation

    if args.shape is None:
        args.shape = "nested"
    sc = _checked(args, radial_only=True)
    if not isinstance(sc.geometry, NestedShells):
        raise UsageError("nested needs --shape nested")
    charges = nested_spheres_charges(sc.geometry, sc.params.q)
    out = [("faces", len(charges))]
    out += [(f"q_{i + 1} (r={fmt(a)})", c) for i, (a, c) in enumerate(charges)]
    out += [("total_variation", total_variation(charges)),
            ("U_inner", nested_potential(charges, sc.geometry.inner_radius))]
    out += _write(args.out, _csv(["radius", "charge"], charges))
    _emit(out)
    return EXIT_OK


def cmd_voxel(args) -> int:
    from . import voxel
    from .equilibrium import ball_closed_form

    if args.shape is None:
        args.shape = "voxel"
    sc = _checked(args)
    if not isinstance(sc.geometry, VoxelSet):
        raise UsageError("voxel needs --shape voxel")
    mask, p = sc.geometry, sc.params
    eq = voxel.solve_voxel_equilibrium(mask, p.q, p.k)
    out = [("spacing", mask.spacing), ("cells", int(mask.occupancy.sum())),
           ("box", "x".join(str(n) for n in eq.field.shape)), ("k", p.k), ("q", p.q),
           ("A", eq.A), ("C_h", eq.capacity), ("volume_h", eq.volume),
           ("surface_charge", eq.surface_charge), ("interior_charge", eq.interior_charge)]
    if not args.skip_check:
        out.append(("max_rel_deviation_from_A", voxel.equilibrium_constancy(eq, mask, p.k)))
    if args.radius is not None and args.mask_file is None:
        A = ball_closed_form(args.radius, p.q, p.k)[0]
        out += [("A_radial_closed_form", A), ("rel_error", abs(eq.A - A) / abs(A))]
    out.append(("k_surrogate (power iteration, not a bound)", voxel.voxel_poincare_estimate(mask)))
    if args.out:
        voxel.export_field(eq.field, args.out)
        out.append(("field", args.out))
    _emit(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    if args.suite != "all" and args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}")
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    judged = [c for c in checks if c.passed is not None]
    failed = sum(1 for c in judged if not c.passed)
    print(f"summary: {len(judged) - failed}/{len(judged)} passed")
    return EXIT_CHECKS if failed else EXIT_OK


COMMANDS = {
    "capacity": cmd_capacity,
    "equilibrium": cmd_equilibrium,
    "potential": cmd_potential,
    "forces": cmd_forces,
    "photoeffect": cmd_photoeffect,
    "nested": cmd_nested,
    "voxel": cmd_voxel,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="YAML scenario file; flags override its values")
    common.add_argument("--shape", choices=("ball", "nested", "voxel"))
    common.add_argument("--radius", type=float)
    common.add_argument("--inner-radius", type=float)
    common.add_argument("--shells", help="shell faces as 'inner:outer,inner:outer'")
    common.add_argument("--outer-sphere", type=float, help="radius of a bare outer sphere")
    common.add_argument("--k", type=float)
    common.add_argument("--charge", type=float, help="total charge q")
    common.add_argument("--e", type=float, help="probe charge")
    common.add_argument("--delta", type=float, help=f"pair separation (default {DEFAULT_DELTA:g})")
    common.add_argument("--nodes", type=int)
    common.add_argument("--r-max", type=float)
    common.add_argument("--spacing", type=float, help="voxel spacing")
    common.add_argument("--mask-file")
    common.add_argument("--out", help="table (CSV) or field (binary) output path")

    parser = argparse.ArgumentParser(prog="kpotential", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "voxel":
            sp.add_argument("--skip-check", action="store_true",
                            help="skip the independent forward solve")
        if name == "verify":
            sp.add_argument("--suite", default="all")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KPotentialError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
