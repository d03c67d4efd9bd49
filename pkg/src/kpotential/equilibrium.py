"""k-equilibrium distributions.

The equilibrium minimises the energy ``c^T G c`` over a finite charge basis
supported in the conductor, subject to ``sum(c) = q``.  The constraint is
carried by one Lagrange multiplier, whose value is the constant interior
potential A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    Ball,
    ChargeDistribution,
    NestedShells,
    RadialGeometry,
    RadialGrid,
    SurfaceSphere,
    VolumeShell,
)
from .errors import DenominatorNonpositive, SingularSystem
from .functional import assemble_energy_matrix, conductor_grid
from .radial import PotentialField, RadialOperator, solve_radial_potential


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    charges: ChargeDistribution
    potential: PotentialField
    A: float
    Q: float
    q_hat: float
    W: float
    geometry: RadialGeometry
    k: float

    @property
    def q(self) -> float:
        return self.charges.total()


# ---------------------------------------------------------------------------
# Closed forms for the ball
# ---------------------------------------------------------------------------


def ball_closed_form(r: float, q: float, k: float) -> tuple[float, float, float]:
    """(A, Q, q_hat) for the ball, with C = r and |E| = 4 pi r^3 / 3."""
    C = r
    vol = 4.0 * math.pi * r**3 / 3.0
    denom = C - k**2 * vol
    if not denom > 0:
        raise DenominatorNonpositive(f"C - k^2|E| = {denom:.6g} <= 0")
    A = q / denom
    Q = -q * k**2 * vol / denom
    q_hat = q * C / denom
    return A, Q, q_hat


def equilibrium_distribution_ball(r: float, q: float, k: float) -> ChargeDistribution:
    """Uniform volume charge Q plus uniform surface charge q_hat."""
    _, Q, q_hat = ball_closed_form(r, q, k)
    comps = []
    if Q != 0.0:
        comps.append(VolumeShell(0.0, r, Q))
    comps.append(SurfaceSphere(r, q_hat))
    return ChargeDistribution(tuple(comps))


# ---------------------------------------------------------------------------
# Numerical minimisation
# ---------------------------------------------------------------------------


def equilibrium_basis(
    geometry: RadialGeometry, grid: RadialGrid, cells_per_shell: int = 4
) -> list:
    """Unit-charge basis: volume shells of ``cells_per_shell`` cells plus face spheres."""
    r = grid.node_radii
    basis: list = []
    for a, b in geometry.segments():
        ia, ib = grid.index_of(a), grid.index_of(b)
        if ia is None or ib is None:
            raise SingularSystem("grid must have nodes on every conductor face")
        ncell = ib - ia
        nshell = max(1, ncell // cells_per_shell)
        cuts = np.linspace(ia, ib, nshell + 1).round().astype(int)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            basis.append(VolumeShell(float(r[lo]), float(r[hi]), 1.0))
    faces = sorted({x for ab in geometry.segments() for x in ab if x > 0})
    faces += geometry.sphere_radii()
    for a in sorted(set(faces)):
        basis.append(SurfaceSphere(float(a), 1.0))
    return basis


def solve_constrained(G: np.ndarray, q: float) -> tuple[np.ndarray, float]:
    """Minimise ``c^T G c`` subject to ``sum(c) = q`` through the saddle system."""
    n = G.shape[0]
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularSystem("energy matrix is not positive definite") from None
    if np.linalg.cond(G) > 1e13:
        raise SingularSystem("energy matrix is singular to working precision")
    S = np.zeros((n + 1, n + 1))
    S[:n, :n] = G
    S[:n, n] = 1.0
    S[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = q
    sol = np.linalg.solve(S, rhs)
    # stationarity G c + mu 1 = 0; the interior potential is -mu
    return sol[:n], float(-sol[n])


def solve_equilibrium(
    geometry: RadialGeometry,
    q: float,
    k: float,
    grid: RadialGrid | None = None,
    cells_per_shell: int = 4,
) -> EquilibriumSolution:
    """Unique minimiser of W_k over Ch(E, q) restricted to the shell basis.

    The basis does not presuppose the answer: every group of
    ``cells_per_shell`` cells in E gets its own uniform shell and every face
    its own surface sphere.
    """
    if grid is None:
        grid = RadialGrid.build(geometry, 10.0 * geometry.outer_radius, 2000)
    grid = conductor_grid(geometry, grid)
    op = RadialOperator(grid, k)
    basis = equilibrium_basis(geometry, grid, cells_per_shell)
    G = assemble_energy_matrix(basis, geometry, k, grid, operator=op)
    if q == 0.0:
        c = np.zeros(len(basis))
        A = 0.0
    else:
        c, A = solve_constrained(np.asarray(G.entries), q)
    comps = tuple(
        type(b)(**{**b.__dict__, "charge": float(ci)}) for b, ci in zip(basis, c)
    )
    charges = ChargeDistribution(comps)
    field = solve_radial_potential(grid, charges, k, operator=op)
    Q = charges.volume_charge
    q_hat = charges.surface_charge
    W = G.energy(c)
    return EquilibriumSolution(charges, field, A, Q, q_hat, W, geometry, float(k))


def constancy_check(sol: EquilibriumSolution) -> float:
    """max - min of U over conductor nodes (interior and faces)."""
    r = sol.potential.grid.node_radii
    inside = np.zeros(len(r), dtype=bool)
    for a, b in sol.geometry.segments():
        inside |= (r >= a) & (r <= b)
    vals = np.asarray(sol.potential.values)[inside]
    return float(vals.max() - vals.min())


def merged_charges(sol: EquilibriumSolution) -> ChargeDistribution:
    """Equilibrium charges collapsed to one volume shell per segment plus faces."""
    comps = []
    for a, b in sol.geometry.segments():
        tot = math.fsum(
            c.charge
            for c in sol.charges.components
            if isinstance(c, VolumeShell) and a <= c.a and c.b <= b
        )
        comps.append(VolumeShell(a, b, tot))
    for c in sol.charges.components:
        if isinstance(c, SurfaceSphere):
            comps.append(c)
    return ChargeDistribution(tuple(comps))


# ---------------------------------------------------------------------------
# Convexity
# ---------------------------------------------------------------------------


def convexity_check(
    l1, l2, E: RadialGeometry | None = None, k: float = 0.0, grid: RadialGrid | None = None, G=None
) -> tuple[float, float]:
    """(W((l1+l2)/2), (W(l1)+W(l2))/2) for coefficient vectors on a shared basis.

    ``l1`` and ``l2`` are coefficient vectors; pass the EnergyMatrix as ``G``
    or the basis-carrying ChargeDistributions with ``E``, ``k`` and ``grid``.
    """
    if G is None:
        if not isinstance(l1, ChargeDistribution):
            raise ValueError("need an energy matrix for coefficient vectors")
        basis = [type(c)(**{**c.__dict__, "charge": 1.0}) for c in l1.components]
        G = assemble_energy_matrix(basis, E, k, grid)
        l1 = [c.charge for c in l1.components]
        l2 = [c.charge for c in l2.components]
    c1 = np.asarray(l1, dtype=float)
    c2 = np.asarray(l2, dtype=float)
    mid = G.energy(0.5 * (c1 + c2))
    avg = 0.5 * (G.energy(c1) + G.energy(c2))
    return mid, avg


# ---------------------------------------------------------------------------
# Nested spheres (Coulomb case)
# ---------------------------------------------------------------------------


def nested_spheres_charges(geometry: NestedShells, q: float) -> list[tuple[float, float]]:
    """Face charges of a charged inner ball inside floating neutral shells (k = 0).

    Unknowns are the charges on every face.  Equations: the inner ball
    carries ``q``; each shell (and the bare outer sphere) is neutral; the
    potential at a shell's inner face equals that at its outer face.
    """
    faces = geometry.face_radii()
    if any(not a < b for a, b in zip(faces[:-1], faces[1:])):
        raise SingularSystem("faces must be strictly increasing (touching faces)")
    n = len(faces)
    faces_arr = np.array(faces)

    def potential_row(rho: float) -> np.ndarray:
        return np.minimum(1.0 / faces_arr, 1.0 / rho)

    rows = []
    rhs = []
    row = np.zeros(n)
    row[0] = 1.0
    rows.append(row)
    rhs.append(q)
    i = 1
    for _ in geometry.shell_faces:
        neutral = np.zeros(n)
        neutral[i] = neutral[i + 1] = 1.0
        rows.append(neutral)
        rhs.append(0.0)
        rows.append(potential_row(faces[i]) - potential_row(faces[i + 1]))
        rhs.append(0.0)
        i += 2
    if geometry.outer_sphere_radius is not None:
        row = np.zeros(n)
        row[i] = 1.0
        rows.append(row)
        rhs.append(0.0)
    M = np.array(rows)
    if np.linalg.cond(M) > 1e12:
        raise SingularSystem("nested-shell system is singular")
    charges = np.linalg.solve(M, np.array(rhs))
    return [(float(a), float(c)) for a, c in zip(faces, charges)]


def nested_potential(charges: list[tuple[float, float]], rho):
    """Coulomb potential ``sum q_n min(1/r_n, 1/rho)`` of face charges."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros(rho.shape)
    for a, c in charges:
        out = out + c * np.minimum(1.0 / a, 1.0 / rho)
    return out if out.ndim else float(out)


def total_variation(charges: list[tuple[float, float]]) -> float:
    return math.fsum(abs(c) for _, c in charges)


def alternating_geometry(inner: float, m: int, outer: float = 1.0) -> NestedShells:
    """Inner ball plus ``m`` equal shells separated by equal gaps below ``outer``."""
    pts = np.linspace(inner, outer, 2 * m + 2)
    faces = tuple((float(pts[2 * i + 1]), float(pts[2 * i + 2])) for i in range(m))
    return NestedShells(inner, faces)
