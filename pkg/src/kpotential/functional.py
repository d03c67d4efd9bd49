"""Energies, capacity, the Poincare-type constant and the inequality toolkit.

The k-inner product is

    (f, g)_k = (1/4pi) int grad f . grad g dv - k^2 int_E f g dv

and every quantity here (energies, energy matrices, the Rayleigh quotient
behind k(E)) is a discretisation of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import eigsh

from .domain import (
    Ball,
    ChargeDistribution,
    ConductorGeometry,
    NestedShells,
    RadialGeometry,
    RadialGrid,
    SurfaceSphere,
    VolumeShell,
    VoxelSet,
    _in_segments,
)
from .errors import GridMismatch, IndefiniteForm, NegativeSamples, SingularSystem
from .radial import (
    FOUR_PI,
    RadialOperator,
    component_loads,
    conductor_weights,
    distribution_loads,
    eval_potential,
    solve_radial_potential,
)

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


def conductor_grid(geometry: RadialGeometry | None, grid: RadialGrid) -> RadialGrid:
    """``grid`` with conductor flags recomputed for ``geometry``."""
    segs = geometry.segments() if geometry is not None else []
    return RadialGrid(grid.node_radii, _in_segments(grid.midpoints, segs))


# ---------------------------------------------------------------------------
# Sampled functions and the k-inner product
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampledRadialFunction:
    """Cell values of a radial function; one sample per grid cell.

    Beyond ``r_max`` the function is continued harmonically, ``f_N c_N / rho``,
    which is the minimal-energy extension.
    """

    grid: RadialGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.shape != (self.grid.n_nodes - 1,):
            raise ValueError("need exactly one sample per grid cell")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_callable(cls, grid: RadialGrid, fn: Callable) -> "SampledRadialFunction":
        return cls(grid, fn(grid.midpoints))


def inner_k(
    f: SampledRadialFunction,
    g: SampledRadialFunction,
    E: RadialGeometry | None,
    k: float,
) -> float:
    """Two-point-flux discretisation of ``(f, g)_k`` on the shared cell grid."""
    if not f.grid.same_as(g.grid):
        raise GridMismatch("inner_k needs both functions on the same grid")
    grid = f.grid
    c = grid.midpoints
    faces = grid.node_radii[1:-1]
    df = np.diff(f.samples)
    dg = np.diff(g.samples)
    dirichlet = np.sum(faces**2 * df * dg / np.diff(c))
    dirichlet += f.samples[-1] * g.samples[-1] * c[-1]
    if E is None or k == 0:
        return float(dirichlet)
    inE = _in_segments(c, E.segments())
    mass = np.sum(grid.cell_volumes[inE] * f.samples[inE] * g.samples[inE])
    return float(dirichlet - k**2 * mass)


def dirichlet_integral(f: SampledRadialFunction) -> float:
    """``int |grad f|^2 dv`` (without the 1/4pi factor)."""
    return FOUR_PI * inner_k(f, f, None, 0.0)


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------


def _component_pairing(comp, field) -> float:
    """``l_comp(U)`` by quadrature of the field against the component."""
    if isinstance(comp, SurfaceSphere):
        return comp.charge * float(eval_potential(field, comp.radius))
    r = field.grid.node_radii
    pts = np.concatenate([[comp.a], r[(r > comp.a) & (r < comp.b)], [comp.b]])
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * _GL3_X
        w = 0.5 * (hi - lo) * _GL3_W
        total += np.sum(w * FOUR_PI * x**2 * eval_potential(field, x))
    return comp.density * total


def energy(
    dist: ChargeDistribution,
    E: RadialGeometry,
    k: float,
    grid: RadialGrid,
    method: str = "matrix",
) -> float:
    """W_k(l) = l(U_k^l).

    ``method="matrix"`` pairs the discrete loads with the nodal solution
    (this is c^T G c); ``method="quadrature"`` integrates the interpolated
    potential against each component instead.
    """
    if not dist.components:
        return 0.0
    grid = conductor_grid(E, grid)
    field = solve_radial_potential(grid, dist, k)
    if method == "matrix":
        return float(distribution_loads(grid, dist) @ field.v)
    if method == "quadrature":
        return math.fsum(_component_pairing(c, field) for c in dist.components)
    raise ValueError("method must be 'matrix' or 'quadrature'")


@dataclass(frozen=True, eq=False)
class EnergyMatrix:
    basis: tuple
    entries: np.ndarray

    def energy(self, coefficients) -> float:
        c = np.asarray(coefficients, dtype=float)
        return float(c @ self.entries @ c)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


def assemble_energy_matrix(
    basis: Sequence,
    E: RadialGeometry,
    k: float,
    grid: RadialGrid,
    operator: RadialOperator | None = None,
) -> EnergyMatrix:
    """``G_ij = l_i(U_j)`` with one potential solve per basis component."""
    grid = conductor_grid(E, grid)
    op = operator if operator is not None else RadialOperator(grid, k)
    L = np.column_stack([component_loads(grid, c) for c in basis])
    V = op.solve(L)
    G = L.T @ V
    asym = np.abs(G - G.T).max()
    if asym > 1e-10 * max(np.abs(G).max(), 1e-300):
        raise SingularSystem("energy matrix lost symmetry")
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return EnergyMatrix(tuple(basis), G)


# ---------------------------------------------------------------------------
# Capacity and the Poincare-type constant
# ---------------------------------------------------------------------------


def capacity(geometry: ConductorGeometry, grid: RadialGrid | None = None, **voxel_kw) -> float:
    """C(F) = (1/4pi) int_{R^3 \\ F} |grad U|^2 dv with U = 1 on F.

    Radial sets use the radial grid and the exact ``A/rho`` tail beyond
    ``r_max``.  Voxel sets are delegated to the voxel solver.
    """
    if isinstance(geometry, VoxelSet):
        from .voxel import voxel_capacity

        return voxel_capacity(geometry, **voxel_kw)
    R = geometry.outer_radius
    if grid is None:
        grid = RadialGrid.build(geometry, 10.0 * R, 2000)
    r = grid.node_radii
    i0 = grid.index_of(R)
    if i0 is None:
        raise ValueError("grid must have a node on the conductor's outer radius")
    # exterior Laplace problem in v = rho U: v(R) = R, v'(r_max) = 0
    n = grid.n_nodes
    h = grid.widths
    m = n - 1 - i0
    v = np.empty(n)
    v[: i0 + 1] = r[: i0 + 1]
    if m > 0:
        diag = np.zeros(n)
        diag[:-1] += 1.0 / h
        diag[1:] += 1.0 / h
        A = diags(
            [diag[i0 + 1 :], -1.0 / h[i0 + 1 :], -1.0 / h[i0 + 1 :]],
            [0, 1, -1],
            format="csc",
        )
        rhs = np.zeros(m)
        rhs[0] = R / h[i0]
        from scipy.sparse.linalg import spsolve

        v[i0 + 1 :] = spsolve(A, rhs)
    # (1/4pi) int |U'|^2 dv = int rho^2 U'^2 drho, U = v/rho with v linear per cell
    total = 0.0
    for j in range(i0, n - 1):
        x = 0.5 * (r[j] + r[j + 1]) + 0.5 * h[j] * _GL3_X
        wq = 0.5 * h[j] * _GL3_W
        slope = (v[j + 1] - v[j]) / h[j]
        vx = v[j] + slope * (x - r[j])
        total += np.sum(wq * (slope * x - vx) ** 2 / x**2)
    total += v[-1] ** 2 / r[-1]
    return float(total)


def poincare_constant(
    geometry: RadialGeometry,
    grid: RadialGrid | None = None,
    convention: str = "normalized",
) -> float:
    """Largest k with k^2 int_F f^2 <= (1/4pi) int |grad f|^2 over radial f.

    ``convention="printed"`` drops the 1/4pi factor, which multiplies the
    result by sqrt(4 pi).
    """
    if grid is None:
        grid = RadialGrid.build(geometry, 10.0 * geometry.outer_radius, 2000)
    grid = conductor_grid(geometry, grid)
    h = grid.widths
    diag = np.zeros(grid.n_nodes)
    diag[:-1] += 1.0 / h
    diag[1:] += 1.0 / h
    K = diags([diag[1:], -1.0 / h[1:], -1.0 / h[1:]], [0, 1, -1], format="csc")
    M = diags(FOUR_PI * conductor_weights(grid)[1:], 0, format="csc")
    v0 = np.ones(grid.n_nodes - 1)
    mu = eigsh(M, k=1, M=K, which="LA", v0=v0, tol=1e-12, return_eigenvectors=False)[0]
    kk = math.sqrt(1.0 / mu)
    if convention == "printed":
        return kk * math.sqrt(FOUR_PI)
    if convention != "normalized":
        raise ValueError("convention must be 'normalized' or 'printed'")
    return kk


def poincare_bounds(r: float) -> tuple[float, float]:
    """Lower and upper bounds on k(B(0, r)): 3/(4 r sqrt(2 pi)) and sqrt(C/|B|)."""
    lower = 3.0 / (4.0 * r * math.sqrt(2.0 * math.pi))
    upper = math.sqrt(r / (4.0 * math.pi * r**3 / 3.0))
    return lower, upper


# ---------------------------------------------------------------------------
# Symmetric decreasing rearrangement
# ---------------------------------------------------------------------------


def rearrange(f, spacing: float | None = None) -> SampledRadialFunction:
    """Symmetric decreasing rearrangement of sampled data.

    ``f`` is a SampledRadialFunction, or a 3D array of voxel values with
    ``spacing``.  Values are sorted in decreasing order and stacked into
    concentric shells whose volumes are those of the original cells, so the
    value multiset and every superlevel-set volume are preserved exactly.
    """
    if isinstance(f, SampledRadialFunction):
        values = f.samples
        volumes = f.grid.cell_volumes
    else:
        values = np.asarray(f, dtype=float).ravel()
        if spacing is None:
            raise ValueError("3D input needs the voxel spacing")
        volumes = np.full(values.shape, spacing**3)
    if np.any(values < 0):
        raise NegativeSamples("rearrangement needs nonnegative samples")
    order = np.argsort(-values, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(volumes[order])])
    nodes = np.cbrt(3.0 * cum / FOUR_PI)
    grid = RadialGrid(nodes, np.zeros(len(nodes) - 1, dtype=bool))
    return SampledRadialFunction(grid, values[order])


def superlevel_volume(f: SampledRadialFunction, t: float) -> float:
    """|{f > t}| at sample resolution."""
    return float(f.grid.cell_volumes[f.samples > t].sum())


def rearrangement_inequalities(f: SampledRadialFunction) -> tuple[float, float]:
    """(L2 ratio, Dirichlet ratio) of f* against f."""
    fs = rearrange(f)
    l2 = np.sum(f.grid.cell_volumes * f.samples**2)
    l2s = np.sum(fs.grid.cell_volumes * fs.samples**2)
    d = dirichlet_integral(f)
    # Cells placed far from their origin become very thin shells, so the
    # gradient is taken after resampling f* onto f's own (equal-volume) grid.
    resampled = np.interp(f.grid.midpoints, fs.grid.midpoints, fs.samples)
    ds = dirichlet_integral(SampledRadialFunction(f.grid, resampled))
    l2_ratio = float(l2s / l2) if l2 > 0 else 1.0
    d_ratio = float(ds / d) if d > 0 else 1.0
    return l2_ratio, d_ratio


# ---------------------------------------------------------------------------
# Weighted Hardy inequality
# ---------------------------------------------------------------------------

_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)


def hardy_check(x, g) -> float:
    """LHS/RHS of  int_0^r rho^2 (int_rho^r g)^2 drho <= (4/9) int_0^r g^2 x^4 dx.

    ``g`` is sampled at nodes ``x`` (x[0] = 0) and read as piecewise linear;
    both sides are then integrated exactly (4-point Gauss per cell).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.diff(x)
    seg = 0.5 * h * (g[:-1] + g[1:])
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])  # int_{x_j}^r g
    lhs = rhs = 0.0
    for j in range(len(h)):
        t = 0.5 * (1.0 + _GL4_X)
        rho = x[j] + h[j] * t
        gj = g[j] + (g[j + 1] - g[j]) * t
        # int_rho^{x_{j+1}} g = area of the trapezoid from rho to the cell end
        part = 0.5 * (x[j + 1] - rho) * (gj + g[j + 1])
        G = tail[j + 1] + part
        w = 0.5 * h[j] * _GL4_W
        lhs += np.sum(w * rho**2 * G**2)
        rhs += np.sum(w * gj**2 * rho**4)
    rhs *= 4.0 / 9.0
    if rhs == 0.0:
        return 0.0
    return float(lhs / rhs)


# ---------------------------------------------------------------------------
# Local averages (density estimators)
# ---------------------------------------------------------------------------


def _ball_rule(n: int):
    """Product rule on the unit ball: radial Gauss, polar Gauss, azimuthal trapezoid."""
    s, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    mu, wmu = np.polynomial.legendre.leggauss(n)
    phi = 2.0 * math.pi * np.arange(2 * n) / (2 * n)
    wphi = np.full(2 * n, 2.0 * math.pi / (2 * n))
    S, MU, PHI = np.meshgrid(s, mu, phi, indexing="ij")
    W = (ws[:, None, None] * S**2) * wmu[None, :, None] * wphi[None, None, :]
    st = np.sqrt(1.0 - MU**2)
    dirs = np.stack([st * np.cos(PHI), st * np.sin(PHI), MU], axis=-1)
    return S.ravel(), dirs.reshape(-1, 3), W.ravel()


def _local_average(f, x, r, weight, n):
    s, dirs, w = _ball_rule(n)
    pts = np.asarray(x, dtype=float)[None, :] + r * s[:, None] * dirs
    vals = np.asarray(f(pts), dtype=float)
    vol = 4.0 * math.pi / 3.0
    return float(np.sum(w * weight(s) * vals) / vol)


def density_ball(f: Callable, x, r: float, n: int = 24) -> float:
    """(1/|B|) int_{B(x,r)} f dv.  ``f`` maps an (m, 3) array to m values."""
    return _local_average(f, x, r, lambda s: np.ones_like(s), n)


def density_tent(f: Callable, x, r: float, n: int = 24) -> float:
    """(4/|B|) int_{B(x,r)} (1 - |x-y|/r) f dv."""
    return _local_average(f, x, r, lambda s: 4.0 * (1.0 - s), n)
