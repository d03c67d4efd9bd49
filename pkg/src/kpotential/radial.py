"""Radial k-potentials.

The weak equation ``(phi, U)_k = l(phi)`` is discretised for spherically
symmetric data through the substitution ``v = rho * U``.  The Dirichlet form
becomes ``int v' psi' drho`` and the screening term ``4 pi k^2 int_E v psi``,
so centred second differences on ``v`` give a symmetric tridiagonal system.
Surface charges enter as jumps of ``v'`` and the exterior is closed with the
exact condition ``v'(r_max) = 0``, i.e. ``U' + U/rho = 0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .domain import (
    ChargeDistribution,
    RadialGeometry,
    RadialGrid,
    SurfaceSphere,
    VolumeShell,
    _in_segments,
)
from .errors import IndefiniteForm, NonConductorKink, UnresolvedComponent

FOUR_PI = 4.0 * math.pi
_GL_X, _GL_W = np.polynomial.legendre.leggauss(2)


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------


def conductor_weights(grid: RadialGrid) -> np.ndarray:
    """Lumped (trapezoid) weight of each node inside E."""
    hE = grid.widths * grid.conductor_flag
    w = np.zeros(grid.n_nodes)
    w[:-1] += 0.5 * hE
    w[1:] += 0.5 * hE
    return w


class RadialOperator:
    """Banded Cholesky factor of ``K = D - 4 pi k^2 M_E`` on nodes 1..N."""

    def __init__(self, grid: RadialGrid, k: float):
        self.grid = grid
        self.k = float(k)
        h = grid.widths
        diag = np.zeros(grid.n_nodes)
        diag[:-1] += 1.0 / h
        diag[1:] += 1.0 / h
        diag -= FOUR_PI * self.k**2 * conductor_weights(grid)
        self._diag = diag[1:]
        self._off = -1.0 / h[1:]
        ab = np.zeros((2, grid.n_nodes - 1))
        ab[0, 1:] = self._off
        ab[1, :] = self._diag
        try:
            self._chol = cholesky_banded(ab, lower=False)
        except LinAlgError:
            raise IndefiniteForm(
                f"k={k:g} makes the discrete k-form indefinite on this grid"
            ) from None

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``K v`` for full nodal vectors (``v[0]`` is ignored, result[0] = 0)."""
        inner = v[1:]
        out = self._diag * inner
        out[:-1] += self._off * inner[1:]
        out[1:] += self._off * inner[:-1]
        return np.concatenate([[0.0], out])

    def solve(self, loads: np.ndarray) -> np.ndarray:
        """Nodal ``v`` (with ``v[0] = 0``) for nodal load vector(s)."""
        sol = cho_solve_banded((self._chol, False), loads[1:])
        zero = np.zeros((1,) + sol.shape[1:])
        return np.concatenate([zero, sol])


def component_loads(grid: RadialGrid, comp) -> np.ndarray:
    """Nodal loads ``l(N_i / rho)`` of one component, integrated exactly."""
    r = grid.node_radii
    f = np.zeros(grid.n_nodes)
    if isinstance(comp, SurfaceSphere):
        a = comp.radius
        if not 0.0 < a <= grid.r_max:
            raise UnresolvedComponent(f"sphere at {a} lies outside the grid")
        j = min(int(np.searchsorted(r, a, side="right")) - 1, grid.n_nodes - 2)
        t = (a - r[j]) / (r[j + 1] - r[j])
        f[j] += comp.charge / a * (1.0 - t)
        f[j + 1] += comp.charge / a * t
        return f
    a, b = comp.a, comp.b
    if b > grid.r_max * (1 + 1e-12) or a < 0:
        raise UnresolvedComponent(f"shell [{a}, {b}] lies outside the grid")
    sigma = comp.density
    lo = np.maximum(r[:-1], a)
    hi = np.minimum(r[1:], b)
    cells = np.nonzero(hi > lo)[0]
    for j in cells:
        x = 0.5 * (hi[j] + lo[j]) + 0.5 * (hi[j] - lo[j]) * _GL_X
        w = 0.5 * (hi[j] - lo[j]) * _GL_W
        hj = r[j + 1] - r[j]
        g = FOUR_PI * sigma * x * w
        f[j] += np.sum(g * (r[j + 1] - x) / hj)
        f[j + 1] += np.sum(g * (x - r[j]) / hj)
    return f


def distribution_loads(grid: RadialGrid, dist: ChargeDistribution) -> np.ndarray:
    f = np.zeros(grid.n_nodes)
    for comp in dist.components:
        f += component_loads(grid, comp)
    return f


def check_resolution(grid: RadialGrid, dist: ChargeDistribution, min_cells: int = 4) -> None:
    r = grid.node_radii
    for comp in dist.components:
        if not isinstance(comp, VolumeShell):
            continue
        inside = (r[1:] > comp.a) & (r[:-1] < comp.b)
        hmax = grid.widths[inside].max() if inside.any() else np.inf
        if (comp.b - comp.a) < (min_cells - 1e-9) * hmax:
            raise UnresolvedComponent(
                f"shell [{comp.a}, {comp.b}] spans fewer than {min_cells} cells"
            )


# ---------------------------------------------------------------------------
# Potential fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Nodal samples of a radial potential with its exact ``A_far/rho`` tail."""

    grid: RadialGrid
    values: np.ndarray
    far_coefficient: float
    kinks: tuple[float, ...] = ()

    @property
    def v(self) -> np.ndarray:
        return self.values * self.grid.node_radii


def _origin_value(r: np.ndarray, v: np.ndarray) -> float:
    # v = a rho + c rho^3 through the first two nodes; U(0) = a
    r1, r2 = r[1], r[2]
    return (v[1] / r1 * r2**2 - v[2] / r2 * r1**2) / (r2**2 - r1**2)


def _field_from_v(grid: RadialGrid, v: np.ndarray, kinks=()) -> PotentialField:
    r = grid.node_radii
    values = np.empty_like(v)
    values[1:] = v[1:] / r[1:]
    values[0] = _origin_value(r, v)
    values.setflags(write=False)
    return PotentialField(grid, values, float(v[-1]), tuple(sorted(set(kinks))))


def solve_radial_potential(
    grid: RadialGrid,
    dist: ChargeDistribution,
    k: float,
    tol: float = 1e-8,
    operator: RadialOperator | None = None,
) -> PotentialField:
    """k-potential of a radial charge distribution on ``grid``.

    Raises IndefiniteForm when ``k`` is too large for the conductor and
    UnresolvedComponent when a volume shell spans fewer than four cells.
    """
    check_resolution(grid, dist)
    op = operator if operator is not None else RadialOperator(grid, k)
    f = distribution_loads(grid, dist)
    v = op.solve(f)
    res = op.matvec(v)[1:] - f[1:]
    if np.linalg.norm(res) > tol * max(np.linalg.norm(f), 1e-300):
        raise IndefiniteForm("linear solve did not reach the residual tolerance")
    kinks = [c.radius for c in dist.components if isinstance(c, SurfaceSphere)]
    return _field_from_v(grid, v, kinks)


def eval_potential(field: PotentialField, rho):
    """U(rho): interpolated inside the grid, exact ``A_far/rho`` beyond it."""
    rho = np.asarray(rho, dtype=float)
    r = field.grid.node_radii
    v = field.v
    out = np.empty(rho.shape)
    far = rho >= field.grid.r_max
    out[far] = field.far_coefficient / rho[far]
    near = ~far & (rho < r[1])
    if np.any(near):
        u0 = field.values[0]
        c = (v[1] / r[1] - u0) / r[1] ** 2
        out[near] = u0 + c * rho[near] ** 2
    mid = ~far & ~near
    out[mid] = np.interp(rho[mid], r, v) / rho[mid]
    return out if out.ndim else float(out)


def _quad_derivative(x: np.ndarray, y: np.ndarray, t: float) -> float:
    """Derivative at ``t`` of the quadratic through three points."""
    x0, x1, x2 = x
    y0, y1, y2 = y
    d0 = y0 * ((t - x1) + (t - x2)) / ((x0 - x1) * (x0 - x2))
    d1 = y1 * ((t - x0) + (t - x2)) / ((x1 - x0) * (x1 - x2))
    d2 = y2 * ((t - x0) + (t - x1)) / ((x2 - x0) * (x2 - x1))
    return d0 + d1 + d2


def _one_sided(field_r, U, i_cell_lo, i_cell_hi, side, rho, kink_nodes, n):
    """Pick a 3-node stencil on one side of ``rho`` that does not straddle a kink."""
    if side == "inner":
        idx = [i_cell_lo - 1, i_cell_lo, i_cell_hi]
        if idx[0] < 0 or i_cell_lo in kink_nodes:
            idx = [i_cell_lo, i_cell_hi]
    else:
        idx = [i_cell_lo, i_cell_hi, i_cell_hi + 1]
        if idx[2] >= n or i_cell_hi in kink_nodes:
            idx = [i_cell_lo, i_cell_hi]
    idx = np.array(idx)
    if len(idx) == 2:
        return (U[idx[1]] - U[idx[0]]) / (field_r[idx[1]] - field_r[idx[0]])
    return _quad_derivative(field_r[idx], U[idx], rho)


def _kink_nodes(field: PotentialField) -> set[int]:
    out = set()
    for a in field.kinks:
        i = field.grid.index_of(a)
        if i is not None:
            out.add(i)
    return out


def eval_radial_gradient(field: PotentialField, rho: float, side: str = "outer") -> float:
    """One-sided radial derivative ``dU/drho`` from the ``inner`` or ``outer`` side."""
    if side not in ("inner", "outer"):
        raise ValueError("side must be 'inner' or 'outer'")
    if not rho > 0:
        raise ValueError("rho must be positive")
    grid = field.grid
    r = grid.node_radii
    n = grid.n_nodes
    if rho > grid.r_max or (rho == grid.r_max and side == "outer"):
        return -field.far_coefficient / rho**2
    node = grid.index_of(rho)
    if node is not None:
        if side == "inner":
            lo, hi = node - 1, node
        else:
            lo, hi = node, node + 1
        rho = float(r[node])
    else:
        lo = int(np.searchsorted(r, rho)) - 1
        hi = lo + 1
    return float(_one_sided(r, field.values, lo, hi, side, rho, _kink_nodes(field), n))


def coulomb_superposition(
    spheres: Sequence[SurfaceSphere], grid: RadialGrid | None = None
) -> PotentialField:
    """Pure Coulomb field ``sum q_n min(1/r_n, 1/rho)`` sampled exactly at the nodes."""
    radii = [s.radius for s in spheres]
    if grid is None:
        r_max = 10.0 * max(radii, default=1.0)
        grid = RadialGrid.build(None, r_max, 2000, radii)
    r = grid.node_radii
    values = np.zeros(grid.n_nodes)
    for s in spheres:
        with np.errstate(divide="ignore"):
            values += s.charge * np.minimum(1.0 / s.radius, 1.0 / r)
    values.setflags(write=False)
    total = math.fsum(s.charge for s in spheres)
    return PotentialField(grid, values, total, tuple(sorted(set(radii))))


# ---------------------------------------------------------------------------
# Recovering the charge distribution from a potential
# ---------------------------------------------------------------------------


def _jumps(r, U, nodes, kinks: set[int]) -> dict[int, float]:
    """Surface charge ``-rho^2 (U'+ - U'-)`` at ``nodes``, stencils kept off other kinks."""
    out = {}
    for i in nodes:
        left = [i - 2, i - 1, i] if i >= 2 and (i - 1) not in kinks else [i - 1, i]
        right = [i, i + 1, i + 2] if (i + 1) not in kinks else [i, i + 1]
        dl = _stencil_derivative(r, U, left, r[i])
        dr = _stencil_derivative(r, U, right, r[i])
        out[i] = float(-r[i] ** 2 * (dr - dl))
    return out


def _stencil_derivative(r, U, idx, t):
    idx = np.array(idx)
    if len(idx) == 2:
        return (U[idx[1]] - U[idx[0]]) / (r[idx[1]] - r[idx[0]])
    return _quad_derivative(r[idx], U[idx], t)


def _find_kinks(r, U, nodal: np.ndarray, threshold: float) -> dict[int, float]:
    """Nodes carrying a concentrated (surface) charge.

    A node is a kink when its nodal charge stands out from the mean of its
    neighbours; smooth or piecewise-constant densities never do.  The
    surface charge itself is then read off the one-sided derivative jump.
    """
    excess = np.zeros_like(nodal)
    excess[1:-1] = nodal[1:-1] - 0.5 * (nodal[:-2] + nodal[2:])
    # a density step smears over two cells and leaves |excess| <= |c[i-1] - c[i+1]|/2
    spread = np.zeros_like(nodal)
    spread[1:-1] = np.abs(nodal[:-2] - nodal[2:])
    hits = np.nonzero(np.abs(excess) > threshold + spread)[0]
    idx = [int(i) for i in hits if 0 < i < len(r) - 2]
    kept: list[int] = []
    for i in sorted(idx, key=lambda j: -abs(excess[j])):
        if all(abs(i - j) > 1 for j in kept):
            kept.append(i)
    if not kept:
        return {}
    return _jumps(r, U, sorted(kept), set(kept))


def _runs(sigma: np.ndarray, jump_tol: float) -> list[tuple[int, int]]:
    """Split an index range into runs of nearly constant density."""
    if len(sigma) == 0:
        return []
    runs = []
    start = 0
    for i in range(1, len(sigma)):
        if abs(sigma[i] - sigma[i - 1]) > jump_tol:
            runs.append((start, i - 1))
            start = i
    runs.append((start, len(sigma) - 1))
    return runs


def decompose_distribution(
    field: PotentialField,
    geometry: RadialGeometry,
    k: float,
    rel_tol: float = 1e-3,
) -> ChargeDistribution:
    """Recover the charge distribution whose k-potential is ``field``.

    Surface charges come from one-sided derivative jumps, volume density
    from ``-(1/4pi) Lap U - k^2 U`` evaluated with second differences of
    ``v``.  Charges or densities below ``rel_tol`` of the field's scale are
    treated as numerical noise.
    """
    grid = field.grid
    r = grid.node_radii
    U = np.asarray(field.values, dtype=float)
    v = U * r
    n = grid.n_nodes
    segs = geometry.segments()
    spheres = geometry.sphere_radii()

    op_flags = _in_segments(grid.midpoints, segs)
    egrid = RadialGrid(r, op_flags)
    h = egrid.widths
    w = np.zeros(n)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    wE = conductor_weights(egrid)

    # second differences of v, lumped screening term
    lap = np.zeros(n)
    lap[1:-1] = (v[2:] - v[1:-1]) / h[1:] - (v[1:-1] - v[:-2]) / h[:-1]
    resid = -lap - FOUR_PI * k**2 * wE * v
    nodal = np.zeros(n)
    nodal[1:-1] = r[1:-1] * resid[1:-1]

    scale = max(abs(field.far_coefficient), float(np.abs(nodal).sum()), 1e-300)
    kinks = _find_kinks(r, U, nodal, rel_tol * scale)

    def on_conductor(x):
        eps = 1e-9 * max(1.0, x)
        return any(a - eps <= x <= b + eps for a, b in segs) or any(
            abs(x - s) <= eps for s in spheres
        )

    comps: list = []
    for i, s in sorted(kinks.items()):
        if not on_conductor(r[i]):
            raise NonConductorKink(f"derivative jump at rho={r[i]:.6g} outside the conductor")
        comps.append(SurfaceSphere(float(r[i]), s))

    # volume density per node, masked around kinks
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(w > 0, resid / (FOUR_PI * np.maximum(r, 1e-300) * w), 0.0)
    sigma[0] = sigma[1] if n > 1 else 0.0
    bad = np.zeros(n, dtype=bool)
    for i in kinks:
        bad[max(i - 1, 0) : i + 2] = True
    in_E = _in_segments(r, segs)
    sig_scale = float(np.abs(sigma[in_E & ~bad]).max()) if np.any(in_E & ~bad) else 0.0
    # densities far below "whole charge spread over E" are round-off
    outer = max(b for _, b in segs) if segs else r[-1]
    sig_scale = max(sig_scale, scale / (FOUR_PI * outer**3 / 3.0))

    # intervals between E boundaries and kinks
    cuts = sorted({*(x for ab in segs for x in ab), *(float(r[i]) for i in kinks)})
    for lo_r, hi_r in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo_r + hi_r)
        if not any(a <= mid <= b for a, b in segs):
            continue
        lo = int(np.searchsorted(r, lo_r - 1e-12 * max(1, lo_r)))
        hi = int(np.searchsorted(r, hi_r + 1e-12 * max(1, hi_r), side="right")) - 1
        if hi - lo < 2:
            continue
        # interval charge from the flux through its ends
        d_lo = _stencil_derivative(r, U, [lo, lo + 1, lo + 2], r[lo]) if lo > 0 else 0.0
        d_hi = _stencil_derivative(r, U, [hi - 2, hi - 1, hi], r[hi])
        sl = slice(lo, hi + 1)
        integral = trapezoid(FOUR_PI * r[sl] ** 2 * U[sl], r[sl])
        q_int = -(r[hi] ** 2 * d_hi - r[lo] ** 2 * d_lo) - k**2 * integral

        # density profile on interior nodes, bad nodes filled from neighbours
        idx = np.arange(lo, hi + 1)
        prof = sigma[idx].copy()
        good = ~bad[idx]
        good[0] = good[-1] = False
        if not good.any():
            good[len(idx) // 2] = True
        prof = np.interp(np.arange(len(idx)), np.nonzero(good)[0], prof[good])
        if sig_scale == 0.0 or np.abs(prof).max() <= rel_tol * sig_scale:
            if abs(q_int) > rel_tol * scale:
                comps.append(VolumeShell(float(r[lo]), float(r[hi]), float(q_int)))
            continue
        runs = _runs(prof, 0.02 * sig_scale)
        weights = []
        bounds = []
        for a_i, b_i in runs:
            ra = r[idx[a_i]] if a_i > 0 else r[lo]
            rb = r[idx[b_i]] if b_i < len(idx) - 1 else r[hi]
            vol = FOUR_PI * (rb**3 - ra**3) / 3.0
            weights.append(float(np.mean(prof[a_i : b_i + 1])) * vol)
            bounds.append((float(ra), float(rb)))
        total_w = math.fsum(weights)
        for (ra, rb), wt in zip(bounds, weights):
            if rb <= ra or abs(wt) <= rel_tol * sig_scale * FOUR_PI * hi_r**3 / 3.0:
                continue
            charge = q_int * wt / total_w if total_w != 0 else wt
            comps.append(VolumeShell(ra, rb, float(charge)))

    comps.sort(key=lambda c: (c.radius if isinstance(c, SurfaceSphere) else c.a))
    return ChargeDistribution(tuple(comps))


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def potential_table(field: PotentialField) -> str:
    """CSV rows ``rho,U,dU_minus,dU_plus`` at every node (12 significant digits)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rho", "U", "dU_minus", "dU_plus"])
    r = field.grid.node_radii
    for i, rho in enumerate(r):
        if i == 0:
            dm = dp = 0.0
        else:
            dm = eval_radial_gradient(field, float(rho), "inner")
            dp = eval_radial_gradient(field, float(rho), "outer")
        w.writerow([f"{x:.12g}" for x in (rho, field.values[i], dm, dp)])
    return buf.getvalue()
