"""k-potentials and equilibria on voxelised conductors.

Cells of a uniform box carry the unknowns.  The operator is the 7-point
discretisation of ``-(1/4pi) Lap - k^2 1_E`` scaled by the cell volume, so a
per-cell charge vector is its right-hand side.  Cells just outside the box
(ghosts) hold the monopole value ``A_far/|x|``, with the origin at the centre
of the conductor's bounding box.

The box operator with zero ghosts is diagonalised by the type-I sine
transform, which gives an exact fast solve for ``k = 0`` and a preconditioner
for everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dstn, idstn, next_fast_len

from .domain import VoxelSet
from .errors import IndefiniteForm, NoConvergence

FOUR_PI = 4.0 * math.pi
DEFAULT_PADDING = 0.25  # box margin per side, in conductor diameters


# ---------------------------------------------------------------------------
# Box geometry and operators
# ---------------------------------------------------------------------------


class VoxelBox:
    """Computational box around a voxel conductor."""

    def __init__(self, mask: VoxelSet, padding: float = DEFAULT_PADDING):
        occ = mask.occupancy
        if occ.ndim != 3 or not occ.any():
            raise ValueError("mask must be a non-empty 3D occupancy array")
        h = float(mask.spacing)
        idx = np.nonzero(occ)
        lo = np.array([i.min() for i in idx])
        hi = np.array([i.max() for i in idx]) + 1
        ext = hi - lo
        diameter = float(np.linalg.norm(ext)) * h
        pad = int(math.ceil(padding * diameter / h))
        shape = []
        offset = []
        for e in ext:
            n = next_fast_len(int(e) + 2 * pad + 1, real=True) - 1
            shape.append(n)
            offset.append((n - int(e)) // 2)
        self.spacing = h
        self.shape = tuple(shape)
        # box index = mask index - lo + offset
        self.shift = np.array(offset) - lo
        self.source_shape = occ.shape
        self.mask = np.zeros(self.shape, dtype=bool)
        self.mask[self._box_slices()] = occ[self._src_slices()]
        centre = (lo + hi - 1) / 2.0 + self.shift
        self.origin = -centre * h  # coordinates of box cell (0, 0, 0)
        self.padding_cells = pad
        self._eig = self._laplacian_eigenvalues()
        self._ghosts = self._ghost_values()

    # -- index maps between the caller's array and the box --------------------

    def _src_slices(self):
        out = []
        for d in range(3):
            lo = max(0, -int(self.shift[d]))
            hi = min(self.source_shape[d], self.shape[d] - int(self.shift[d]))
            out.append(slice(lo, hi))
        return tuple(out)

    def _box_slices(self):
        return tuple(
            slice(s.start + int(self.shift[d]), s.stop + int(self.shift[d]))
            for d, s in enumerate(self._src_slices())
        )

    def to_box(self, arr: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self._box_slices()] = arr[self._src_slices()]
        return out

    def from_box(self, arr: np.ndarray) -> np.ndarray:
        out = np.zeros(self.source_shape)
        out[self._src_slices()] = arr[self._box_slices()]
        return out

    def coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])

    # -- operators ------------------------------------------------------------

    def _laplacian_eigenvalues(self) -> np.ndarray:
        lam = [
            2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1)) for n in self.shape
        ]
        eig = lam[0][:, None, None] + lam[1][None, :, None] + lam[2][None, None, :]
        return self.spacing / FOUR_PI * eig

    def _ghost_values(self):
        """1/|x| on the six ghost layers, keyed by (axis, side)."""
        h = self.spacing
        ghosts = {}
        for axis in range(3):
            coords = [self.coordinates(d) for d in range(3)]
            for side, pos in ((0, self.origin[axis] - h),
                              (1, self.origin[axis] + h * self.shape[axis])):
                coords[axis] = np.array([pos])
                X, Y, Z = np.meshgrid(*coords, indexing="ij")
                ghosts[axis, side] = 1.0 / np.sqrt(X**2 + Y**2 + Z**2)
        return ghosts

    def apply_laplacian(self, u: np.ndarray) -> np.ndarray:
        """``(h/4pi)(6u - sum of neighbours)`` with zero ghosts."""
        out = 6.0 * u
        out[1:] -= u[:-1]
        out[:-1] -= u[1:]
        out[:, 1:] -= u[:, :-1]
        out[:, :-1] -= u[:, 1:]
        out[:, :, 1:] -= u[:, :, :-1]
        out[:, :, :-1] -= u[:, :, 1:]
        out *= self.spacing / FOUR_PI
        return out

    def apply(self, u: np.ndarray, k: float) -> np.ndarray:
        """Volume-scaled ``-(1/4pi) Lap_h u - k^2 1_E u`` with zero ghosts."""
        out = self.apply_laplacian(u)
        if k:
            out -= k**2 * self.spacing**3 * np.where(self.mask, u, 0.0)
        return out

    def laplace_solve(self, f: np.ndarray) -> np.ndarray:
        return idstn(dstn(f, type=1) / self._eig, type=1)

    def ghost_load(self, scale: float = 1.0) -> np.ndarray:
        """Right-hand side contributed by ghost values ``scale/|x|``."""
        out = np.zeros(self.shape)
        c = scale * self.spacing / FOUR_PI
        for (axis, side), g in self._ghosts.items():
            sl = [slice(None)] * 3
            sl[axis] = slice(0, 1) if side == 0 else slice(-1, None)
            out[tuple(sl)] += c * g
        return out

    def boundary_flux(self, u: np.ndarray, scale: float) -> float:
        """Outward flux ``(h/4pi) sum (u_face - u_ghost)`` through the box."""
        total = 0.0
        for (axis, side), g in self._ghosts.items():
            sl = [slice(None)] * 3
            sl[axis] = slice(0, 1) if side == 0 else slice(-1, None)
            total += float(np.sum(u[tuple(sl)] - scale * g))
        return self.spacing / FOUR_PI * total


# ---------------------------------------------------------------------------
# Preconditioned conjugate gradients
# ---------------------------------------------------------------------------


@dataclass
class CGInfo:
    iterations: int
    residual: float


def pcg(apply, rhs, precond, tol: float = 1e-8, maxiter: int = 10_000, x0=None):
    """Preconditioned CG that refuses indefinite operators.

    Raises IndefiniteForm when a search direction has ``p^T A p <= 0`` and
    NoConvergence when the relative residual stays above ``tol``.
    """
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), CGInfo(0, 0.0)
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    z = precond(r)
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        pAp = float(np.vdot(p, Ap))
        if not pAp > 0.0:
            raise IndefiniteForm("discrete k-form is not positive definite on this grid")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            return x, CGInfo(it, res)
        z = precond(r)
        rz_new = float(np.vdot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise NoConvergence(f"CG stopped at {maxiter} iterations, residual {res:.3g}")


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VoxelField:
    """Potential samples on the box; ``origin`` is the centre of cell (0, 0, 0)."""

    spacing: float
    origin: np.ndarray
    values: np.ndarray
    far_coefficient: float
    box: VoxelBox
    iterations: int = 0

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def on_mask(self) -> np.ndarray:
        """Potential restricted to the caller's mask array."""
        return self.box.from_box(self.values)

    def value_near(self, point) -> float:
        """Sample at the cell whose centre is nearest to ``point``."""
        idx = np.rint((np.asarray(point, dtype=float) - self.origin) / self.spacing)
        return float(self.values[tuple(idx.astype(int))])


def _solve_box(box: VoxelBox, rhs: np.ndarray, k: float, tol: float, maxiter: int):
    if k == 0:
        return box.laplace_solve(rhs), 0
    x, info = pcg(lambda u: box.apply(u, k), rhs, box.laplace_solve, tol, maxiter)
    return x, info.iterations


def solve_voxel_potential(
    mask: VoxelSet,
    charges: np.ndarray,
    k: float,
    padding: float = DEFAULT_PADDING,
    tol: float = 1e-8,
    maxiter: int = 10_000,
    box: VoxelBox | None = None,
) -> VoxelField:
    """k-potential of per-cell charges supported in ``mask``.

    The far coefficient satisfies ``A_far = q + k^2 h^3 sum_E U``.  ``U``
    depends affinely on ``A_far``, so two solves (charges with zero ghosts,
    unit ghosts without charges) fix it exactly.
    """
    charges = np.asarray(charges, dtype=float)
    if charges.shape != mask.occupancy.shape:
        raise ValueError("charges must have the mask's shape")
    if np.any(charges[~mask.occupancy] != 0.0):
        raise ValueError("charges must be supported in the mask")
    box = box if box is not None else VoxelBox(mask, padding)
    c = box.to_box(charges)
    q = math.fsum(charges[mask.occupancy])
    h3 = box.spacing**3
    if k == 0:
        U = box.laplace_solve(c + box.ghost_load(q))
        far, its = q, 0
    else:
        Ua, ia = _solve_box(box, c, k, tol, maxiter)
        Ub, ib = _solve_box(box, box.ghost_load(1.0), k, tol, maxiter)
        k2 = k**2 * h3
        den = 1.0 - k2 * float(np.sum(Ub[box.mask]))
        if not den > 0:
            raise IndefiniteForm("far-field consistency has no positive solution")
        far = (q + k2 * float(np.sum(Ua[box.mask]))) / den
        U = Ua + far * Ub
        its = ia + ib
    if not np.all(np.isfinite(U)):
        raise NoConvergence("non-finite potential")
    return VoxelField(box.spacing, box.origin, U, float(far), box, its)


def residual_check(field: VoxelField, charges: np.ndarray, k: float) -> float:
    """Max |operator(U) - charge| relative to max |charge|."""
    box = field.box
    r = box.apply(field.values, k) - box.ghost_load(field.far_coefficient) - box.to_box(charges)
    scale = max(float(np.abs(charges).max()), 1e-300)
    return float(np.abs(r).max()) / scale


# ---------------------------------------------------------------------------
# Capacity and equilibrium
# ---------------------------------------------------------------------------


def _exterior_harmonic(box: VoxelBox, tol: float, maxiter: int):
    """u = 1 on the mask, discrete harmonic outside, ghosts C_h/|x|.

    Returns (u, C_h, iterations) where C_h, the discrete capacity, is the far
    coefficient made consistent with the boundary flux.
    """
    ext = ~box.mask

    def apply(w):
        return np.where(ext, box.apply_laplacian(np.where(ext, w, 0.0)), 0.0)

    def precond(r):
        return np.where(ext, box.laplace_solve(np.where(ext, r, 0.0)), 0.0)

    one = box.mask.astype(float)
    rhs_a = np.where(ext, -box.apply_laplacian(one), 0.0)
    rhs_b = np.where(ext, box.ghost_load(1.0), 0.0)
    wa, ia = pcg(apply, rhs_a, precond, tol, maxiter)
    wb, ib = pcg(apply, rhs_b, precond, tol, maxiter)
    ua = one + wa
    fa = box.boundary_flux(ua, 0.0)
    fb = box.boundary_flux(wb, 1.0)
    C = fa / (1.0 - fb)
    return ua + C * wb, C, ia.iterations + ib.iterations


def voxel_capacity(
    mask: VoxelSet, padding: float = DEFAULT_PADDING, tol: float = 1e-8, maxiter: int = 10_000
) -> float:
    """Discrete capacity of a voxel conductor."""
    _, C, _ = _exterior_harmonic(VoxelBox(mask, padding), tol, maxiter)
    return C


def surface_cells(mask: VoxelSet | np.ndarray) -> np.ndarray:
    """Mask cells with at least one face neighbour outside the mask."""
    occ = mask.occupancy if isinstance(mask, VoxelSet) else np.asarray(mask, dtype=bool)
    padded = np.pad(occ, 1)
    inner = np.ones_like(occ)
    for axis in range(3):
        for step in (-1, 1):
            inner &= np.roll(padded, step, axis=axis)[1:-1, 1:-1, 1:-1]
    return occ & ~inner


@dataclass(frozen=True, eq=False)
class VoxelEquilibrium:
    charges: np.ndarray  # per cell, shaped like the mask array
    A: float
    capacity: float
    volume: float
    surface_charge: float
    interior_charge: float
    field: VoxelField
    iterations: int

    @property
    def q(self) -> float:
        return float(self.charges.sum())


def solve_voxel_equilibrium(
    mask: VoxelSet,
    q: float,
    k: float,
    padding: float = DEFAULT_PADDING,
    tol: float = 1e-8,
    maxiter: int = 10_000,
) -> VoxelEquilibrium:
    """Discrete equilibrium: U = A on the mask, charges from the operator.

    On the mask the potential is a constant A, so the screening term there is
    just ``-k^2 h^3 A``; off the mask there is no charge, hence U = A u with u
    the exterior harmonic function equal to 1 on the mask.  Summing the
    resulting cell charges gives ``q = A (C_h - k^2 |E_h|)``.
    """
    box = VoxelBox(mask, padding)
    u, C, its = _exterior_harmonic(box, tol, maxiter)
    h3 = box.spacing**3
    vol = float(box.mask.sum()) * h3
    denom = C - k**2 * vol
    if not denom > 0:
        raise IndefiniteForm(
            f"C_h - k^2|E_h| = {denom:.6g} <= 0; k exceeds the voxel bound {math.sqrt(C / vol):.6g}"
        )
    A = q / denom
    unit = box.apply_laplacian(u) - box.ghost_load(C) - k**2 * h3 * box.mask
    cells = np.where(box.mask, A * unit, 0.0)
    charges = box.from_box(cells)
    surf = surface_cells(mask)
    field = VoxelField(box.spacing, box.origin, A * u, float(A * C), box, its)
    return VoxelEquilibrium(
        charges=charges,
        A=float(A),
        capacity=float(C),
        volume=vol,
        surface_charge=float(charges[surf].sum()),
        interior_charge=float(charges[mask.occupancy & ~surf].sum()),
        field=field,
        iterations=its,
    )


def equilibrium_constancy(eq: VoxelEquilibrium, mask: VoxelSet, k: float, **kw) -> float:
    """Max relative deviation of an independent forward solve from A on the mask."""
    field = solve_voxel_potential(mask, eq.charges, k, **kw)
    vals = field.on_mask()[mask.occupancy]
    return float(np.abs(vals - eq.A).max() / abs(eq.A)) if eq.A else float(np.abs(vals).max())


def voxel_poincare_estimate(
    mask: VoxelSet, padding: float = DEFAULT_PADDING, iterations: int = 200, rtol: float = 1e-10
) -> float:
    """Surrogate for k(E): inverse power iteration on the quotient restricted to E.

    Each step solves the k = 0 problem for the density ``x`` on E with the
    monopole ghost ``(h^3 sum x)/|x|``.  The Rayleigh quotient of the final
    iterate is returned as ``sqrt((1/4pi) int |grad f|^2 / int_E f^2)``.
    """
    box = VoxelBox(mask, padding)
    h3 = box.spacing**3
    x = box.mask.astype(float)
    mu_old = np.inf
    for _ in range(iterations):
        load = h3 * x
        f = box.laplace_solve(load + box.ghost_load(float(load.sum())))
        # Rayleigh quotient: (f, f)_0 = load . f, int_E f^2 = h^3 sum_E f^2
        mu = float(np.sum(load * f)) / float(h3 * np.sum(f[box.mask] ** 2))
        x = np.where(box.mask, f, 0.0)
        x /= np.linalg.norm(x)
        if abs(mu - mu_old) <= rtol * mu:
            break
        mu_old = mu
    return math.sqrt(mu)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_mask(mask: VoxelSet, path) -> None:
    """Header ``nx ny nz spacing`` then run lengths, alternating, starting with empty cells."""
    occ = mask.occupancy.ravel(order="C")
    change = np.flatnonzero(np.diff(occ.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [occ.size]])
    runs = np.diff(bounds).tolist()
    if occ[0]:
        runs.insert(0, 0)
    nx, ny, nz = mask.occupancy.shape
    lines = [f"{nx} {ny} {nz} {mask.spacing!r}"]
    for i in range(0, len(runs), 16):
        lines.append(" ".join(str(r) for r in runs[i : i + 16]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mask(path) -> VoxelSet:
    tokens = Path(path).read_text().split()
    if len(tokens) < 4:
        raise ValueError(f"{path}: missing header 'nx ny nz spacing'")
    try:
        nx, ny, nz = (int(t) for t in tokens[:3])
        spacing = float(tokens[3])
        runs = [int(t) for t in tokens[4:]]
    except ValueError:
        raise ValueError(f"{path}: malformed mask file") from None
    if min(nx, ny, nz) <= 0 or not spacing > 0:
        raise ValueError(f"{path}: dimensions and spacing must be positive")
    if any(r < 0 for r in runs) or sum(runs) != nx * ny * nz:
        raise ValueError(f"{path}: run lengths must be non-negative and cover {nx * ny * nz} cells")
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    occ = np.repeat(values, runs).reshape((nx, ny, nz))
    return VoxelSet(spacing, occ)


def export_field(field: VoxelField, path) -> Path:
    """Write the values as little-endian float64 (C order) plus a ``.txt`` sidecar."""
    path = Path(path)
    field.values.astype("<f8").tofile(path)
    nx, ny, nz = field.shape
    ox, oy, oz = (float(v) for v in field.origin)
    sidecar = path.with_name(path.name + ".txt")
    sidecar.write_text(
        f"dims: {nx} {ny} {nz}\n"
        "dtype: float64 little-endian\n"
        "order: C (last index fastest)\n"
        f"spacing: {field.spacing!r}\n"
        f"origin: {ox!r} {oy!r} {oz!r}\n"
        f"far_coefficient: {field.far_coefficient!r}\n"
    )
    return sidecar


def load_field(path) -> tuple[np.ndarray, dict]:
    """Inverse of ``export_field``: (values, sidecar entries)."""
    path = Path(path)
    meta = {}
    for line in path.with_name(path.name + ".txt").read_text().splitlines():
        key, _, val = line.partition(":")
        meta[key.strip()] = val.strip()
    dims = tuple(int(t) for t in meta["dims"].split())
    values = np.fromfile(path, dtype="<f8").reshape(dims)
    return values, meta
