"""Forces on a small probe charge.

Radial scenarios report signed radial components (positive = outward).
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from .domain import ChargeDistribution, SurfaceSphere, VolumeShell
from .equilibrium import EquilibriumSolution
from .errors import KinkRadius
from .radial import PotentialField, eval_potential, eval_radial_gradient


def _radius(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(abs(x)) if x.ndim == 0 else float(np.linalg.norm(x))


def gradient_force(field: PotentialField, x, e: float) -> float:
    """Radial component of ``-e grad U`` at ``|x|``; undefined on kinks."""
    rho = _radius(x)
    if rho == 0.0:
        return 0.0
    d_in = eval_radial_gradient(field, rho, "inner")
    d_out = eval_radial_gradient(field, rho, "outer")
    tol = 1e-3 * max(abs(d_in), abs(d_out)) + 1e-9 * abs(field.far_coefficient)
    if abs(d_in - d_out) > tol:
        raise KinkRadius(f"U is not differentiable at rho={rho:.6g}; use mollified_force")
    return -e * 0.5 * (d_in + d_out)


def mollified_force(
    field: PotentialField,
    x,
    e: float,
    r_moll: float,
    normalization: str = "derived",
    n: int = 48,
) -> float:
    """Radial component of the ball-averaged force with kernel (x-y)/|x-y|.

    ``normalization="derived"`` uses 4/(r_moll |B|), which reproduces -e grad U
    exactly for affine U.  ``"printed"`` keeps the printed 4/|B| constant and is
    meant for diagnostics only.
    """
    d = _radius(x)
    s, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * r_moll * (s + 1.0)
    ws = 0.5 * r_moll * ws
    mu, wmu = np.polynomial.legendre.leggauss(n)
    S, MU = np.meshgrid(s, mu, indexing="ij")
    W = (ws * s**2)[:, None] * wmu[None, :]
    # y = x + s n, cos(angle between n and x_hat) = mu; radial part of (x-y)/|x-y| is -mu
    rho = np.sqrt(np.maximum(d**2 + S**2 + 2.0 * d * S * MU, 0.0))
    U = eval_potential(field, rho.ravel()).reshape(rho.shape)
    integral = -2.0 * math.pi * np.sum(W * U * MU)
    vol = 4.0 * math.pi * r_moll**3 / 3.0
    if normalization == "derived":
        const = 4.0 / (r_moll * vol)
    elif normalization == "printed":
        const = 4.0 / vol
    else:
        raise ValueError("normalization must be 'derived' or 'printed'")
    return float(e * const * integral)


def coulomb_force_outside(q: float, e: float, x):
    """``e q x / |x|^3``; a vector for vector ``x``, the radial component for a scalar."""
    xa = np.asarray(x, dtype=float)
    rho = _radius(xa)
    if xa.ndim == 0:
        return e * q / rho**2 * math.copysign(1.0, float(xa))
    return e * q * xa / rho**3


def enclosed_charge(charges: ChargeDistribution, rho: float) -> float:
    """Charge inside the closed ball of radius ``rho`` (surface spheres at ``rho`` excluded)."""
    total = 0.0
    for c in charges.components:
        if isinstance(c, SurfaceSphere):
            if c.radius < rho:
                total += c.charge
        elif isinstance(c, VolumeShell):
            if rho >= c.b:
                total += c.charge
            elif rho > c.a:
                total += c.charge * (rho**3 - c.a**3) / (c.b**3 - c.a**3)
    return total


def electric_only_interior_force(sol: EquilibriumSolution, x, e: float) -> float:
    """Radial component of ``-e grad U_0`` for the k-equilibrium charges.

    The Coulomb field of a radial distribution is ``Q_enc(rho)/rho^2``.
    """
    rho = _radius(x)
    if rho == 0.0:
        return 0.0
    return e * enclosed_charge(sol.charges, rho) / rho**2


def electric_only_force_formulas(r: float, q: float, k: float, e: float, rho: float):
    """(printed, derived) closed forms of the interior electric-only radial force.

    printed: -6 e q rho / (r (3 - 4 pi k^2 r^2))
    derived: -4 pi k^2 e q rho / (r (3 - 4 pi k^2 r^2)), i.e. e Q rho / r^3
    """
    den = r * (3.0 - 4.0 * math.pi * k**2 * r**2)
    return -6.0 * e * q * rho / den, -4.0 * math.pi * k**2 * e * q * rho / den


def collision_balance(Q: float, k: float, r: float) -> float:
    """M = 2 Q k^2 / |B(0, r)|; the collision force is M x."""
    return 2.0 * Q * k**2 / (4.0 * math.pi * r**3 / 3.0)


def force_profile(
    sol: EquilibriumSolution, radii, e: float = 1.0
) -> list[tuple[float, float, float, float]]:
    """Rows (rho, F_k, F_electric_only, F_collision); F_k is nan on kink radii."""
    r = sol.geometry.outer_radius
    M = collision_balance(sol.Q, sol.k, r)
    rows = []
    for rho in radii:
        rho = float(rho)
        try:
            fk = gradient_force(sol.potential, rho, e)
        except KinkRadius:
            fk = float("nan")
        fe = electric_only_interior_force(sol, rho, e)
        fc = M * rho if rho < r else 0.0
        rows.append((rho, fk, fe, fc))
    return rows


def force_table(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rho", "F_k", "F_electric_only", "F_collision"])
    for row in rows:
        w.writerow([f"{v:.12g}" for v in row])
    return buf.getvalue()
